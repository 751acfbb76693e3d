import json
import math

import numpy as np
import pytest

from fundpricing.market_data import (
    BreakInfo,
    EventRecord,
    TickDataError,
    classify_event,
    descriptives,
    load_events,
    load_ticks,
    run_event_tests,
    series_from_ticks,
)
from fundpricing.simulation import ObservedSeries


def write_ticks(path, rows):
    path.write_text("ts_ns,price\n" + "".join(f"{t},{p}\n" for t, p in rows))


class TestLoadTicks:
    def test_empty_file(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("ts_ns,price\n")
        ts, logp = load_ticks(f)
        assert ts.size == 0 and logp.size == 0

    def test_three_rows(self, tmp_path):
        f = tmp_path / "t.csv"
        write_ticks(f, [(1_000, 100.0), (2_000, 101.0), (3_000, 100.5)])
        ts, logp = load_ticks(f)
        assert ts.tolist() == [1000, 2000, 3000]
        np.testing.assert_allclose(logp, np.log([100.0, 101.0, 100.5]))

    def test_same_nanosecond_trades_averaged_in_logs(self, tmp_path):
        f = tmp_path / "t.csv"
        write_ticks(f, [(1_000, 100.0), (2_000, 101.0), (2_000, 103.0)])
        ts, logp = load_ticks(f)
        assert ts.tolist() == [1000, 2000]
        assert logp[1] == pytest.approx((math.log(101.0) + math.log(103.0)) / 2)

    def test_unparseable_row_reports_line(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("ts_ns,price\n1000,100.0\nnot_a_ts,nan\n")
        with pytest.raises(TickDataError, match=":3:"):
            load_ticks(f)

    def test_nonpositive_price_rejected(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("ts_ns,price\n1000,0.0\n")
        with pytest.raises(TickDataError, match="nonpositive"):
            load_ticks(f)

    def test_time_reversal_beyond_tolerance(self, tmp_path):
        f = tmp_path / "t.csv"
        write_ticks(f, [(2_000, 100.0), (1_000, 100.0)])
        with pytest.raises(TickDataError, match="reverses"):
            load_ticks(f)
        ts, _ = load_ticks(f, reversal_tolerance_ns=2_000)
        assert ts.tolist() == [1000, 2000]

    def test_bad_header(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("time,px\n1,100\n")
        with pytest.raises(TickDataError, match="header"):
            load_ticks(f)


def gap_series(tau, gap_start_offset, gap_length, rate=2.0, span=400.0):
    """Regular trading at `rate`/s with one exact gap inserted."""
    t = np.arange(-span, span, 1.0 / rate) + tau
    gap_lo = tau + gap_start_offset
    if gap_length > 0:
        keep = (t < gap_lo) | (t > gap_lo + gap_length)
        t = np.unique(np.concatenate([t[keep], [gap_lo, gap_lo + gap_length]]))
    return ObservedSeries(times=t, y=np.zeros(t.size))


class TestClassifyEvent:
    def test_break_record_replica(self):
        # synthetic replica of a documented interruption: last trade 1.913 s
        # after the release, next trade 5.015 s later
        s = gap_series(1_000.0, 1.913, 5.015)
        cls, info = classify_event(s, 1_000.0)
        assert cls == "breaking"
        assert info.time_to_first_break == pytest.approx(1.913, abs=1e-9)
        assert info.total_stop_time == pytest.approx(5.015, abs=1e-9)

    def test_continuous_trading_is_regular(self):
        s = gap_series(1_000.0, 50.0, 0.0)
        cls, info = classify_event(s, 1_000.0)
        assert cls == "regular" and info is None

    def test_threshold_is_inclusive(self):
        s = gap_series(1_000.0, 10.0, 4.99)
        cls, info = classify_event(s, 1_000.0)
        assert cls == "breaking"
        s = gap_series(1_000.0, 10.0, 4.98)
        cls, _ = classify_event(s, 1_000.0)
        assert cls == "regular"

    def test_gap_before_release_ignored(self):
        s = gap_series(1_000.0, -30.0, 8.0)
        cls, _ = classify_event(s, 1_000.0)
        assert cls == "regular"

    def test_gap_outside_detection_window_ignored(self):
        s = gap_series(1_000.0, 200.0, 8.0)
        cls, _ = classify_event(s, 1_000.0)
        assert cls == "regular"

    def test_gap_straddling_window_end_counts_if_started_inside(self):
        s = gap_series(1_000.0, 179.0, 10.0)
        cls, info = classify_event(s, 1_000.0)
        assert cls == "breaking"
        assert info.time_to_first_break == pytest.approx(179.0, abs=0.5)

    def test_multiple_gaps_summed(self):
        tau = 1_000.0
        t = np.arange(tau - 400.0, tau + 400.0, 0.5)
        keep = ~(((t > tau + 10.0) & (t < tau + 16.0))
                 | ((t > tau + 30.0) & (t < tau + 37.0)))
        s = ObservedSeries(times=t[keep], y=np.zeros(int(keep.sum())))
        cls, info = classify_event(s, tau)
        assert cls == "breaking"
        assert info.time_to_first_break == pytest.approx(10.0, abs=1e-9)
        # grid trades sit at 10.0 and 16.0, 30.0 and 37.0: gaps 6.0 and 7.0
        assert info.total_stop_time == pytest.approx(6.0 + 7.0, abs=1e-9)

    def test_no_post_release_data(self):
        t = np.arange(0.0, 100.0, 0.5)
        s = ObservedSeries(times=t, y=np.zeros(t.size))
        with pytest.raises(TickDataError):
            classify_event(s, 500.0)


def synthetic_event(event_id, cls, seed, surprise, attention, n=21601,
                    jump=0.0, sigma2=1e-3, q=1e-5):
    rng = np.random.default_rng(seed)
    window, tau = 10800.0, 5400.0
    dt = window / (n - 1)
    t = np.arange(n) * dt
    sigma_step = math.sqrt(sigma2 * dt / (365 * 24 * 3600.0))
    x = np.cumsum(rng.normal(0, sigma_step, n))
    x += np.where(t >= tau, jump, 0.0)
    y = x + rng.normal(0, q, n)
    series = ObservedSeries(times=t, y=y)
    ev = EventRecord(event_id=event_id, release_ts_ns=int(tau * 1e9),
                     surprise=surprise, attention=attention, series=series, cls=cls)
    return ev


class TestDescriptives:
    def test_single_event_quantiles_collapse(self):
        ev = synthetic_event("e1", "regular", 0, 0.1, 50.0)
        with pytest.warns(UserWarning, match="no breaking events"):
            out = descriptives([ev])
        stats = out["regular"]["trades_per_second"]
        assert stats["median"] == stats["min"] == stats["max"]
        assert out["regular"]["n_events"] == 1
        assert "breaking" not in out

    def test_two_class_fixture(self):
        events = [
            synthetic_event("r1", "regular", 1, 0.0, 40.0),
            synthetic_event("r2", "regular", 2, 0.1, 50.0),
            synthetic_event("b1", "breaking", 3, 0.3, 60.0, jump=0.01),
            synthetic_event("b2", "breaking", 4, 0.2, 70.0, jump=-0.02),
        ]
        out = descriptives(events)
        assert out["regular"]["n_events"] == 2
        assert out["breaking"]["n_events"] == 2
        # breaking events carry the larger absolute one-minute returns
        assert (out["breaking"]["abs_event_return_pct"]["median"]
                > out["regular"]["abs_event_return_pct"]["median"])

    def test_constant_volatility_shift_near_one(self):
        ev = synthetic_event("e1", "regular", 5, 0.1, 50.0)
        out = descriptives([ev])
        assert out["regular"]["volatility_shift"]["median"] == pytest.approx(1.0, abs=0.25)


class TestRunEventTests:
    def build_sample(self, n_reg=12, n_brk=3, mispriced=()):
        events = []
        rng = np.random.default_rng(42)
        for i in range(n_reg):
            s = float(rng.normal(0, 1))
            events.append(synthetic_event(
                f"r{i}", "regular", 100 + i, s, float(rng.uniform(30, 70)),
                jump=0.01 * s))
        for i in range(n_brk):
            s = float(rng.normal(0, 1))
            jump = 0.01 * s
            shift = 0.004 * math.copysign(1.0, jump) if f"b{i}" in mispriced else 0.0
            ev = synthetic_event(f"b{i}", "breaking", 200 + i, s,
                                 float(rng.uniform(30, 70)), jump=jump + shift)
            events.append(ev)
        return events

    def test_report_partitions_events(self):
        events = self.build_sample()
        events.append(EventRecord(event_id="missing", release_ts_ns=0,
                                  surprise=0.0, attention=50.0, series=None,
                                  note="no tick data"))
        report = run_event_tests(events, deltas=(30.0,), alpha=0.01)
        tested_ids = {r.event_id for r in report.rows}
        skipped_ids = {s["event_id"] for s in report.skipped}
        assert tested_ids | skipped_ids == {e.event_id for e in events}
        assert tested_ids.isdisjoint(skipped_ids)
        agg = report.aggregate()
        counts = {(a["class"], a["delta_s"]): a["n_events"] for a in agg}
        assert counts[("regular", 30.0)] == 12
        assert counts[("breaking", 30.0)] == 3

    def test_mispriced_breaking_events_rejected_as_overshoot(self):
        events = self.build_sample(mispriced=("b0", "b1", "b2"))
        report = run_event_tests(events, deltas=(30.0,), alpha=0.01)
        brk = [r for r in report.rows if r.cls == "breaking"]
        rejected = [r for r in brk if r.outcome.reject]
        assert len(rejected) == 3
        assert all(r.outcome.overshoot for r in rejected)
        reg = [r for r in report.rows if r.cls == "regular"]
        assert sum(r.outcome.reject for r in reg) == 0

    def test_scatter_rows_shape(self):
        events = self.build_sample()
        report = run_event_tests(events, deltas=(30.0, 60.0), alpha=0.01)
        rows = report.scatter_rows()
        assert len(rows) == len(report.rows)
        assert {"event_id", "class", "delta_s", "jump_estimate", "event_return",
                "critical", "reject"} <= set(rows[0])


class TestLoadEvents:
    def make_inputs(self, tmp_path, tau_ns=5_400_000_000_000):
        rng = np.random.default_rng(0)
        rows = []
        t = 0
        while t < 2 * tau_ns / 1e9:
            rows.append((int(t * 1e9), 100.0 * math.exp(rng.normal(0, 1e-4))))
            t += 0.5
        tick_file = tmp_path / "ticks_e1.csv"
        write_ticks(tick_file, rows)
        events_csv = tmp_path / "events.csv"
        events_csv.write_text(
            "event_id,release_ts_ns,surprise_pp,attention\n"
            f"e1,{tau_ns},0.2,55\n"
            f"e2,{tau_ns},0.1,45\n"
        )
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"e1": "ticks_e1.csv"}))
        return events_csv, manifest

    def test_join_and_window_extraction(self, tmp_path):
        events_csv, manifest = self.make_inputs(tmp_path)
        events = load_events(events_csv, manifest, window_seconds=7200.0,
                             min_side_seconds=3000.0)
        by_id = {e.event_id: e for e in events}
        assert by_id["e1"].series is not None
        assert by_id["e1"].cls == "regular"
        assert by_id["e2"].series is None
        assert "manifest" in by_id["e2"].note

    def test_short_session_skipped_with_reason(self, tmp_path):
        events_csv, manifest = self.make_inputs(tmp_path)
        events = load_events(events_csv, manifest, window_seconds=7200.0,
                             min_side_seconds=5_000_000.0)
        assert events[0].series is None
        assert "window covers only" in events[0].note

    def test_bad_events_header(self, tmp_path):
        _, manifest = self.make_inputs(tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("id,when\n1,2\n")
        with pytest.raises(TickDataError, match="header"):
            load_events(bad, manifest)

    def test_bad_manifest(self, tmp_path):
        events_csv, _ = self.make_inputs(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(TickDataError, match="manifest"):
            load_events(events_csv, bad)
