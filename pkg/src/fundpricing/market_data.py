"""Tick-data pipeline: ingestion, event classification, descriptives, tests.

Reads transaction ticks from CSV, extracts event windows around scheduled
release times, classifies each event by whether trading was interrupted
shortly after the release, summarizes trading activity per class, and runs
the leave-one-out pricing test across events and window lengths.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cross_event import (
    FactorSpec,
    build_factors,
    fit_jump_regression,
    leave_one_out_plan,
    predict_jump,
)
from .inference import CriticalValueInputs, TestOutcome, test_event
from .preaveraging import EstimationError, PreAvgConfig, event_return, vol_bounds
from .simulation import ObservedSeries

#: Minimum trading gap (seconds) that marks an interrupted event.
BREAK_GAP_SECONDS = 4.99
#: Post-release window (seconds) scanned for qualifying gaps.
BREAK_DETECT_WINDOW_SECONDS = 180.0


class TickDataError(ValueError):
    """Malformed tick or event input files."""


@dataclass(frozen=True)
class TickRecord:
    ts_ns: int
    price: float


@dataclass
class BreakInfo:
    """Timing of trading interruptions found after a release."""

    time_to_first_break: float
    total_stop_time: float

    def to_record(self) -> dict:
        return {
            "time_to_first_break_s": self.time_to_first_break,
            "total_stop_time_s": self.total_stop_time,
        }


@dataclass
class EventRecord:
    """One news release joined with its observed price series."""

    event_id: str
    release_ts_ns: int
    surprise: float
    attention: float
    series: ObservedSeries | None = None
    cls: str = "regular"
    break_info: BreakInfo | None = None
    note: str = ""

    @property
    def tau(self) -> float:
        return self.release_ts_ns / 1e9


def load_ticks(path: Path | str, reversal_tolerance_ns: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Load a ``ts_ns,price`` CSV into timestamp and log-price arrays.

    Rows must be time-ordered up to ``reversal_tolerance_ns``; multiple
    trades sharing a nanosecond bucket are averaged into one log-price
    observation.  Malformed rows and nonpositive prices are reported with
    their line numbers.
    """
    path = Path(path)
    ts_list: list[int] = []
    px_list: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and [h.strip() for h in header[:2]] != ["ts_ns", "price"]:
            raise TickDataError(f"{path}: expected header 'ts_ns,price', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                ts = int(row[0])
                px = float(row[1])
            except (ValueError, IndexError) as exc:
                raise TickDataError(f"{path}:{lineno}: unparseable row {row!r}") from exc
            if not math.isfinite(px) or px <= 0:
                raise TickDataError(f"{path}:{lineno}: nonpositive price {px!r}")
            if ts_list and ts < ts_list[-1] - reversal_tolerance_ns:
                raise TickDataError(
                    f"{path}:{lineno}: timestamp {ts} reverses beyond tolerance"
                )
            ts_list.append(ts)
            px_list.append(px)
    if not ts_list:
        return np.array([], dtype=np.int64), np.array([])
    ts = np.array(ts_list, dtype=np.int64)
    logp = np.log(np.array(px_list))
    order = np.argsort(ts, kind="stable")
    ts, logp = ts[order], logp[order]
    uniq, inverse, counts = np.unique(ts, return_inverse=True, return_counts=True)
    sums = np.zeros(uniq.size)
    np.add.at(sums, inverse, logp)
    return uniq, sums / counts


def series_from_ticks(ts_ns: np.ndarray, logp: np.ndarray, source: dict | None = None
                      ) -> ObservedSeries:
    """Wrap tick arrays as an observed series with times in seconds."""
    return ObservedSeries(times=ts_ns / 1e9, y=logp, source=source or {"kind": "ticks"})


def classify_event(series: ObservedSeries, tau: float,
                   gap_threshold: float = BREAK_GAP_SECONDS,
                   detect_window: float = BREAK_DETECT_WINDOW_SECONDS,
                   ) -> tuple[str, BreakInfo | None]:
    """Classify a release by post-release trading gaps.

    Scans consecutive inter-trade gaps whose start falls inside
    ``[tau, tau + detect_window)``; the event is breaking when any such gap
    lasts at least ``gap_threshold`` seconds (a gap may end outside the
    window as long as it starts inside).  Reports the time from the release
    to the start of the first qualifying gap and the summed duration of all
    qualifying gaps.
    """
    t = series.times
    if t.size == 0 or t[-1] < tau:
        raise TickDataError("no post-release observations to classify")
    starts = t[:-1]
    gaps = np.diff(t)
    in_window = (starts >= tau) & (starts < tau + detect_window)
    qualifying = in_window & (gaps >= gap_threshold)
    if not np.any(qualifying):
        return "regular", None
    first = int(np.argmax(qualifying))
    info = BreakInfo(
        time_to_first_break=float(starts[first] - tau),
        total_stop_time=float(gaps[qualifying].sum()),
    )
    return "breaking", info


def _quantile_stats(values: np.ndarray) -> dict:
    med = float(np.median(values))
    return {
        "median": med,
        "q25": float(np.percentile(values, 25)),
        "q75": float(np.percentile(values, 75)),
        "mad": float(np.median(np.abs(values - med))),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


def descriptives(events: list[EventRecord], config: PreAvgConfig | None = None,
                 activity_window: float = 60.0) -> dict:
    """Per-class summary of trading activity around the releases.

    For each class: trades per second over the first minute after the
    release, the absolute one-minute pre-average event return (percent),
    and the volatility shift factor (square root of the ratio of average
    post-first-minute to pre-release short-window integrated variances).
    Classes without events are omitted.
    """
    config = config or PreAvgConfig()
    out: dict = {}
    for cls in ("regular", "breaking"):
        members = [e for e in events if e.cls == cls and e.series is not None]
        if not members:
            warnings.warn(f"no {cls} events; class omitted from descriptives",
                          stacklevel=2)
            continue
        tps, rets, shifts = [], [], []
        for ev in members:
            t = ev.series.times
            n_trades = int(np.sum((t >= ev.tau) & (t < ev.tau + activity_window)))
            tps.append(n_trades / activity_window)
            rets.append(abs(event_return(ev.series, ev.tau, activity_window, config).value) * 100.0)
            bounds = vol_bounds(ev.series, ev.tau, ev.tau + activity_window,
                                activity_window, config)
            pre = float(np.mean(bounds.iv30_pre))
            post = float(np.mean(bounds.iv30_post))
            shifts.append(math.sqrt(post / pre) if pre > 0 else float("nan"))
        out[cls] = {
            "n_events": len(members),
            "trades_per_second": _quantile_stats(np.array(tps)),
            "abs_event_return_pct": _quantile_stats(np.array(rets)),
            "volatility_shift": _quantile_stats(np.array(shifts)),
        }
    return out


@dataclass
class EventTestRow:
    event_id: str
    cls: str
    delta: float
    outcome: TestOutcome

    def to_record(self) -> dict:
        rec = {"event_id": self.event_id, "class": self.cls}
        rec.update(self.outcome.to_record())
        return rec


@dataclass
class EventTestReport:
    """Per-event outcomes plus class-by-window aggregates."""

    rows: list[EventTestRow]
    skipped: list[dict]
    alpha: float
    deltas: tuple[float, ...]

    def aggregate(self) -> list[dict]:
        out = []
        for cls in ("regular", "breaking"):
            for delta in self.deltas:
                cells = [r for r in self.rows if r.cls == cls and r.delta == delta]
                if not cells:
                    continue
                rejected = [r for r in cells if r.outcome.reject]
                overshoot = [r for r in rejected if r.outcome.overshoot]
                out.append({
                    "class": cls,
                    "delta_s": delta,
                    "n_events": len(cells),
                    "n_rejected": len(rejected),
                    "rejection_pct": 100.0 * len(rejected) / len(cells),
                    "overshoot_pct": (100.0 * len(overshoot) / len(rejected)
                                      if rejected else None),
                })
        return out

    def scatter_rows(self) -> list[dict]:
        return [
            {
                "event_id": r.event_id,
                "class": r.cls,
                "delta_s": r.delta,
                "jump_estimate": r.outcome.jump_estimate,
                "event_return": r.outcome.event_return,
                "critical": r.outcome.critical,
                "reject": r.outcome.reject,
            }
            for r in self.rows
        ]


def run_event_tests(events: list[EventRecord], deltas, alpha: float = 0.01,
                    config: PreAvgConfig | None = None,
                    factor_spec: FactorSpec | None = None) -> EventTestReport:
    """Leave-one-out pricing test for every event and window length.

    For each tested event, the jump loading is fitted on all regular events
    except the tested one (interrupted events never train), the tested
    event's factors are standardized with the training statistics, and the
    event return is compared against the predicted jump at the feasible
    critical value.  Events failing a precondition are reported under
    ``skipped`` with the reason, never silently dropped.
    """
    config = config or PreAvgConfig()
    factor_spec = factor_spec or FactorSpec()
    rows: list[EventTestRow] = []
    skipped: list[dict] = []
    deltas = tuple(float(d) for d in deltas)
    usable = [e for e in events if e.series is not None]
    for ev in events:
        if ev.series is None:
            skipped.append({"event_id": ev.event_id,
                            "reason": ev.note or "no tick data"})
    for ev in usable:
        try:
            train = leave_one_out_plan(usable, ev.event_id, factor_spec)
        except Exception as exc:
            skipped.append({"event_id": ev.event_id, "reason": str(exc)})
            continue
        for delta in deltas:
            try:
                factors = build_factors(train, factor_spec)
                returns = np.array([
                    event_return(tr.series, tr.tau, delta, config).value for tr in train
                ])
                fit = fit_jump_regression(returns, factors)
                jump_est, f_l1 = predict_jump(fit, ev)
                ret = event_return(ev.series, ev.tau, delta, config)
                bounds = vol_bounds(ev.series, ev.tau, ev.tau + delta, delta, config)
                inputs = CriticalValueInputs.from_bounds(
                    alpha, delta, bounds, n=ev.series.n,
                    n_train=len(train), c_e=fit.c_e_loo, f_l1=f_l1,
                )
                outcome = test_event(ret.value, jump_est, inputs, feasible=True)
            except (EstimationError, TickDataError) as exc:
                skipped.append({"event_id": ev.event_id, "delta_s": delta,
                                "reason": str(exc)})
                continue
            rows.append(EventTestRow(event_id=ev.event_id, cls=ev.cls,
                                     delta=delta, outcome=outcome))
    return EventTestReport(rows=rows, skipped=skipped, alpha=alpha, deltas=deltas)


def load_events(events_csv: Path | str, manifest_json: Path | str,
                window_seconds: float = 10800.0,
                min_side_seconds: float = 5400.0) -> list[EventRecord]:
    """Join the events table with tick files via the manifest.

    ``events_csv`` has header ``event_id,release_ts_ns,surprise_pp,attention``;
    the manifest maps event ids to tick CSV paths (relative paths resolve
    against the manifest's directory).  Each event's series is the ticks in
    a window centered on the release; events without enough data on both
    sides keep ``series=None`` so the pipeline can report them as skipped.
    """
    events_csv = Path(events_csv)
    manifest_json = Path(manifest_json)
    try:
        manifest = json.loads(manifest_json.read_text())
    except json.JSONDecodeError as exc:
        raise TickDataError(f"{manifest_json}: invalid JSON manifest") from exc
    events: list[EventRecord] = []
    with open(events_csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"event_id", "release_ts_ns", "surprise_pp", "attention"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise TickDataError(
                f"{events_csv}: header must contain {sorted(required)}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                ev = EventRecord(
                    event_id=row["event_id"],
                    release_ts_ns=int(row["release_ts_ns"]),
                    surprise=float(row["surprise_pp"]),
                    attention=float(row["attention"]),
                )
            except ValueError as exc:
                raise TickDataError(f"{events_csv}:{lineno}: bad row {row!r}") from exc
            events.append(ev)
    for ev in events:
        tick_path = manifest.get(ev.event_id)
        if tick_path is None:
            ev.note = "event missing from manifest"
            continue
        tick_path = Path(tick_path)
        if not tick_path.is_absolute():
            tick_path = manifest_json.parent / tick_path
        ts, logp = load_ticks(tick_path)
        if ts.size == 0:
            ev.note = "empty tick file"
            continue
        tau_ns = ev.release_ts_ns
        half = int(window_seconds / 2 * 1e9)
        lo = np.searchsorted(ts, tau_ns - half, side="left")
        hi = np.searchsorted(ts, tau_ns + half, side="right")
        ts_w, logp_w = ts[lo:hi], logp[lo:hi]
        if ts_w.size < 10:
            ev.note = "fewer than 10 ticks in the event window"
            continue
        span_pre = (tau_ns - ts_w[0]) / 1e9
        span_post = (ts_w[-1] - tau_ns) / 1e9
        if span_pre < min_side_seconds or span_post < min_side_seconds:
            ev.note = (f"window covers only {span_pre:.0f}s before / "
                       f"{span_post:.0f}s after the release")
            continue
        ev.series = series_from_ticks(ts_w, logp_w, {"kind": "ticks", "file": str(tick_path)})
        ev.cls, ev.break_info = classify_event(ev.series, ev.tau)
    return events
