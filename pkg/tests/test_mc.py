import json
from dataclasses import replace

import pytest

from fundpricing.mc import (
    McDesign,
    run_jump_error_study,
    run_size_power_study,
    write_jump_error_csv,
    write_power_curves_csv,
    _ramp_weights,
    _simulate_rep,
)
from fundpricing.preaveraging import PreAvgConfig
from fundpricing.simulation import ObservedSeries


def small_jump_design(rounds=40):
    return replace(McDesign.jump_error_default(rounds=rounds),
                   n=4000, deltas=(20.0, 30.0, 60.0), train_sizes=(10,))


def small_power_design(rounds=30):
    return replace(McDesign.size_power_default(rounds=rounds),
                   n=4000, deltas=(30.0, 60.0), train_sizes=(20,),
                   terminal_fracs=(0.0, 0.4))


class TestDeterminism:
    def test_same_seed_same_cells(self):
        a = run_jump_error_study(small_jump_design())
        b = run_jump_error_study(small_jump_design())
        assert a.cells == b.cells

    def test_thread_count_does_not_change_results(self):
        a = run_jump_error_study(small_jump_design(), threads=1)
        b = run_jump_error_study(small_jump_design(), threads=2)
        assert a.cells == b.cells
        c = run_size_power_study(small_power_design(), threads=1)
        d = run_size_power_study(small_power_design(), threads=2)
        assert c.cells == d.cells

    def test_different_seed_changes_results(self):
        a = run_jump_error_study(small_jump_design())
        b = run_jump_error_study(replace(small_jump_design(), master_seed=1))
        assert a.cells != b.cells


class TestJumpErrorStudy:
    def test_cell_grid_complete(self):
        d = small_jump_design()
        r = run_jump_error_study(d)
        assert len(r.cells) == len(d.deltas) * (1 + len(d.train_sizes))
        for c in r.cells:
            assert c["mape"] >= 0 and c["mse_pct2"] >= 0
            assert c["rounds"] == d.rounds

    def test_regression_beats_raw_at_matched_window(self):
        d = small_jump_design(rounds=60)
        r = run_jump_error_study(d)
        raw = r.cell(estimator="preaverage", delta_s=30.0)
        reg = r.cell(estimator="regression", delta_s=30.0, n_train=10)
        assert reg["mape"] < raw["mape"]

    def test_json_round_trip(self, tmp_path):
        r = run_jump_error_study(small_jump_design())
        out = tmp_path / "res.json"
        r.to_json(out)
        payload = json.loads(out.read_text())
        assert payload["study"] == "jump_error"
        assert payload["design"]["n"] == 4000
        assert len(payload["cells"]) == len(r.cells)

    def test_csv_shape(self, tmp_path):
        r = run_jump_error_study(small_jump_design())
        out = tmp_path / "res.csv"
        write_jump_error_csv(r, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ("estimator,n_train,delta_s,mape,mape_se,mse_pct2,"
                            "bias,bias_se,rounds")
        assert len(lines) == 1 + len(r.cells)


class TestSizePowerStudy:
    def test_cell_grid_complete(self):
        d = small_power_design()
        r = run_size_power_study(d)
        assert len(r.cells) == len(d.deltas) * len(d.terminal_fracs)
        for c in r.cells:
            assert 0.0 <= c["rejection_rate"] <= 1.0
            assert c["se"] >= 0.0

    def test_power_not_below_size(self):
        d = small_power_design(rounds=40)
        r = run_size_power_study(d)
        for delta in d.deltas:
            size = r.cell(delta_s=delta, terminal_frac=0.0)["rejection_rate"]
            power = r.cell(delta_s=delta, terminal_frac=0.4)["rejection_rate"]
            assert power >= size

    def test_power_curve_csv(self, tmp_path):
        r = run_size_power_study(small_power_design())
        out = tmp_path / "curves.csv"
        write_power_curves_csv(r, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "delta_s,terminal_frac,rejection_rate,se,rounds"
        assert len(lines) == 1 + len(r.cells)

    def test_empty_grid_header_only(self, tmp_path):
        d = replace(small_power_design(), terminal_fracs=())
        r = run_size_power_study(d)
        out = tmp_path / "curves.csv"
        write_power_curves_csv(r, out)
        assert out.read_text().strip() == "delta_s,terminal_frac,rejection_rate,se,rounds"


class TestRampWeights:
    def test_full_weight_beyond_transition(self):
        d = replace(McDesign.size_power_default(rounds=1), n=4000)
        times, y, _, _ = _simulate_rep(d, "size_power", 0, 2)
        m = PreAvgConfig(d.block_s).block_length(ObservedSeries(times=times, y=y[0]))
        w = _ramp_weights(d, times, m)
        by_delta = dict(zip(d.deltas, w))
        assert by_delta[30.0] == pytest.approx(1.0)
        assert by_delta[600.0] == pytest.approx(1.0)
        # a 20s window's post block averages over part of the ramp
        assert 0.85 < by_delta[20.0] < 1.0

    def test_design_echo_contains_profile_fields(self):
        d = McDesign.size_power_default(rounds=5)
        assert d.vol_jump_enabled is False
        assert d.train_delta_s == 30.0
        r_design = replace(d, n=4000)
        res = run_size_power_study(replace(r_design, deltas=(30.0,),
                                           terminal_fracs=(0.0,)))
        assert res.design["vol_jump_enabled"] is False
        assert res.design["heston"]["annualization"] == d.heston.annualization
