"""Event-window price simulation.

Simulates the latent (efficient) log-price as a Heston-type stochastic
volatility diffusion with a single jump in price and in volatility at a
scheduled announcement time, then layers on the two observation frictions
seen in transaction data: i.i.d. microstructure noise and a systematic
transition component that makes the observed price adjust gradually over a
fixed wall-clock window after the announcement.

All simulators are pure functions of their parameters and a seed, so they
can be called concurrently; identical seeds give bit-identical output.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(func):
            return func

        return deco


#: Seconds per year under the trading-time convention (252 days x 6.5 hours).
TRADING_SECONDS_PER_YEAR = 252 * 6.5 * 3600.0
#: Seconds per year under the calendar-time convention.
CALENDAR_SECONDS_PER_YEAR = 365.0 * 24.0 * 3600.0


class SimulationError(ValueError):
    """Invalid simulation parameters or inconsistent specs."""


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise SimulationError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class HestonParams:
    """Square-root stochastic-variance parameters, annualized.

    ``annualization`` converts seconds of event-window time into years, so
    a variance of ``theta`` per year contributes ``theta * dt / annualization``
    over a step of ``dt`` seconds.  The convention is configurable because
    different data sources imply different effective trading years.
    """

    kappa: float = 5.0
    theta: float = 0.0225
    vsigma: float = 0.4
    rho: float = -math.sqrt(0.5)
    v0: float = 0.0225
    annualization: float = TRADING_SECONDS_PER_YEAR

    def __post_init__(self) -> None:
        for name in ("kappa", "theta", "vsigma", "rho", "v0", "annualization"):
            _require_finite(name, getattr(self, name))
        if self.kappa < 0 or self.theta < 0 or self.vsigma < 0 or self.v0 < 0:
            raise SimulationError("kappa, theta, vsigma, v0 must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise SimulationError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.annualization <= 0:
            raise SimulationError("annualization must be positive")


@dataclass(frozen=True)
class JumpSpec:
    """One price jump with an accompanying (decaying) variance jump.

    ``tau`` is the event time in seconds from the window start.  ``vol_jump``
    is the instantaneous addition to annualized variance at ``tau``; it decays
    at rate ``vol_jump_decay`` (per year).  ``vol_jump_scale`` records the
    dimensionless multiple of the long-run variance used by randomized
    designs (zero when not applicable).
    """

    tau: float
    jump_size: float
    vol_jump: float = 0.0
    vol_jump_decay: float = 0.0
    vol_jump_scale: float = 0.0

    def __post_init__(self) -> None:
        for name in ("tau", "jump_size", "vol_jump", "vol_jump_decay"):
            _require_finite(name, getattr(self, name))
        if self.tau <= 0:
            raise SimulationError("tau must be positive (strictly inside the window)")
        if self.vol_jump < 0 or self.vol_jump_decay < 0:
            raise SimulationError("vol_jump and vol_jump_decay must be nonnegative")


@dataclass(frozen=True)
class TransitionSpec:
    """Shape of the post-event adjustment of observed prices.

    Over ``[tau, tau_bar)`` the observed price deviates from the efficient
    price by a power-law fade of the initial underreaction (fraction ``eta``
    of the jump, exponent ``theta_pn``) plus a linear ramp towards
    ``terminal_dev``.  The deviation is exactly ``terminal_dev`` from
    ``tau_bar`` onwards and exactly zero before ``tau``.  With
    ``terminal_dev == 0`` the price has fully adjusted at ``tau_bar``.
    """

    eta: float = 1.0
    theta_pn: float = 0.45
    tau_bar: float = 0.0
    terminal_dev: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eta", "theta_pn", "tau_bar", "terminal_dev"):
            _require_finite(name, getattr(self, name))
        if not 0.0 <= self.eta <= 1.0:
            raise SimulationError("eta must lie in [0, 1]")
        if not 0.0 < self.theta_pn < 0.5:
            raise SimulationError("theta_pn must lie in (0, 0.5), endpoints excluded")


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. Gaussian microstructure noise with standard deviation ``q``."""

    q: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("q", self.q)
        if self.q < 0:
            raise SimulationError("q must be nonnegative")


@dataclass
class EfficientPath:
    """Latent log-price and spot-variance path on a regular grid."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    jump: JumpSpec

    @property
    def n(self) -> int:
        return self.times.size


@dataclass
class ObservedSeries:
    """Discretely observed noisy log-prices.

    ``source`` is a free-form dict describing where the series came from
    (generating specs for simulations, file path for tick data).
    """

    times: np.ndarray
    y: np.ndarray
    source: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.size

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.times.shape != self.y.shape:
            raise SimulationError("times and y must have identical shape")
        if self.times.size >= 2 and not np.all(np.diff(self.times) > 0):
            raise SimulationError("times must be strictly increasing")


def transition_value(t, jump: JumpSpec, spec: TransitionSpec):
    """Systematic deviation of the observed from the efficient log-price.

    Returns 0 for ``t < tau``, ``terminal_dev`` for ``t >= tau_bar``, and on
    ``[tau, tau_bar)`` the power-law fade of the initial underreaction plus a
    linear blend towards ``terminal_dev``::

        H(t) = -eta * J * (1 - w**theta_pn) + w * terminal_dev,
        w = (t - tau) / (tau_bar - tau)

    Accepts scalars or arrays in ``t``; total over valid specs.
    """
    if spec.tau_bar <= jump.tau:
        raise SimulationError(
            f"tau_bar ({spec.tau_bar}) must exceed the jump time ({jump.tau})"
        )
    t_arr = np.asarray(t, dtype=float)
    w = (t_arr - jump.tau) / (spec.tau_bar - jump.tau)
    with np.errstate(invalid="ignore"):
        fade = -spec.eta * jump.jump_size * (1.0 - np.power(np.clip(w, 0.0, 1.0), spec.theta_pn))
    inside = fade + np.clip(w, 0.0, 1.0) * spec.terminal_dev
    out = np.where(w < 0.0, 0.0, np.where(w >= 1.0, spec.terminal_dev, inside))
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


@njit(cache=True, nogil=True)
def _euler_kernel(z_v, z_x, dt_years, kappa, theta, vsigma, v0,
                  jump_idx, jump_sizes, vol_jumps, vol_decay):  # pragma: no cover - jit
    n_paths, n_steps = z_v.shape
    x = np.zeros((n_paths, n_steps + 1))
    v = np.empty((n_paths, n_steps + 1))
    sqrt_dt = math.sqrt(dt_years)
    decay_step = math.exp(-vol_decay * dt_years)
    for p in range(n_paths):
        cir = v0
        vj = 0.0
        v[p, 0] = max(cir, 0.0)
        xt = 0.0
        for i in range(1, n_steps + 1):
            zv = z_v[p, i - 1]
            cir_pos = max(cir, 0.0)
            spot = cir_pos + vj
            xt += math.sqrt(spot) * sqrt_dt * z_x[p, i - 1]
            cir = cir + kappa * (theta - cir_pos) * dt_years \
                + vsigma * math.sqrt(cir_pos) * sqrt_dt * zv
            if i == jump_idx:
                xt += jump_sizes[p]
                vj = vol_jumps[p]
            elif i > jump_idx:
                vj *= decay_step
            v[p, i] = max(cir, 0.0) + vj
            x[p, i] = xt
    return x, v


def _euler_kernel_numpy(z_v, z_x, dt_years, kappa, theta, vsigma, v0,
                        jump_idx, jump_sizes, vol_jumps, vol_decay):
    """Pure-numpy fallback: identical recursion, vectorized across paths."""
    n_paths, n_steps = z_v.shape
    x = np.zeros((n_paths, n_steps + 1))
    v = np.empty((n_paths, n_steps + 1))
    sqrt_dt = math.sqrt(dt_years)
    decay_step = math.exp(-vol_decay * dt_years)
    cir = np.full(n_paths, v0)
    vj = np.zeros(n_paths)
    v[:, 0] = np.maximum(cir, 0.0)
    xt = np.zeros(n_paths)
    for i in range(1, n_steps + 1):
        cir_pos = np.maximum(cir, 0.0)
        spot = cir_pos + vj
        xt = xt + np.sqrt(spot) * sqrt_dt * z_x[:, i - 1]
        cir = cir + kappa * (theta - cir_pos) * dt_years \
            + vsigma * np.sqrt(cir_pos) * sqrt_dt * z_v[:, i - 1]
        if i == jump_idx:
            xt = xt + jump_sizes
            vj = vol_jumps.copy()
        elif i > jump_idx:
            vj = vj * decay_step
        v[:, i] = np.maximum(cir, 0.0) + vj
        x[:, i] = xt
    return x, v


def simulate_path_group(params: HestonParams, n: int, window: float,
                        jump_sizes: np.ndarray, vol_jumps: np.ndarray,
                        vol_jump_decay: float, tau: float, q: float,
                        rng: np.random.Generator):
    """Simulate a batch of independent paths sharing one event time.

    Returns ``(times, x, v, y)`` where the array rows index paths.  ``y`` is
    ``x`` plus i.i.d. Gaussian noise with standard deviation ``q`` (the
    transition component is added by the caller, since it depends on each
    path's jump).  The grid has ``n + 1`` points including both endpoints.
    All randomness comes from ``rng``, so the output is a deterministic
    function of the generator state.
    """
    if n < 2:
        raise SimulationError(f"n must be at least 2, got {n}")
    if window <= 0:
        raise SimulationError("window must be positive")
    if not 0 < tau < window:
        raise SimulationError("tau must lie strictly inside the window")
    jump_sizes = np.ascontiguousarray(jump_sizes, dtype=float)
    vol_jumps = np.ascontiguousarray(vol_jumps, dtype=float)
    n_paths = jump_sizes.size
    dt = window / n
    dt_years = dt / params.annualization
    jump_idx = int(round(tau / dt))
    z_v = rng.standard_normal((n_paths, n))
    z_2 = rng.standard_normal((n_paths, n))
    rho_c = math.sqrt(max(0.0, 1.0 - params.rho * params.rho))
    z_x = params.rho * z_v + rho_c * z_2
    kernel = _euler_kernel if HAVE_NUMBA else _euler_kernel_numpy
    x, v = kernel(z_v, z_x, dt_years, params.kappa, params.theta, params.vsigma,
                  params.v0, jump_idx, jump_sizes, vol_jumps, float(vol_jump_decay))
    if q > 0:
        y = x + q * rng.standard_normal((n_paths, n + 1))
    else:
        y = x.copy()
    times = np.arange(n + 1) * dt
    return times, x, v, y


def simulate_efficient_path(params: HestonParams, jump: JumpSpec, n: int,
                            window: float, seed: int) -> EfficientPath:
    """Simulate one efficient log-price path.

    Euler discretization on ``n`` steps over ``[0, window]`` seconds with full
    truncation of the square-root variance, plus the deterministic decaying
    variance component added on top of the diffusive variance after the jump.
    """
    rng = np.random.default_rng(seed)
    times, x, v, _ = simulate_path_group(
        params, n, window,
        jump_sizes=np.array([jump.jump_size]),
        vol_jumps=np.array([jump.vol_jump]),
        vol_jump_decay=jump.vol_jump_decay,
        tau=jump.tau, q=0.0, rng=rng,
    )
    return EfficientPath(times=times, x=x[0], v=v[0], jump=jump)


def observe(path: EfficientPath, jump: JumpSpec, trans: TransitionSpec,
            noise: NoiseSpec, seed: int) -> ObservedSeries:
    """Turn an efficient path into a noisy observed series.

    ``y_i = x(t_i) + u_i + H(t_i)`` with ``u_i`` i.i.d. Gaussian(0, q^2).
    Raises if ``jump`` and the path's generating jump disagree on the event
    time (the transition must be anchored at the same tau).
    """
    if jump.tau != path.jump.tau:
        raise SimulationError(
            f"jump tau {jump.tau} does not match the path's tau {path.jump.tau}"
        )
    rng = np.random.default_rng(seed)
    u = rng.normal(0.0, noise.q, size=path.x.size) if noise.q > 0 else np.zeros(path.x.size)
    h = transition_value(path.times, jump, trans)
    y = path.x + u + h
    source = {
        "kind": "simulation",
        "jump": asdict(jump),
        "transition": asdict(trans),
        "noise": asdict(noise),
        "seed": int(seed),
    }
    return ObservedSeries(times=path.times.copy(), y=y, source=source)


@dataclass(frozen=True)
class EventDesign:
    """Randomized per-event draw used by the Monte Carlo studies.

    The efficient jump is ``jump_loading`` times a Gaussian factor; the
    variance jump is a uniform multiple of the long-run variance.
    """

    factor: float
    jump: JumpSpec
    transition: TransitionSpec


def sample_event_design(rng: np.random.Generator, tau: float, *,
                        jump_loading: float = 0.3, factor_sd: float = 0.03,
                        vol_jump_scale_lo: float = 4.0, vol_jump_scale_hi: float = 16.0,
                        vol_jump_decay: float = 2500.0, theta: float = 0.0225,
                        vol_jump_enabled: bool = True, eta: float = 1.0,
                        theta_pn: float = 0.45, transition_s: float = 30.0,
                        terminal_dev: float = 0.0) -> EventDesign:
    """Draw one event's factor, jumps and transition from the study design."""
    f = rng.normal(0.0, factor_sd)
    c_j = rng.uniform(vol_jump_scale_lo, vol_jump_scale_hi)
    vol_jump = c_j * theta if vol_jump_enabled else 0.0
    jump = JumpSpec(
        tau=tau, jump_size=jump_loading * f, vol_jump=vol_jump,
        vol_jump_decay=vol_jump_decay if vol_jump_enabled else 0.0,
        vol_jump_scale=c_j if vol_jump_enabled else 0.0,
    )
    trans = TransitionSpec(eta=eta, theta_pn=theta_pn, tau_bar=tau + transition_s,
                           terminal_dev=terminal_dev)
    return EventDesign(factor=f, jump=jump, transition=trans)


def save_series_csv(path: EfficientPath, series: ObservedSeries, out_csv: Path,
                    sidecar_json: Path | None = None) -> None:
    """Write a columnar CSV (time_s, x, v, y) plus a JSON sidecar of specs."""
    out_csv = Path(out_csv)
    data = np.column_stack([path.times, path.x, path.v, series.y])
    header = "time_s,x,v,y"
    np.savetxt(out_csv, data, delimiter=",", header=header, comments="", fmt="%.12g")
    if sidecar_json is not None:
        sidecar = {"jump": asdict(path.jump), "source": series.source}
        Path(sidecar_json).write_text(json.dumps(sidecar, sort_keys=True, indent=2))
