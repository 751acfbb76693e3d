"""Pre-averaging estimators for noisy high-frequency prices.

Contains the local block means used to smooth out microstructure noise, the
event return that compares block means on either side of a fixed transition
window, a first-order autocovariance estimator of the noise variance, and
the volatility bounds (worst-case integrated variance over the window plus
the pre-average error variance) that feed the critical values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .simulation import ObservedSeries


class EstimationError(ValueError):
    """Insufficient or degenerate data for an estimator."""


@dataclass(frozen=True)
class PreAvgConfig:
    """Pre-average block configuration.

    The block length is fixed in wall-clock seconds; the number of
    observations per block and the dimensionless ratio ``c = M / sqrt(n)``
    are resolved against a concrete series, since sampling frequencies vary.
    """

    block_seconds: float = 15.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.block_seconds) and self.block_seconds > 0):
            raise EstimationError("block_seconds must be positive and finite")

    def spacing(self, series: ObservedSeries) -> float:
        if series.n < 2:
            raise EstimationError("series too short to infer a sampling interval")
        return (series.times[-1] - series.times[0]) / (series.n - 1)

    def block_length(self, series: ObservedSeries) -> int:
        """Block length in observations; at least 1, at most n/4."""
        m = max(1, int(round(self.block_seconds / self.spacing(series))))
        if m > series.n // 4:
            raise EstimationError(
                f"block of {m} observations exceeds a quarter of the series ({series.n})"
            )
        return m

    def c_ratio(self, series: ObservedSeries) -> float:
        """``M / sqrt(n)``, recorded for the pre-average error variance."""
        return self.block_length(series) / math.sqrt(series.n)


@dataclass(frozen=True)
class EventReturn:
    """A pre-average event return over a fixed transition window."""

    value: float
    delta: float
    tau: float
    n: int
    config: PreAvgConfig
    pre_index: int = 0
    post_index: int = 0


@dataclass
class VolBounds:
    """Volatility inputs for the critical values.

    ``c_delta`` bounds the integrated variance of the efficient price over
    the transition window; ``error_var`` is the variance parameter of the
    pre-average estimation error; ``c_scale`` is the post/pre amplification
    factor applied to the pre-event worst case.
    """

    c_delta: float
    error_var: float
    q2: float
    c_scale: float
    iv30_pre: np.ndarray = field(default_factory=lambda: np.array([]))
    iv30_post: np.ndarray = field(default_factory=lambda: np.array([]))

    def to_record(self) -> dict:
        return {
            "C_delta": float(self.c_delta),
            "V": float(self.error_var),
            "q2": float(self.q2),
            "c_Delta": float(self.c_scale),
        }


def preaverage(series: ObservedSeries, j: int, m: int) -> float:
    """Arithmetic mean of the block of up to ``m`` observations starting at ``j``.

    The block is truncated at the series end, so near the boundary fewer
    than ``m`` observations enter the mean.
    """
    n = series.n
    if not 0 <= j <= n - 1:
        raise EstimationError(f"block start {j} outside [0, {n - 1}]")
    if m < 1:
        raise EstimationError("block length must be at least 1")
    stop = min(j + m, n)
    return float(np.mean(series.y[j:stop]))


def _index_at_or_after(times: np.ndarray, t: float) -> int:
    """First index whose timestamp is >= t."""
    return int(np.searchsorted(times, t, side="left"))


def event_return(series: ObservedSeries, tau: float, delta: float,
                 config: PreAvgConfig) -> EventReturn:
    """Difference of block means across the event and its transition window.

    The post block starts at the first observation at or after ``tau + delta``;
    the pre block ends at the last observation strictly before ``tau``.  With
    ``delta == 0`` this is the plain pre-average jump estimator.
    """
    if delta < 0:
        raise EstimationError("delta must be nonnegative")
    m = config.block_length(series)
    i_tau = _index_at_or_after(series.times, tau)
    i_post = _index_at_or_after(series.times, tau + delta)
    i_pre = i_tau - m
    if i_pre < 0:
        raise EstimationError(
            f"needs {m} observations before the event, have {i_tau}"
        )
    if i_post + m > series.n:
        raise EstimationError(
            f"needs {m} observations from {tau + delta:.3f}s on, have {series.n - i_post}"
        )
    value = preaverage(series, i_post, m) - preaverage(series, i_pre, m)
    return EventReturn(value=value, delta=delta, tau=tau, n=series.n,
                       config=config, pre_index=i_pre, post_index=i_post)


def noise_variance(series: ObservedSeries, end_index: int | None = None) -> float:
    """Noise variance from minus the lag-one autocovariance of returns.

    Under observed price = latent price + i.i.d. noise, adjacent return
    increments covary at minus the noise variance; the estimate is floored
    at zero.  Uses observations up to ``end_index`` (exclusive), typically
    the pre-event segment.
    """
    y = series.y if end_index is None else series.y[:end_index]
    if y.size < 100:
        raise EstimationError(f"needs at least 100 observations, have {y.size}")
    d = np.diff(y)
    d = d - d.mean()
    cov = float(np.mean(d[1:] * d[:-1]))
    return max(0.0, -cov)


def _window_iv(y: np.ndarray, dt: float, q2: float) -> float:
    """Noise-corrected pre-averaged integrated variance of one window.

    Splits the window into sub-blocks of about sqrt(window length)
    observations, scales the mean squared difference of adjacent sub-block
    means to an integrated variance, and subtracts the noise contribution.
    Floored at zero.
    """
    m = y.size
    k = max(2, int(round(math.sqrt(m))))
    b = m // k
    if b < 2:
        raise EstimationError("window too short for a pre-averaged variance")
    means = y[: b * k].reshape(b, k).mean(axis=1)
    msq = float(np.mean(np.diff(means) ** 2))
    iv_per_second = (3.0 / (2.0 * k * dt)) * max(0.0, msq - 2.0 * q2 / k)
    return iv_per_second * m * dt


def _window_starts(i_from: int, i_to: int, m_win: int) -> list[tuple[int, int]]:
    """Contiguous [start, stop) windows of m_win observations inside a range."""
    out = []
    start = i_from
    while start + m_win <= i_to:
        out.append((start, start + m_win))
        start += m_win
    return out


def vol_bounds(series: ObservedSeries, tau: float, tau_bar: float, delta: float,
               config: PreAvgConfig, iv_window_seconds: float = 30.0,
               min_windows: int = 10) -> VolBounds:
    """Volatility bounds from short realized-variance windows.

    Computes noise-corrected pre-averaged integrated variances on contiguous
    windows of ``iv_window_seconds`` before the event and after the assumed
    termination, scales the worst pre-event window by the post/pre
    amplification ratio (floored at one) and by the window length ``delta``
    to obtain the integrated-variance cap, and assembles the pre-average
    error variance from the spot variances adjacent to the event and the
    termination.  The post/pre ratio compares medians across windows, and
    spot variances use the median of the three nearest windows: medians keep
    a few contaminated windows (a trading halt, or an incomplete price
    adjustment spilling past the assumed termination) from inflating the
    bound, which matters because inflation is worst exactly at the events
    and window choices the test is meant to flag.
    """
    if tau_bar < tau:
        raise EstimationError("tau_bar must not precede tau")
    if delta < 0:
        raise EstimationError("delta must be nonnegative")
    dt = config.spacing(series)
    m_win = max(4, int(round(iv_window_seconds / dt)))
    i_tau = _index_at_or_after(series.times, tau)
    i_bar = _index_at_or_after(series.times, tau_bar)
    q2 = noise_variance(series, i_tau)

    pre_ranges = _window_starts(i_tau % m_win, i_tau, m_win)
    post_ranges = _window_starts(i_bar, series.n, m_win)
    if len(pre_ranges) < min_windows or len(post_ranges) < min_windows:
        raise EstimationError(
            f"needs at least {min_windows} variance windows on each side, "
            f"have {len(pre_ranges)} pre and {len(post_ranges)} post"
        )
    iv_pre = np.array([_window_iv(series.y[a:b], dt, q2) for a, b in pre_ranges])
    iv_post = np.array([_window_iv(series.y[a:b], dt, q2) for a, b in post_ranges])
    pre_level = float(np.median(iv_pre))
    if pre_level <= 0:
        raise EstimationError("pre-event variance windows are degenerate (median zero)")

    c_scale = max(1.0, float(np.median(iv_post)) / pre_level)
    c_delta = delta * c_scale * float(np.max(iv_pre)) / iv_window_seconds

    spot_pre = float(np.median(iv_pre[-3:])) / iv_window_seconds
    spot_post = float(np.median(iv_post[:3])) / iv_window_seconds
    span = float(series.times[-1] - series.times[0])
    c_ratio = config.c_ratio(series)
    error_var = (spot_pre + spot_post) * span * c_ratio / 3.0 + 2.0 * q2

    return VolBounds(c_delta=c_delta, error_var=error_var, q2=q2,
                     c_scale=c_scale, iv30_pre=iv_pre, iv30_post=iv_post)
