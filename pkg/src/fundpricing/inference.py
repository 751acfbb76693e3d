"""Critical values and test functions for post-event pricing.

The test asks whether the observed price, once its transition window has
closed, sits at the level implied by the efficient jump.  Critical values
come from closed-form Gaussian tail bounds: the second-order tail quantile
(log minus log-log) applied to a worst-case integrated variance plus the
pre-average estimation error, and, for the feasible test with a
regression-estimated jump, an additional bounded-error concentration term
that shrinks with the number of training events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .preaveraging import VolBounds


class InferenceError(ValueError):
    """Inputs outside the domain of the closed-form bounds."""


def gaussian_tail_bound(t: float, v: float) -> float:
    """Upper bound on P(|Z| > t) for Z ~ Normal(0, v).

    Returns ``sqrt(2 v / pi) * exp(-t^2 / (2 v)) / t``; valid (and an upper
    bound) for any positive ``t`` and ``v``.
    """
    if t <= 0 or v <= 0:
        raise InferenceError("t and v must be positive")
    return math.sqrt(2.0 * v / math.pi) * math.exp(-t * t / (2.0 * v)) / t


def lambert_w_positive(y: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Solve ``x * exp(x) = y`` for the positive real root, ``y > e``.

    Newton iteration on ``x + log(x) - log(y)``, which is strictly increasing
    for positive ``x``; used as the exact cross-check for the log - log-log
    approximation below.
    """
    if y <= math.e:
        raise InferenceError(f"y must exceed e for a root above 1, got {y}")
    log_y = math.log(y)
    x = max(1.0, log_y - math.log(log_y))
    for _ in range(max_iter):
        f = x + math.log(x) - log_y
        step = f / (1.0 + 1.0 / x)
        x -= step
        if x <= 0:
            x = 1e-12
        if abs(step) < tol * max(1.0, abs(x)):
            break
    return x


def _tail_log_arg(a: float) -> float:
    if not 0.0 < a < 1.0:
        raise InferenceError(f"tail level must lie in (0, 1), got {a}")
    arg = 2.0 / (math.pi * a * a)
    if arg <= math.e:
        raise InferenceError(
            f"tail level {a} too large: 2/(pi a^2) must exceed e for the "
            "log - log-log approximation"
        )
    return arg


def tail_quantile(a: float, v: float) -> float:
    """Threshold xi with tail bound ``P(|Z| > xi) <= a`` for Z ~ Normal(0, v).

    Uses the second-order approximation ``W(y) ~ log(y) - log(log(y))`` of
    the product-log function at ``y = 2 / (pi a^2)``.
    """
    if v < 0:
        raise InferenceError("variance must be nonnegative")
    arg = _tail_log_arg(a)
    return math.sqrt(v * (math.log(arg) - math.log(math.log(arg))))


def tail_quantile_exact(a: float, v: float) -> float:
    """Same threshold via the exact product-log root; cross-check oracle."""
    if v < 0:
        raise InferenceError("variance must be nonnegative")
    return math.sqrt(v * lambert_w_positive(_tail_log_arg(a)))


@dataclass(frozen=True)
class CriticalValueInputs:
    """Everything a critical value depends on.

    ``c_delta`` and ``error_var`` come from the volatility bounds, ``n`` is
    the sample size of the tested series, ``n_train`` the number of events
    behind the regression jump estimate, ``c_e`` the uniform bound on the
    regression errors and ``f_l1`` the l1 norm of the tested event's
    standardized factor vector.
    """

    alpha: float
    delta: float
    c_delta: float
    error_var: float
    q2: float = 0.0
    n: int = 0
    n_train: int = 0
    c_e: float = 0.0
    f_l1: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise InferenceError("alpha must lie in (0, 1)")
        if min(self.c_delta, self.error_var, self.q2, self.c_e, self.f_l1) < 0:
            raise InferenceError("variance inputs, c_e and f_l1 must be nonnegative")

    @staticmethod
    def from_bounds(alpha: float, delta: float, bounds: VolBounds, n: int,
                    n_train: int = 0, c_e: float = 0.0, f_l1: float = 0.0
                    ) -> "CriticalValueInputs":
        return CriticalValueInputs(
            alpha=alpha, delta=delta, c_delta=bounds.c_delta,
            error_var=bounds.error_var, q2=bounds.q2, n=n,
            n_train=n_train, c_e=c_e, f_l1=f_l1,
        )


def critical_value(inputs: CriticalValueInputs) -> float:
    """Level-alpha critical value when the efficient jump is known.

    Two independent error sources (the efficient-price fluctuation over the
    transition window and the pre-average estimation error) are bounded
    jointly, each at half the level, giving::

        kappa = (sqrt(C) + n^(-1/4) sqrt(V))
                * sqrt(log(8 / (pi alpha^2)) - log(log(8 / (pi alpha^2))))
    """
    mult = tail_quantile(inputs.alpha / 2.0, 1.0)
    scale = math.sqrt(inputs.c_delta)
    if inputs.n > 0:
        scale += inputs.n ** -0.25 * math.sqrt(inputs.error_var)
    elif inputs.error_var > 0:
        raise InferenceError("sample size n required when error_var is positive")
    return scale * mult


def critical_value_feasible(inputs: CriticalValueInputs) -> float:
    """Critical value when the jump is estimated from training events.

    The first term is the known-jump critical value at level two-thirds
    alpha (three error sources now share the level); the second accounts for
    the regression coefficient error through a bounded-difference
    concentration inequality::

        kappa* = kappa(2 alpha / 3)
                 + c_e * ||F||_1 * sqrt(2 log(6 / alpha)) / sqrt(N)
    """
    if inputs.n_train < 1:
        raise InferenceError("feasible test requires at least one training event")
    base = critical_value(
        CriticalValueInputs(
            alpha=inputs.alpha * 2.0 / 3.0, delta=inputs.delta,
            c_delta=inputs.c_delta, error_var=inputs.error_var, q2=inputs.q2,
            n=inputs.n, n_train=inputs.n_train, c_e=inputs.c_e, f_l1=inputs.f_l1,
        )
    )
    correction = (inputs.c_e * inputs.f_l1
                  * math.sqrt(2.0 * math.log(6.0 / inputs.alpha))
                  / math.sqrt(inputs.n_train))
    return base + correction


@dataclass(frozen=True)
class TestOutcome:
    """Result of one event-level test."""

    statistic: float
    critical: float
    reject: bool
    overshoot: bool | None
    residual: float
    event_return: float
    jump_estimate: float
    feasible: bool
    inputs: CriticalValueInputs

    def to_record(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical": self.critical,
            "reject": self.reject,
            "overshoot": self.overshoot,
            "residual": self.residual,
            "event_return": self.event_return,
            "jump_estimate": self.jump_estimate,
            "feasible": self.feasible,
            "alpha": self.inputs.alpha,
            "delta": self.inputs.delta,
            "C_delta": self.inputs.c_delta,
            "V": self.inputs.error_var,
            "q2": self.inputs.q2,
            "n_train": self.inputs.n_train,
            "c_e": self.inputs.c_e,
            "f_l1": self.inputs.f_l1,
        }


def test_event(event_return_value: float, jump_estimate: float,
               inputs: CriticalValueInputs, feasible: bool = True) -> TestOutcome:
    """Compare an event return against a jump estimate at level alpha.

    Rejects when the absolute deviation strictly exceeds the critical value
    (feasible or known-jump, per ``feasible``).  For rejected events the
    outcome also flags overshooting: the residual sharing the sign of the
    event return, i.e. the price settling beyond the estimated efficient
    level in the direction of the move.
    """
    residual = event_return_value - jump_estimate
    statistic = abs(residual)
    critical = critical_value_feasible(inputs) if feasible else critical_value(inputs)
    reject = statistic > critical
    overshoot = None
    if reject:
        overshoot = math.copysign(1.0, residual) == math.copysign(1.0, event_return_value)
    return TestOutcome(
        statistic=statistic, critical=critical, reject=reject,
        overshoot=overshoot, residual=residual,
        event_return=event_return_value, jump_estimate=jump_estimate,
        feasible=feasible, inputs=inputs,
    )
