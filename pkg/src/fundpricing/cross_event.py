"""Cross-event regression of event returns on news factors.

Pools events to recover the loading of efficient jumps on observable news
factors; the fitted loading turns a tested event's factors into a jump
estimate.  Training always leaves the tested event out, and standardization
statistics are frozen on the training rows so nothing leaks from the tested
event into its own benchmark.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RegressionError(ValueError):
    """Degenerate design or insufficient events."""


@dataclass(frozen=True)
class FactorSpec:
    """Which columns enter the factor matrix.

    ``base`` names attributes (or mapping keys) read off each event;
    interactions are products of standardized base columns, restandardized
    by default so every non-intercept column is on the same scale.
    """

    base: tuple[str, ...] = ("surprise", "attention")
    interactions: tuple[tuple[str, str], ...] = (("surprise", "attention"),)
    include_intercept: bool = True
    restandardize_interactions: bool = True

    @property
    def k(self) -> int:
        return len(self.base) + len(self.interactions) + int(self.include_intercept)


def _get(event, name: str) -> float:
    if isinstance(event, dict):
        return float(event[name])
    return float(getattr(event, name))


@dataclass
class FactorMatrix:
    """Standardized factor matrix with frozen training statistics."""

    x: np.ndarray
    labels: list[str]
    means: np.ndarray
    scales: np.ndarray
    spec: FactorSpec

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def standardize_row(self, event) -> np.ndarray:
        """Map one event's raw factors through the training standardization."""
        base_raw = np.array([_get(event, name) for name in self.spec.base])
        n_base = len(self.spec.base)
        base_std = (base_raw - self.means[:n_base]) / self.scales[:n_base]
        cols: list[float] = []
        if self.spec.include_intercept:
            cols.append(1.0)
        cols.extend(base_std)
        for i, (a, b) in enumerate(self.spec.interactions):
            ia, ib = self.spec.base.index(a), self.spec.base.index(b)
            prod = base_std[ia] * base_std[ib]
            j = n_base + i
            cols.append((prod - self.means[j]) / self.scales[j])
        return np.array(cols)

    def l1_norm(self, event) -> float:
        """l1 norm of the standardized factor vector, intercept included."""
        return float(np.abs(self.standardize_row(event)).sum())


def build_factors(events, spec: FactorSpec = FactorSpec()) -> FactorMatrix:
    """Build the standardized training factor matrix.

    Non-intercept columns are centered and scaled to unit variance on the
    training rows; interaction columns are formed from the standardized
    inputs and then restandardized (configurable).  A constant non-intercept
    column is an error: it cannot be scaled and would duplicate the
    intercept.
    """
    events = list(events)
    if len(events) < spec.k + 2:
        raise RegressionError(
            f"needs at least {spec.k + 2} events for {spec.k} columns, have {len(events)}"
        )
    base = np.array([[_get(e, name) for name in spec.base] for e in events], dtype=float)
    if not np.all(np.isfinite(base)):
        raise RegressionError("factors must be finite")
    n_base = len(spec.base)
    means = np.zeros(n_base + len(spec.interactions))
    scales = np.ones_like(means)
    means[:n_base] = base.mean(axis=0)
    scales[:n_base] = base.std(axis=0)
    for j, name in enumerate(spec.base):
        if scales[j] == 0.0:
            raise RegressionError(f"factor column {name!r} is constant")
    base_std = (base - means[:n_base]) / scales[:n_base]

    cols = []
    labels = []
    if spec.include_intercept:
        cols.append(np.ones(len(events)))
        labels.append("const")
    for j, name in enumerate(spec.base):
        cols.append(base_std[:, j])
        labels.append(name)
    for i, (a, b) in enumerate(spec.interactions):
        prod = base_std[:, spec.base.index(a)] * base_std[:, spec.base.index(b)]
        j = n_base + i
        if spec.restandardize_interactions:
            means[j] = prod.mean()
            scales[j] = prod.std()
            if scales[j] == 0.0:
                raise RegressionError(f"interaction {a}x{b} is constant")
            prod = (prod - means[j]) / scales[j]
        cols.append(prod)
        labels.append(f"{a}_x_{b}")
    x = np.column_stack(cols)
    return FactorMatrix(x=x, labels=labels, means=means, scales=scales, spec=spec)


@dataclass
class JumpRegressionFit:
    """Least-squares fit of event returns on standardized factors."""

    coef: np.ndarray
    robust_se: np.ndarray
    residuals: np.ndarray
    loo_residuals: np.ndarray
    r2: float
    c_e: float
    c_e_loo: float
    labels: list[str]
    factors: FactorMatrix


def fit_jump_regression(returns: np.ndarray, factors: FactorMatrix) -> JumpRegressionFit:
    """Fit returns on the factor matrix by least squares.

    Uses an orthogonal decomposition for the solve, reports
    heteroskedasticity-robust (sandwich, small-sample scaled) standard
    errors, plain and leave-one-out residuals, and the maximum absolute
    residual of each kind for the bounded-error correction.
    """
    y = np.asarray(returns, dtype=float)
    x = factors.x
    n, k = x.shape
    if y.shape != (n,):
        raise RegressionError(f"returns must have shape ({n},), got {y.shape}")
    q, r = np.linalg.qr(x)
    if np.min(np.abs(np.diag(r))) < 1e-12 * np.max(np.abs(np.diag(r))):
        raise RegressionError("factor matrix is rank deficient")
    coef = np.linalg.solve(r, q.T @ y)
    fitted = x @ coef
    resid = y - fitted
    leverage = np.sum(q * q, axis=1)
    loo = resid / np.maximum(1.0 - leverage, 1e-12)

    xtx_inv = np.linalg.solve(r.T @ r, np.eye(k))
    meat = (x * (resid ** 2)[:, None]).T @ x
    dof_scale = n / max(n - k, 1)
    cov = dof_scale * xtx_inv @ meat @ xtx_inv
    robust_se = np.sqrt(np.diag(cov))

    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / sst if sst > 0 else 0.0
    return JumpRegressionFit(
        coef=coef, robust_se=robust_se, residuals=resid, loo_residuals=loo,
        r2=r2, c_e=float(np.max(np.abs(resid))),
        c_e_loo=float(np.max(np.abs(loo))), labels=factors.labels, factors=factors,
    )


def predict_jump(fit: JumpRegressionFit, event) -> tuple[float, float]:
    """Jump estimate for a tested event and the l1 norm of its factor vector.

    The event's raw factors are standardized with the training statistics
    frozen in the fit.
    """
    row = fit.factors.standardize_row(event)
    if row.shape != fit.coef.shape:
        raise RegressionError("factor dimension mismatch")
    return float(row @ fit.coef), float(np.abs(row).sum())


def leave_one_out_plan(events, tested_id, spec: FactorSpec = FactorSpec()) -> list:
    """Training set for one tested event.

    Training events are the regular (non-breaking) events excluding the
    tested event itself; events whose post-release trading was interrupted
    never serve as training data because their pricing is the hypothesis
    under test.
    """
    train = [e for e in events
             if getattr(e, "cls", "regular") == "regular"
             and getattr(e, "event_id", None) != tested_id]
    if len(train) < spec.k + 2:
        raise RegressionError(
            f"training set of {len(train)} events too small for {spec.k} factors"
        )
    return train
