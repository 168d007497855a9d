"""Shared types and primitives for quantile regression solvers.

Everything downstream (the ADMM / MM / coordinate-descent / interior-point
fitters, the two-stage adaptive pipeline, the simulation harness) speaks the
small vocabulary defined here: a dataset, a grid of quantile levels, a penalty
description, solver options, and a handful of numerical primitives (check
loss, soft threshold, weighted median, composite stacking, adaptive weights).

Conventions
-----------
* A quantile regression model at level ``tau`` is ``y ~ b + x' beta``.  The
  composite model shares ``beta`` across levels and gives each level its own
  intercept ``b_k``.
* Residuals are always ``y - b - x' beta`` (data minus fit).
* The stacked composite design is level-major: block ``k`` holds the ``n``
  observations at level ``tau_k``, so rows ``k*n`` through ``(k+1)*n - 1``
  belong to level ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "QuantileLevels",
    "PenaltySpec",
    "SolverOptions",
    "FitResult",
    "CompositeDesign",
    "ConvergenceError",
    "check_loss",
    "soft_threshold",
    "weighted_median",
    "sample_quantile",
    "stack_composite",
    "adaptive_weights",
    "penalty_value",
    "objective",
]

#: cutoff below which a pilot coefficient is treated as exactly zero
PILOT_FLOOR = 1e-6


class ConvergenceError(RuntimeError):
    """A solver stage failed to converge within its iteration budget."""


def _validate_tau(tau):
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie strictly in (0, 1), got {tau}")
    return tau


# ---------------------------------------------------------------------------
# problem description types
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Design matrix and response vector.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Covariates, one row per observation.  ``p`` may be zero for an
        intercept-only model.
    Y : ndarray of shape (n,)
        Response.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional (n, p), got ndim={X.ndim}")
        if Y.ndim != 1:
            raise ValueError(f"Y must be 1-dimensional (n,), got ndim={Y.ndim}")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        if X.shape[0] == 0:
            raise ValueError("need at least one observation")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("X and Y must contain only finite values")
        self.X = X
        self.Y = Y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class QuantileLevels:
    """A strictly increasing grid of quantile levels in (0, 1)."""

    taus: np.ndarray

    def __post_init__(self):
        taus = np.atleast_1d(np.asarray(self.taus, dtype=float))
        if taus.ndim != 1 or taus.size == 0:
            raise ValueError("need at least one quantile level")
        if np.any(taus <= 0.0) or np.any(taus >= 1.0):
            raise ValueError("quantile levels must lie strictly in (0, 1)")
        if np.any(np.diff(taus) <= 0.0):
            raise ValueError("quantile levels must be strictly increasing")
        self.taus = taus

    @property
    def K(self) -> int:
        return self.taus.size

    @classmethod
    def single(cls, tau) -> "QuantileLevels":
        return cls(np.array([_validate_tau(tau)]))

    @classmethod
    def grid(cls, K: int) -> "QuantileLevels":
        """Equally spaced levels k/(K+1), k = 1..K (e.g. K=9 gives 0.1..0.9)."""
        if K < 1:
            raise ValueError("K must be at least 1")
        return cls(np.arange(1, K + 1) / (K + 1.0))


@dataclass
class PenaltySpec:
    """Penalty attached to the coefficient vector.

    ``kind`` is either ``"none"`` or ``"adaptive_lasso"``.  The adaptive-lasso
    penalty is ``lam * sum_j |beta_j| / pilot_j**2`` where ``pilot`` is a
    first-stage coefficient estimate; coordinates whose pilot is below
    ``PILOT_FLOOR`` in magnitude are excluded from the model entirely
    (constrained to zero) rather than given an infinite weight.
    """

    kind: str
    lam: float = 0.0
    pilot: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "adaptive_lasso"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "adaptive_lasso":
            lam = float(self.lam)
            if not np.isfinite(lam) or lam < 0.0:
                raise ValueError("lam must be finite and nonnegative")
            if self.pilot is None:
                raise ValueError("adaptive_lasso penalty requires a pilot estimate")
            pilot = np.asarray(self.pilot, dtype=float)
            if pilot.ndim != 1 or not np.all(np.isfinite(pilot)):
                raise ValueError("pilot must be a finite 1-D vector")
            self.lam = lam
            self.pilot = pilot

    @classmethod
    def none(cls) -> "PenaltySpec":
        return cls(kind="none")

    @classmethod
    def adaptive_lasso(cls, lam, pilot) -> "PenaltySpec":
        return cls(kind="adaptive_lasso", lam=lam, pilot=pilot)

    @property
    def regularized(self) -> bool:
        return self.kind == "adaptive_lasso"


@dataclass
class SolverOptions:
    """Knobs shared by the four fitters.

    ``tol`` is the generic parameter-change threshold (MM, CD, and the inner
    penalized least-squares loop); ``rho`` is the ADMM step parameter;
    ``eps_mm`` the MM smoothing constant; ``eps_abs``/``eps_rel`` the ADMM
    stopping tolerances; ``selection_threshold`` the magnitude above which a
    fitted coefficient counts as selected.
    """

    max_iter: int = 5000
    tol: float = 1e-4
    rho: float = 1.2
    eps_mm: float = 1e-4
    eps_abs: float = 1e-2
    eps_rel: float = 1e-4
    selection_threshold: float = 1e-3

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        self.max_iter = int(self.max_iter)
        for name in ("tol", "rho", "eps_mm", "selection_threshold"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be finite and positive")
            setattr(self, name, value)
        for name in ("eps_abs", "eps_rel"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative")
            setattr(self, name, value)


@dataclass
class FitResult:
    """Outcome of a single fit.

    ``intercepts`` has one entry per quantile level; ``coefficients`` the
    shared slope vector.  ``diagnostics`` is solver-specific (final internal
    state, residual norms, descent audits, pilot coefficients, ...).
    """

    intercepts: np.ndarray
    coefficients: np.ndarray
    iterations: int
    converged: bool
    objective: float
    algorithm: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class CompositeDesign:
    """Stacked design for the composite problem (level-major row order)."""

    Xs: np.ndarray
    Ys: np.ndarray
    taus: np.ndarray
    n: int
    p: int
    K: int


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------


def check_loss(t, tau):
    """Check (pinball) loss ``rho_tau(t) = t * (tau - 1{t < 0})``.

    Equals ``tau * max(t, 0) + (1 - tau) * max(-t, 0)``; nonnegative, zero
    only at ``t = 0``.  Accepts scalars or arrays and returns the same shape.
    """
    tau = _validate_tau(tau)
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("check_loss argument must be finite")
    out = t * (tau - (t < 0.0))
    return float(out) if out.ndim == 0 else out


def soft_threshold(v, a):
    """Soft-thresholding ``S_a(v) = sign(v) * max(|v| - a, 0)``, elementwise."""
    a = float(a)
    if not np.isfinite(a) or a < 0.0:
        raise ValueError("threshold must be finite and nonnegative")
    v = np.asarray(v, dtype=float)
    out = np.sign(v) * np.maximum(np.abs(v) - a, 0.0)
    return float(out) if out.ndim == 0 else out


def weighted_median(z, w):
    """Weighted median: smallest ``z``-value whose cumulative weight reaches half.

    Sorts ``z`` ascending (ties kept in original order) and returns the first
    element at which the running weight sum reaches ``sum(w) / 2``.  This is a
    minimizer of ``sum_i w_i |z - z_i|``; when the half-weight point falls
    exactly between two elements the left one is returned.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.ndim != 1 or w.ndim != 1 or z.size != w.size:
        raise ValueError("z and w must be 1-D vectors of equal length")
    if z.size == 0:
        raise ValueError("need at least one point")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
        raise ValueError("z and w must be finite")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    total = float(np.sum(w))
    if total <= 0.0:
        raise ValueError("total weight must be positive")
    order = np.argsort(z, kind="stable")
    cum = np.cumsum(w[order])
    idx = int(np.searchsorted(cum, 0.5 * total, side="left"))
    idx = min(idx, z.size - 1)  # cumsum vs. sum can differ in the last ulp
    return float(z[order[idx]])


def sample_quantile(values, tau):
    """Lower empirical ``tau``-quantile: the ``ceil(n * tau)``-th order statistic.

    This order statistic minimizes ``sum_i rho_tau(v_i - q)`` over ``q``.
    """
    tau = _validate_tau(tau)
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    n = v.size
    # nudge before ceil: n * tau can land an ulp above an integer (10 * 0.3)
    m = int(np.ceil(n * tau - 1e-9))
    m = min(max(m, 1), n)
    return float(np.partition(v, m - 1)[m - 1])


def stack_composite(data: Dataset, levels: QuantileLevels) -> CompositeDesign:
    """Build the stacked design for the composite problem.

    The stacked matrix has shape ``(n*K, K + p)``: the first ``K`` columns are
    level-intercept indicators, the remaining ``p`` repeat ``X`` within each
    level block.  ``Ys`` tiles ``Y`` once per level and ``taus`` repeats each
    level ``n`` times, so row ``k*n + i`` carries observation ``i`` at level
    ``tau_k``.
    """
    n, p, K = data.n, data.p, levels.K
    Xs = np.zeros((n * K, K + p))
    for k in range(K):
        Xs[k * n:(k + 1) * n, k] = 1.0
        Xs[k * n:(k + 1) * n, K:] = data.X
    Ys = np.tile(data.Y, K)
    taus = np.repeat(levels.taus, n)
    return CompositeDesign(Xs=Xs, Ys=Ys, taus=taus, n=n, p=p, K=K)


def adaptive_weights(pilot, floor: float = PILOT_FLOOR):
    """Adaptive-lasso weights ``1 / pilot**2`` with tiny pilots marked inactive.

    Returns ``(weights, active)``.  Coordinates with ``|pilot| < floor`` get
    ``active = False`` and weight 0: downstream solvers pin them at zero
    instead of working with a near-infinite weight.
    """
    pilot = np.asarray(pilot, dtype=float)
    if pilot.ndim != 1:
        raise ValueError("pilot must be a 1-D vector")
    if not np.all(np.isfinite(pilot)):
        raise ValueError("pilot must be finite")
    floor = float(floor)
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    active = np.abs(pilot) >= floor
    weights = np.zeros(pilot.shape)
    weights[active] = 1.0 / pilot[active] ** 2
    return weights, active


def penalty_value(beta, penalty: PenaltySpec) -> float:
    """Penalty term at ``beta``; +inf if an inactive coordinate is nonzero."""
    if penalty.kind == "none":
        return 0.0
    beta = np.asarray(beta, dtype=float)
    weights, active = adaptive_weights(penalty.pilot)
    if beta.shape != weights.shape:
        raise ValueError(f"beta has length {beta.size}, pilot has {weights.size}")
    if np.any(beta[~active] != 0.0):
        return float("inf")
    return float(penalty.lam * np.sum(weights[active] * np.abs(beta[active])))


def objective(data: Dataset, intercepts, beta, levels: QuantileLevels,
              penalty: PenaltySpec) -> float:
    """Composite check-loss objective at ``(intercepts, beta)``, penalty included.

    ``sum_k sum_i rho_{tau_k}(y_i - b_k - x_i' beta)`` plus the penalty term.
    """
    intercepts = np.atleast_1d(np.asarray(intercepts, dtype=float))
    beta = np.asarray(beta, dtype=float)
    if intercepts.shape != (levels.K,):
        raise ValueError(f"expected {levels.K} intercepts, got {intercepts.shape}")
    if beta.shape != (data.p,):
        raise ValueError(f"expected beta of length {data.p}, got {beta.shape}")
    if not (np.all(np.isfinite(intercepts)) and np.all(np.isfinite(beta))):
        raise ValueError("parameters must be finite")
    R = data.Y[None, :] - intercepts[:, None] - (data.X @ beta)[None, :]
    taus = levels.taus[:, None]
    fidelity = float(np.sum(R * (taus - (R < 0.0))))
    return fidelity + penalty_value(beta, penalty)
