"""User-facing fitting API: request validation, solver dispatch, and the
two-stage adaptive-lasso pipeline (pilot fit -> weights -> penalized fit).

The pilot estimate is the unregularized solution produced by
``pilot_algorithm`` (by default the same solver as the final stage); its
coefficients become the adaptive weights ``1 / pilot_j**2`` and are kept in
the final result's diagnostics under ``"pilot"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admm import fit_admm
from .cd import fit_cd
from .core import (
    ConvergenceError,
    Dataset,
    FitResult,
    PenaltySpec,
    QuantileLevels,
    SolverOptions,
)
from .ip import fit_ip
from .mm import fit_mm

__all__ = ["SOLVERS", "FitRequest", "fit"]

SOLVERS = {
    "admm": fit_admm,
    "mm": fit_mm,
    "cd": fit_cd,
    "ip": fit_ip,
}


def _solver(tag: str):
    try:
        return SOLVERS[tag]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {tag!r}; expected one of {sorted(SOLVERS)}"
        ) from None


@dataclass
class FitRequest:
    """Everything needed to produce one fit.

    ``lam`` must be given exactly when ``regularized`` is true;
    ``pilot_algorithm`` defaults to ``algorithm``.
    """

    data: Dataset
    levels: QuantileLevels
    algorithm: str = "admm"
    regularized: bool = False
    lam: float | None = None
    options: SolverOptions = field(default_factory=SolverOptions)
    pilot_algorithm: str | None = None

    def __post_init__(self):
        _solver(self.algorithm)
        if self.pilot_algorithm is None:
            self.pilot_algorithm = self.algorithm
        else:
            _solver(self.pilot_algorithm)
        if self.regularized:
            if self.lam is None:
                raise ValueError("regularized request requires lam")
            lam = float(self.lam)
            if not np.isfinite(lam) or lam <= 0.0:
                raise ValueError("lam must be finite and positive")
            self.lam = lam
        elif self.lam is not None:
            raise ValueError("lam given but regularized is False")


def fit(request: FitRequest) -> FitResult:
    """Run a fit request, including the pilot stage when regularized."""
    fitter = _solver(request.algorithm)
    if not request.regularized:
        return fitter(request.data, request.levels, None, request.options)

    pilot_fitter = _solver(request.pilot_algorithm)
    pilot = pilot_fitter(request.data, request.levels, None, request.options)
    if not pilot.converged:
        raise ConvergenceError(
            f"pilot stage ({request.pilot_algorithm}) did not converge "
            f"after {pilot.iterations} iterations"
        )
    penalty = PenaltySpec.adaptive_lasso(request.lam, pilot.coefficients)
    result = fitter(request.data, request.levels, penalty, request.options)
    result.diagnostics["pilot"] = pilot.coefficients.copy()
    return result
