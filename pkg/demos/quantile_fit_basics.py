"""
Quantile regression basics
==========================

Fit a single-level quantile regression with each of the four solvers and
check that they land on the same answer.  Run as a plain script:

    python3 demos/quantile_fit_basics.py
"""

import numpy as np

from cqrkit import Dataset, QuantileLevels, fit_admm, fit_cd, fit_ip, fit_mm

rng = np.random.default_rng(7)

# A small linear model with asymmetric noise.  The conditional tau-quantile
# of y given x is  b + x'beta + Q_tau(noise),  so the slope estimates should
# agree across tau while the intercept absorbs the noise quantile.
n, p = 300, 3
beta_true = np.array([1.5, 0.0, -2.0])
X = rng.standard_normal((n, p))
noise = rng.exponential(1.0, size=n) - 1.0        # skewed, mean zero
data = Dataset(X, 0.5 + X @ beta_true + noise)

print("true slopes:", beta_true)
print()

for tau in (0.25, 0.5, 0.9):
    levels = QuantileLevels.single(tau)
    print(f"tau = {tau}")
    for tag, fitter in [("admm", fit_admm), ("mm", fit_mm),
                        ("cd", fit_cd), ("ip", fit_ip)]:
        res = fitter(data, levels)
        coef = np.round(res.coefficients, 3)
        print(f"  {tag:>4}: intercept {res.intercepts[0]: .3f}  "
              f"slopes {coef}  objective {res.objective:.4f}  "
              f"({res.iterations} iters)")
    print()

# The four objectives above differ only in the last printed digit or so; the
# interior-point value is the exact optimum of the underlying linear program,
# the iterative solvers stop at their convergence tolerance.
