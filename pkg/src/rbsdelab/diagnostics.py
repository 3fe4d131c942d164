"""Structural checks on solved lattices: BMO-style bounds, penalty mass,
flatness residuals, contact-rate bounds, and log-log rate fitting.

All expectations here are exact lattice expectations (backward averaging),
no sampling involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lattice import _cond_expect
from .problem import ProblemSpec
from .solver import DiscreteSolution

CONTACT_RTOL = 1e-12


@dataclass(frozen=True)
class RateReport:
    """Least-squares fit of log(error) against log(parameter)."""

    pairs: tuple
    slope: float
    intercept: float
    r_squared: float


def fit_rate(pairs) -> RateReport:
    """Fit a power law error ~ exp(intercept) * parameter^slope.

    Exact on exact power laws; r_squared is defined as 1.0 when the fit has
    zero residual variance (including the flat case of identical errors).
    """
    pts = tuple((float(a), float(b)) for a, b in pairs)
    if len(pts) < 2:
        raise ConfigurationError("fit_rate needs at least 2 pairs")
    if any(a <= 0 or b <= 0 for a, b in pts):
        raise ConfigurationError("fit_rate needs strictly positive entries")
    lx = np.log([a for a, _ in pts])
    ly = np.log([b for _, b in pts])
    design = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    fitted = design @ coef
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateReport(pairs=pts, slope=float(coef[1]), intercept=float(coef[0]),
                      r_squared=float(r2))


def bmo_estimate(sol: DiscreteSolution) -> float:
    """Max over grid times and nodes of E_node[sum_{j>=i} |z_j|^2 h]^(1/2).

    Restricting the supremum to deterministic grid times makes this a
    computable lower envelope of the stopping-time version; it still detects
    unbounded growth in the penalty parameter. One extra backward pass.
    """
    h = sol.grid.h
    n = sol.n_levels
    acc = np.zeros(n + 1)
    worst = 0.0
    for lev in range(n - 1, -1, -1):
        acc = sol.z[lev] ** 2 * h + _cond_expect(acc)
        worst = max(worst, float(acc.max()))
    return math.sqrt(worst)


def penalty_violation(sol: DiscreteSolution, spec: ProblemSpec, lam: float):
    """Worst barrier shortfall and its exact expected time integral.

    Returns (max over nodes of (y - S)^-, E[sum_i h (y_i - S_i)^-]). ``lam``
    is accepted for report labeling and does not enter the formulas.
    """
    del lam
    h = sol.grid.h
    n = sol.n_levels
    worst = 0.0
    acc = np.zeros(1)
    terms = []
    for lev in range(n):
        x = _states(sol, lev)
        s_val = np.asarray(spec.barrier(sol.grid.t(lev), x), dtype=float)
        neg = np.maximum(s_val - sol.y[lev], 0.0)
        worst = max(worst, float(neg.max()))
        terms.append(h * neg)
    acc = np.asarray(terms[-1], dtype=float).copy()
    for g in reversed(terms[:-1]):
        acc = g + _cond_expect(acc)
    return worst, float(acc[0])


def skorohod_residual(sol: DiscreteSolution, spec: ProblemSpec) -> float:
    """Exact E[sum_i (y_i - S_i) dk_i] along paths.

    Zero termwise for the reflected solve (increments only at contact) and
    negative for penalized solves, shrinking as the penalty grows.
    """
    n = sol.n_levels
    if n == 0:
        return 0.0
    terms = []
    for lev in range(n):
        x = _states(sol, lev)
        s_val = np.asarray(spec.barrier(sol.grid.t(lev), x), dtype=float)
        terms.append((sol.y[lev] - s_val) * sol.k_inc[lev])
    acc = np.asarray(terms[-1], dtype=float).copy()
    for g in reversed(terms[:-1]):
        acc = g + _cond_expect(acc)
    return float(acc[0])


def kappa_bound_check(sol_reflected: DiscreteSolution, spec: ProblemSpec) -> float:
    """Worst excess of the contact growth rate over (f + U)^- at contact nodes.

    Contact is detected with relative tolerance 1e-12. Returns 0.0 when the
    barrier is never touched; a small positive excess of order sqrt(h) is
    expected from the discretization. Requires the barrier's drift data.
    """
    if spec.barrier.drift_part is None:
        raise ConfigurationError(
            f"problem {spec.name!r} carries no barrier drift data; contact-rate check unsupported")
    h = sol_reflected.grid.h
    n = sol_reflected.n_levels
    worst = 0.0
    touched = False
    for lev in range(n):
        t = sol_reflected.grid.t(lev)
        x = _states(sol_reflected, lev)
        s_val = np.asarray(spec.barrier(t, x), dtype=float)
        y = sol_reflected.y[lev]
        contact = np.abs(y - s_val) <= CONTACT_RTOL * np.maximum(1.0, np.abs(s_val))
        if not contact.any():
            continue
        touched = True
        u_val = np.asarray(spec.barrier.drift_part(t, x), dtype=float)
        f_val = np.asarray(spec.generator(t, y, sol_reflected.z[lev], x), dtype=float)
        kappa = np.maximum(-(f_val + u_val), 0.0)
        excess = sol_reflected.k_inc[lev] / h - kappa
        worst = max(worst, float(excess[contact].max()))
    return worst if touched else 0.0


def _states(sol: DiscreteSolution, level: int) -> np.ndarray:
    sqrt_h = math.sqrt(sol.grid.h)
    return (2.0 * np.arange(level + 1) - level) * sqrt_h
