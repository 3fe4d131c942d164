"""Problem data: driver nonlinearity, barrier, terminal condition, example zoo.

A problem is Markovian in the walk state x: the barrier and terminal payoff
are functions of (t, x) and x, and any richer dynamics (e.g. a geometric
Brownian stock) live inside those closures as a state map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError


@dataclass(frozen=True)
class Generator:
    """Driver nonlinearity f(t, y, z) with declared growth constants.

    ``fn`` is called as fn(t, y, z, x) with y, z, x broadcastable arrays; the
    walk state x is ignored by plain drivers and only consumed by penalized
    wrappers that need the barrier. ``epsilon`` declares |z|^(2-epsilon)
    growth; epsilon == 0.0 flags fully quadratic growth. ``monotone_in_y``
    declares that fn is non-decreasing in y.
    """

    fn: Callable
    cbar: float
    epsilon: float
    monotone_in_y: bool = False

    def __post_init__(self):
        if self.cbar <= 0:
            raise ConfigurationError(f"cbar must be positive, got {self.cbar}")
        if not 0.0 <= self.epsilon <= 2.0:
            raise ConfigurationError(f"epsilon must lie in [0, 2], got {self.epsilon}")

    def __call__(self, t, y, z, x):
        return self.fn(t, y, z, x)


@dataclass(frozen=True)
class Barrier:
    """Lower obstacle S(t, x) with a declared bound on its positive part.

    ``drift_part`` and ``diffusion_part`` are optional (t, x) functions giving
    the dt and dW loadings of S for the built-in examples; they are metadata
    consumed by contact-rate diagnostics, never by the solvers.
    """

    fn: Callable
    sup_plus_bound: float
    drift_part: Optional[Callable] = None
    diffusion_part: Optional[Callable] = None

    def __call__(self, t, x):
        return self.fn(t, x)


@dataclass(frozen=True)
class TerminalCondition:
    """Terminal payoff xi(x) with declared sup bound."""

    fn: Callable
    bound: float

    def __call__(self, x):
        return self.fn(x)


@dataclass(frozen=True)
class ProblemSpec:
    generator: Generator
    barrier: Barrier
    terminal: TerminalCondition
    horizon: float
    name: str = "problem"

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    worst_violation: float = 0.0
    worst_sample: Optional[tuple] = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


_TOL = 1e-9


def _finite_or_none(arr):
    arr = np.asarray(arr, dtype=float)
    bad = ~np.isfinite(arr)
    return arr, (int(np.argmax(bad)) if bad.any() else None)


def validate_assumptions(spec: ProblemSpec, sample_budget: int, state_range) -> ValidationReport:
    """Spot-check the declared growth, barrier, terminal and monotonicity claims.

    Samples a deterministic (unscrambled Halton) grid of (t, y, z, x) points,
    with y, z, x drawn from ``state_range`` and t from [0, T], and verifies
    each declared inequality at every sample. Non-finite evaluations are
    reported as failures of the corresponding check, never raised. Two calls
    with identical arguments return identical reports.
    """
    if sample_budget < 1:
        raise ConfigurationError("sample_budget must be >= 1")
    lo, hi = float(state_range[0]), float(state_range[1])
    if not hi > lo:
        raise ConfigurationError(f"state_range must be non-degenerate, got ({lo}, {hi})")

    u = qmc.Halton(d=4, scramble=False).random(sample_budget)
    t = u[:, 0] * spec.horizon
    y = lo + u[:, 1] * (hi - lo)
    z = lo + u[:, 2] * (hi - lo)
    x = lo + u[:, 3] * (hi - lo)

    gen = spec.generator
    checks = []

    # Growth bound |f| <= cbar (1 + |y| + |z|^(2 - eps)); eps = 0 is the quadratic case.
    with np.errstate(all="ignore"):
        fv, bad = _finite_or_none(gen(t, y, z, x))
    growth_name = "A1" if gen.epsilon == 0.0 else "A1'"
    bound = gen.cbar * (1.0 + np.abs(y) + np.abs(z) ** (2.0 - gen.epsilon))
    if bad is not None:
        checks.append(AssumptionCheck(growth_name, False, np.inf,
                                      (t[bad], y[bad], z[bad], x[bad]),
                                      "non-finite generator value"))
    else:
        viol = np.abs(fv) - bound
        w = int(np.argmax(viol))
        ok = viol[w] <= _TOL * (1.0 + bound[w])
        checks.append(AssumptionCheck(growth_name, bool(ok), float(max(viol[w], 0.0)),
                                      (t[w], y[w], z[w], x[w]),
                                      "growth bound on |f|"))

    # Barrier positive part stays under the declared bound.
    with np.errstate(all="ignore"):
        sv, sbad = _finite_or_none(spec.barrier(t, x))
    if sbad is not None:
        checks.append(AssumptionCheck("A2", False, np.inf, (t[sbad], x[sbad]),
                                      "non-finite barrier value"))
    else:
        pos = np.maximum(sv, 0.0)
        viol = pos - spec.barrier.sup_plus_bound
        w = int(np.argmax(viol))
        ok = viol[w] <= _TOL * (1.0 + abs(spec.barrier.sup_plus_bound))
        checks.append(AssumptionCheck("A2", bool(ok), float(max(viol[w], 0.0)),
                                      (t[w], x[w]), "bound on S+"))

    # Terminal bound and solvability xi >= S(T, .) at the same samples.
    with np.errstate(all="ignore"):
        xiv, xbad = _finite_or_none(spec.terminal(x))
        sT, sTbad = _finite_or_none(spec.barrier(spec.horizon, x))
    if xbad is not None or sTbad is not None:
        bad_i = xbad if xbad is not None else sTbad
        checks.append(AssumptionCheck("A3", False, np.inf, (x[bad_i],),
                                      "non-finite terminal or barrier value"))
    else:
        viol_bound = np.abs(xiv) - spec.terminal.bound
        viol_dom = sT - xiv
        viol = np.maximum(viol_bound, viol_dom)
        w = int(np.argmax(viol))
        ok = viol[w] <= _TOL * (1.0 + abs(spec.terminal.bound))
        checks.append(AssumptionCheck("A3", bool(ok), float(max(viol[w], 0.0)),
                                      (x[w],), "terminal bound and xi >= S(T, .)"))

    # Monotonicity in y, checked only when claimed.
    if gen.monotone_in_y:
        ok, worst, sample = True, 0.0, None
        for delta in (1e-3 * (hi - lo), 0.1 * (hi - lo)):
            with np.errstate(all="ignore"):
                f0, b0 = _finite_or_none(gen(t, y, z, x))
                f1, b1 = _finite_or_none(gen(t, y + delta, z, x))
            if b0 is not None or b1 is not None:
                bad_i = b0 if b0 is not None else b1
                ok, worst, sample = False, np.inf, (t[bad_i], y[bad_i], z[bad_i], x[bad_i])
                break
            viol = f0 - f1
            w = int(np.argmax(viol))
            if viol[w] > _TOL * (1.0 + np.abs(f0[w])):
                ok, worst, sample = False, float(viol[w]), (t[w], y[w], z[w], x[w])
                break
            worst = max(worst, float(max(viol[w], 0.0)))
        checks.append(AssumptionCheck("H", ok, worst, sample, "non-decreasing in y"))
    else:
        checks.append(AssumptionCheck("H", True, 0.0, None, "not claimed; skipped"))

    return ValidationReport(tuple(checks))


def _gbm_state_map(s0, sigma, r):
    def to_stock(t, x):
        return s0 * np.exp(sigma * np.asarray(x, dtype=float) + (r - 0.5 * sigma * sigma) * t)

    return to_stock


def make_problem(name: str, **overrides) -> ProblemSpec:
    """Build a built-in problem, optionally overriding its scalar parameters.

    Recognized overrides: c (flat), gamma (entropic), epsilon (subquad),
    r and strike (american-put). Unknown names raise ConfigurationError.
    """
    if name == "flat":
        allowed = {"c"}
        _check_overrides(name, overrides, allowed)
        c = float(overrides.get("c", 1.0))
        return ProblemSpec(
            generator=Generator(fn=lambda t, y, z, x: np.zeros_like(np.asarray(y, dtype=float)),
                                cbar=1.0, epsilon=2.0, monotone_in_y=True),
            barrier=Barrier(fn=lambda t, x: np.full_like(np.asarray(x, dtype=float), c - 1.0),
                            sup_plus_bound=max(c - 1.0, 0.0),
                            drift_part=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
                            diffusion_part=lambda t, x: np.zeros_like(np.asarray(x, dtype=float))),
            terminal=TerminalCondition(fn=lambda x: np.full_like(np.asarray(x, dtype=float), c),
                                       bound=abs(c)),
            horizon=1.0,
            name="flat",
        )

    if name == "american-put":
        allowed = {"r", "strike"}
        _check_overrides(name, overrides, allowed)
        r = float(overrides.get("r", 0.06))
        strike = float(overrides.get("strike", 100.0))
        sigma, s0 = 0.4, strike
        stock = _gbm_state_map(s0, sigma, r)

        def payoff(t, x):
            return np.minimum(np.maximum(strike - stock(t, x), 0.0), strike)

        horizon = 0.5
        return ProblemSpec(
            generator=Generator(fn=lambda t, y, z, x: -r * np.asarray(y, dtype=float),
                                cbar=max(r, 1e-8), epsilon=2.0, monotone_in_y=False),
            barrier=Barrier(fn=payoff, sup_plus_bound=strike,
                            drift_part=lambda t, x: np.where(stock(t, x) < strike,
                                                             -r * stock(t, x), 0.0),
                            diffusion_part=lambda t, x: np.where(stock(t, x) < strike,
                                                                 -sigma * stock(t, x), 0.0)),
            terminal=TerminalCondition(fn=lambda x: payoff(horizon, x), bound=strike),
            horizon=horizon,
            name="american-put",
        )

    if name == "entropic":
        allowed = {"gamma"}
        _check_overrides(name, overrides, allowed)
        gamma = float(overrides.get("gamma", 1.0))
        if gamma <= 0:
            raise ConfigurationError(f"entropic requires gamma > 0, got {gamma}")
        return ProblemSpec(
            generator=Generator(fn=lambda t, y, z, x: 0.5 * gamma * np.asarray(z, dtype=float) ** 2,
                                cbar=max(0.5 * gamma, 1e-8), epsilon=0.0, monotone_in_y=True),
            barrier=_kinked_barrier(),
            terminal=_kinked_terminal(),
            horizon=1.0,
            name="entropic",
        )

    if name == "subquad":
        allowed = {"epsilon"}
        _check_overrides(name, overrides, allowed)
        eps = float(overrides.get("epsilon", 1.0))
        if not 0.0 < eps <= 2.0:
            raise ConfigurationError(f"subquad requires epsilon in (0, 2], got {eps}")
        return ProblemSpec(
            generator=Generator(fn=lambda t, y, z, x: np.abs(np.asarray(z, dtype=float)) ** (2.0 - eps),
                                cbar=1.0, epsilon=eps, monotone_in_y=True),
            barrier=_kinked_barrier(),
            terminal=_kinked_terminal(),
            horizon=1.0,
            name="subquad",
        )

    raise ConfigurationError(f"unknown problem {name!r}; see list-problems")


def _kinked_terminal() -> TerminalCondition:
    return TerminalCondition(fn=lambda x: np.minimum(np.abs(np.asarray(x, dtype=float)), 2.0),
                             bound=2.0)


def _kinked_barrier() -> Barrier:
    # S(t, x) = min(|x|, 2) + (1 - t)/2: the obstacle starts above the
    # terminal shape and relaxes onto it at T, so reflection is active on a
    # wide region from the start and the penalized solutions carry a
    # substantial compensator at every penalty level.
    def fn(t, x):
        return np.minimum(np.abs(np.asarray(x, dtype=float)), 2.0) + 0.5 * (1.0 - t)

    def drift(t, x):
        return np.full_like(np.asarray(x, dtype=float), -0.5)

    def diffusion(t, x):
        xv = np.asarray(x, dtype=float)
        return np.where(np.abs(xv) < 2.0, np.sign(xv), 0.0)

    return Barrier(fn=fn, sup_plus_bound=2.5, drift_part=drift, diffusion_part=diffusion)


def _check_overrides(name, overrides, allowed):
    unknown = set(overrides) - allowed
    if unknown:
        raise ConfigurationError(
            f"problem {name!r} does not accept overrides {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


BUILTIN_NAMES = ("flat", "american-put", "entropic", "subquad")


def builtin_problems() -> list:
    """The example zoo with default parameters."""
    return [make_problem(n) for n in BUILTIN_NAMES]
