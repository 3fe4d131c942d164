"""Backward-induction solvers on the Bernoulli lattice.

Three related dynamic programs:

* ``solve_penalized`` runs the Euler scheme for the penalty-augmented driver
  f(t, y, z) + lam * (y - S)^- with the y-argument frozen at the conditional
  expectation of the value at the next coarse time.
* ``solve_reflected`` runs the obstacle dynamic program
  y = max(S, continuation); it is the lam -> infinity limit of the implicit
  penalty step on the same lattice and serves as the reference solution.
* ``cole_hopf_oracle`` solves the purely quadratic driver gamma |z|^2 / 2 by
  an exponential change of variable, reducing it to a log-domain obstacle
  recursion with no driver at all. It is an independent check because the
  transform eliminates the nonlinearity entirely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericalAbort
from .lattice import Lattice, LevelValues, TimeGrid, _cond_expect, _mart_coeff, level_probabilities
from .problem import Barrier, Generator, ProblemSpec

EXPLICIT = "explicit"
IMPLICIT = "implicit"


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty parameter and stepping mode.

    ``substeps`` is the number of lattice steps per coarse interval; the
    driver's y-argument is frozen across each coarse interval at the
    conditional expectation of the value at its right endpoint. Explicit
    stepping additionally requires h * (cbar + lam) <= 1/2, checked at solve
    time since h belongs to the lattice.
    """

    lam: float
    penalty_mode: str = IMPLICIT
    substeps: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if self.penalty_mode not in (EXPLICIT, IMPLICIT):
            raise ConfigurationError(f"penalty_mode must be explicit or implicit, got {self.penalty_mode!r}")
        if self.substeps < 1:
            raise ConfigurationError(f"substeps must be >= 1, got {self.substeps}")


@dataclass(frozen=True)
class DiscreteSolution:
    """Node arrays of one backward solve.

    ``y[i]`` has i+1 entries for levels 0..N; ``z[i]`` and ``k_inc[i]`` cover
    levels 0..N-1. ``k_inc`` holds the per-node increment of the
    penalization/reflection process over (t_i, t_{i+1}]; along any
    root-to-leaf path the cumulative process is the running sum of the
    visited increments (see ``k_along_path``), so it starts at 0 and never
    decreases. ``k_cum[i]`` carries the expected cumulative E[K at t_i] at
    every node of level i: it is 0 at the root, non-negative, and each child
    value is the parent value plus the level's expected increment, so it is
    non-decreasing along every path. The pathwise process itself is not a
    function of the node on a recombining lattice, which is why the
    node-resolved data lives in the increments.
    """

    grid: TimeGrid
    y: tuple
    z: tuple
    k_inc: tuple
    k_cum: tuple
    config: Optional[PenaltyConfig] = None

    @property
    def n_levels(self) -> int:
        return self.grid.n_steps

    @property
    def y_root(self) -> float:
        return float(self.y[0][0])

    def k_along_path(self, moves) -> np.ndarray:
        """Cumulative k along one path; moves[i] = 1 for up, 0 for down."""
        moves = np.asarray(moves, dtype=int)
        if moves.shape != (self.n_levels,):
            raise ConfigurationError(f"need {self.n_levels} moves, got {moves.shape}")
        out = np.zeros(self.n_levels + 1)
        j = 0
        for i in range(self.n_levels):
            out[i + 1] = out[i] + self.k_inc[i][j]
            j += moves[i]
        return out

    def y_along_path(self, moves) -> np.ndarray:
        moves = np.asarray(moves, dtype=int)
        out = np.zeros(self.n_levels + 1)
        j = 0
        for i in range(self.n_levels + 1):
            out[i] = self.y[i][j]
            if i < self.n_levels:
                j += moves[i]
        return out


def penalized_generator(f: Generator, lam: float, barrier: Barrier) -> Generator:
    """Driver with the obstacle penalty folded in: f + lam * (y - S)^-.

    The penalty term is non-increasing in y, so the wrapper keeps the base
    driver's monotonicity flag (it records the base property). The growth
    constant is enlarged to cover the penalty term.
    """
    if lam < 0:
        raise ConfigurationError(f"lam must be >= 0, got {lam}")

    def fn(t, y, z, x):
        s = barrier(t, x)
        return f(t, y, z, x) + lam * np.maximum(s - y, 0.0)

    return Generator(fn=fn,
                     cbar=f.cbar + lam * max(1.0, barrier.sup_plus_bound),
                     epsilon=f.epsilon,
                     monotone_in_y=f.monotone_in_y)


def backward_step_explicit(a, z, t, h, f_lam, x, y_frozen=None):
    """One explicit Euler step: a + h * f_lam(t, y_frozen, z, x).

    ``a`` is the conditional expectation of the next-level values; the
    driver's y-argument is the frozen value (defaults to a itself), never
    the step output.
    """
    y_arg = a if y_frozen is None else y_frozen
    return a + h * f_lam(t, y_arg, z, x)


def backward_step_implicit_penalty(a, z, t, h, f, lam, s_val, x, y_frozen=None):
    """One step with the penalty resolved in closed form.

    The base driver stays frozen: a1 = a + h f(t, y_frozen, z, x). The fixed
    point of y = a1 + h lam (y - s)^- is a1 when a1 >= s and
    (a1 + h lam s) / (1 + h lam) otherwise, evaluated as
    a1 + (s - a1) h lam / (1 + h lam) so the lift off a1 is non-negative in
    floating point. The output is non-decreasing in lam and tends to
    max(a1, s) as lam grows, which is the reflected step.
    """
    if lam < 0:
        raise ConfigurationError(f"lam must be >= 0, got {lam}")
    y_arg = a if y_frozen is None else y_frozen
    a1 = a + h * f(t, y_arg, z, x)
    gain = h * lam / (1.0 + h * lam)
    return np.where(a1 >= s_val, a1, a1 + gain * (s_val - a1))


def _abort_if_not_finite(arr, level):
    bad = ~np.isfinite(arr)
    if bad.any():
        j = int(np.argmax(bad))
        raise NumericalAbort(f"non-finite value at level {level}, node {j}")


def _forward_cumulative_k(k_inc) -> tuple:
    """Expected cumulative k per level from per-node increments.

    One forward pass over the node reach probabilities gives the expected
    increment of each level; the running sum is broadcast to every node of
    the level so the arrays conform to the lattice shape.
    """
    n = len(k_inc)
    probs = level_probabilities(n)
    out = [np.zeros(1)]
    total = 0.0
    for level, p in enumerate(probs):
        if level == n:
            break
        total += float(np.sum(p * np.asarray(k_inc[level], dtype=float)))
        out.append(np.full(level + 2, total))
    return tuple(out)


def solve_penalized(spec: ProblemSpec, lattice: Lattice, config: PenaltyConfig) -> DiscreteSolution:
    """Backward solve of the penalized scheme on the whole lattice.

    The lattice must carry n_coarse * substeps levels. At each level the
    continuation is the exact conditional expectation, z the exact
    martingale coefficient, and the driver is evaluated at the frozen value
    E_level[y at the next coarse time]. k increments are h lam (y_new - S)^-
    in explicit mode and y_new - a1 (the same quantity by the closed form)
    in implicit mode.
    """
    grid = lattice.grid
    n_total = grid.n_steps
    m = config.substeps
    if n_total % m != 0:
        raise ConfigurationError(
            f"lattice has {n_total} levels, not a multiple of substeps={m}")
    h = grid.h
    f = spec.generator
    lam = config.lam
    if config.penalty_mode == EXPLICIT and h * (f.cbar + lam) > 0.5 + 1e-12:
        raise ConfigurationError(
            f"explicit mode needs h (cbar + lam) <= 1/2; got {h * (f.cbar + lam):.4g}")

    f_lam = penalized_generator(f, lam, spec.barrier)
    sqrt_h = lattice.sqrt_h

    y_here = np.asarray(spec.terminal(lattice.states(n_total)), dtype=float)
    if y_here.shape != (n_total + 1,):
        y_here = np.broadcast_to(y_here, (n_total + 1,)).astype(float)
    _abort_if_not_finite(y_here, n_total)

    y_levels = [None] * (n_total + 1)
    z_levels = [None] * n_total
    k_levels = [None] * n_total
    y_levels[n_total] = y_here
    frozen = y_here

    for lev in range(n_total - 1, -1, -1):
        y_next = y_levels[lev + 1]
        if (lev + 1) % m == 0:
            frozen = y_next  # coarse endpoint reached: restart the freeze source
        a = _cond_expect(y_next)
        z = _mart_coeff(y_next, sqrt_h)
        frozen = _cond_expect(frozen)
        t = grid.t(lev)
        x = lattice.states(lev)
        s_val = np.asarray(spec.barrier(t, x), dtype=float)
        if config.penalty_mode == EXPLICIT:
            y_new = backward_step_explicit(a, z, t, h, f_lam, x, y_frozen=frozen)
            k_inc = h * lam * np.maximum(s_val - y_new, 0.0)
        else:
            y_new = backward_step_implicit_penalty(a, z, t, h, f, lam, s_val, x, y_frozen=frozen)
            a1 = a + h * f(t, frozen, z, x)
            k_inc = y_new - a1
        _abort_if_not_finite(y_new, lev)
        y_levels[lev] = np.asarray(y_new, dtype=float)
        z_levels[lev] = z
        k_levels[lev] = np.asarray(k_inc, dtype=float)

    return DiscreteSolution(grid=grid,
                            y=tuple(y_levels),
                            z=tuple(z_levels),
                            k_inc=tuple(k_levels),
                            k_cum=_forward_cumulative_k(k_levels),
                            config=config)


def solve_reflected(spec: ProblemSpec, lattice: Lattice) -> DiscreteSolution:
    """Obstacle dynamic program: y = max(S, a + h f(t, a, z)).

    The k increment is the lift y - (a + h f), which is zero off contact and
    exactly zero at ties, so the flatness identity sum (y - S) dk = 0 holds
    termwise along every path.
    """
    grid = lattice.grid
    n_total = grid.n_steps
    h = grid.h
    sqrt_h = lattice.sqrt_h
    f = spec.generator

    y_here = np.asarray(spec.terminal(lattice.states(n_total)), dtype=float)
    if y_here.shape != (n_total + 1,):
        y_here = np.broadcast_to(y_here, (n_total + 1,)).astype(float)
    _abort_if_not_finite(y_here, n_total)

    y_levels = [None] * (n_total + 1)
    z_levels = [None] * n_total
    k_levels = [None] * n_total
    y_levels[n_total] = y_here

    for lev in range(n_total - 1, -1, -1):
        y_next = y_levels[lev + 1]
        a = _cond_expect(y_next)
        z = _mart_coeff(y_next, sqrt_h)
        t = grid.t(lev)
        x = lattice.states(lev)
        cont = a + h * f(t, a, z, x)
        s_val = np.asarray(spec.barrier(t, x), dtype=float)
        y_new = np.maximum(s_val, cont)
        _abort_if_not_finite(y_new, lev)
        y_levels[lev] = np.asarray(y_new, dtype=float)
        z_levels[lev] = z
        k_levels[lev] = np.asarray(y_new - cont, dtype=float)

    return DiscreteSolution(grid=grid,
                            y=tuple(y_levels),
                            z=tuple(z_levels),
                            k_inc=tuple(k_levels),
                            k_cum=_forward_cumulative_k(k_levels),
                            config=None)


def cole_hopf_oracle(gamma: float, spec: ProblemSpec, lattice: Lattice) -> list:
    """Closed obstacle solve for the driver gamma |z|^2 / 2.

    Works entirely in the log domain: with L = gamma * y the recursion is
    L = max(gamma S, logaddexp(L_up, L_down) - log 2), which is the obstacle
    envelope of exp(gamma S) with terminal exp(gamma xi) without ever
    exponentiating, so no overflow is possible. Returns LevelValues per
    level, y = L / gamma.

    Raises ConfigurationError when the problem's driver is not numerically
    equal to gamma |z|^2 / 2.
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    _require_quadratic_driver(spec.generator, gamma, spec.horizon)

    grid = lattice.grid
    n_total = grid.n_steps
    log2 = math.log(2.0)

    levels = [None] * (n_total + 1)
    log_y = gamma * np.asarray(spec.terminal(lattice.states(n_total)), dtype=float)
    if log_y.shape != (n_total + 1,):
        log_y = np.broadcast_to(log_y, (n_total + 1,)).astype(float)
    levels[n_total] = LevelValues(n_total, log_y / gamma)
    for lev in range(n_total - 1, -1, -1):
        cont = np.logaddexp(log_y[1:], log_y[:-1]) - log2
        s_val = gamma * np.asarray(spec.barrier(grid.t(lev), lattice.states(lev)), dtype=float)
        log_y = np.maximum(s_val, cont)
        _abort_if_not_finite(log_y, lev)
        levels[lev] = LevelValues(lev, log_y / gamma)
    return levels


def _require_quadratic_driver(gen: Generator, gamma: float, horizon: float):
    ts = np.array([0.0, 0.5 * horizon, horizon])
    zs = np.array([-3.0, -1.0, 0.0, 0.7, 2.5])
    for t in ts:
        for y in (-1.0, 0.0, 2.0):
            got = np.asarray(gen(t, np.full_like(zs, y), zs, np.zeros_like(zs)), dtype=float)
            want = 0.5 * gamma * zs ** 2
            if not np.allclose(got, want, rtol=1e-10, atol=1e-12):
                raise ConfigurationError(
                    "cole_hopf_oracle requires the driver gamma |z|^2 / 2 exactly")


@dataclass(frozen=True)
class FreezeGap:
    """Per-node freeze and penalty gaps with their declared bound values.

    ``p[i]`` is E_i[y at the next coarse time] - y_i, the bias the frozen
    y-argument introduces; ``q[i]`` compares the penalty term at the frozen
    value against the one at a supplied reference solution. ``p_bound`` and
    ``q_bound`` are the declared constants' envelope, infinite for
    fully quadratic drivers (epsilon == 0).
    """

    p: tuple
    q: tuple
    p_bound: float
    q_bound: float


def freeze_gap(spec: ProblemSpec, lattice: Lattice, config: PenaltyConfig,
               reference: DiscreteSolution) -> FreezeGap:
    """Solve the penalized scheme and measure its freeze/penalty gaps.

    ``reference`` must live on the same lattice; its y plays the comparison
    solution inside q.
    """
    if reference.grid != lattice.grid:
        raise ConfigurationError("reference solved on a different lattice")
    sol = solve_penalized(spec, lattice, config)
    grid = lattice.grid
    n_total = grid.n_steps
    m = config.substeps
    n_coarse = n_total // m
    lam = config.lam

    p_levels = [None] * (n_total + 1)
    q_levels = [None] * (n_total + 1)
    p_levels[n_total] = np.zeros(n_total + 1)
    q_levels[n_total] = np.zeros(n_total + 1)
    frozen = sol.y[n_total]
    for lev in range(n_total - 1, -1, -1):
        if (lev + 1) % m == 0:
            frozen = sol.y[lev + 1]
        frozen = _cond_expect(frozen)
        t = grid.t(lev)
        x = lattice.states(lev)
        s_val = np.asarray(spec.barrier(t, x), dtype=float)
        p_levels[lev] = frozen - sol.y[lev]
        q_levels[lev] = (lam * np.maximum(s_val - frozen, 0.0)
                         - lam * np.maximum(s_val - reference.y[lev], 0.0))

    eps = spec.generator.epsilon
    c = spec.generator.cbar
    if eps > 0.0:
        expo = max(4.0 - 2.0 * eps, 4.0 / eps - 2.0)
        p_bound = c * (1.0 + lam) / n_coarse + c * lam ** expo * (1.0 / n_coarse) ** (eps / 2.0)
    else:
        p_bound = math.inf
    return FreezeGap(p=tuple(p_levels), q=tuple(q_levels),
                     p_bound=p_bound, q_bound=c * lam)
