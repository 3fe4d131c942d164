"""Monte Carlo backend: path simulation, least-squares conditional
expectations, and path-sampled error norms.

This is the only backend supporting driver dimension d > 1. Conditional
expectations are realized by cross-sectional regression of the next-step
value on basis functions of the current state together with their
interactions with the step noise; the noise coefficients are the z
estimate. On Bernoulli increments with bins that separate the walk states
this regression reproduces the exact two-point conditional expectation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .problem import ProblemSpec
from .solver import IMPLICIT, PenaltyConfig, backward_step_implicit_penalty

logger = logging.getLogger("rbsdelab.mc")

RIDGE = 1e-8
DEFAULT_MAX_BYTES = 2 << 30


@dataclass(frozen=True)
class PathBundle:
    """Simulated driver increments, shape (n_paths, n_steps, dim)."""

    n_paths: int
    n_steps: int
    dim: int
    horizon: float
    seed: int
    law: str
    increments: np.ndarray

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    def states(self) -> np.ndarray:
        """Cumulative driver values, shape (n_paths, n_steps + 1, dim)."""
        out = np.zeros((self.n_paths, self.n_steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=out[:, 1:, :])
        return out


def simulate_paths(n_paths: int, n_steps: int, dim: int, horizon: float, seed: int,
                   law: str = "bernoulli", max_bytes: int = DEFAULT_MAX_BYTES) -> PathBundle:
    """Simulate i.i.d. increments with mean 0 and variance h per coordinate.

    ``law`` is "bernoulli" (+/- sqrt(h) equiprobable) or "gaussian".
    Reproducible for a fixed seed. Requests whose increment array would
    exceed ``max_bytes`` are refused.
    """
    if n_paths < 1 or n_steps < 1 or dim < 1:
        raise ConfigurationError("n_paths, n_steps and dim must all be >= 1")
    if horizon <= 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    if law not in ("bernoulli", "gaussian"):
        raise ConfigurationError(f"law must be bernoulli or gaussian, got {law!r}")
    need = n_paths * n_steps * dim * 8
    if need > max_bytes:
        raise ConfigurationError(
            f"increment array needs {need} bytes, over the {max_bytes}-byte budget; "
            "reduce paths/steps or raise max_bytes")
    rng = np.random.default_rng(seed)
    sqrt_h = np.sqrt(horizon / n_steps)
    if law == "bernoulli":
        inc = (2.0 * rng.integers(0, 2, size=(n_paths, n_steps, dim)) - 1.0) * sqrt_h
    else:
        inc = rng.standard_normal((n_paths, n_steps, dim)) * sqrt_h
    return PathBundle(n_paths=n_paths, n_steps=n_steps, dim=dim, horizon=horizon,
                      seed=seed, law=law, increments=inc)


@dataclass(frozen=True)
class RegressionBasis:
    """Regression family: "polynomial" (size = degree) or "bins" (size = count).

    Polynomial uses 1, x, ..., x^degree per coordinate (additive across
    coordinates). Bins are equal-width indicator functions over the
    empirical state range of each step and support 1-D drivers only.
    """

    family: str
    size: int

    def __post_init__(self):
        if self.family not in ("polynomial", "bins"):
            raise ConfigurationError(f"family must be polynomial or bins, got {self.family!r}")
        if self.size < 0 or (self.family == "bins" and self.size < 1):
            raise ConfigurationError(f"invalid basis size {self.size}")

    def design(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        m, d = x.shape
        if self.family == "polynomial":
            cols = [np.ones(m)]
            for k in range(d):
                for j in range(1, self.size + 1):
                    cols.append(x[:, k] ** j)
            return np.column_stack(cols)
        if d != 1:
            raise ConfigurationError("bins basis supports 1-D drivers only")
        v = x[:, 0]
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-300:
            return np.ones((m, 1))
        edges = np.linspace(lo, hi, self.size + 1)
        idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, self.size - 1)
        design = np.zeros((m, self.size))
        design[np.arange(m), idx] = 1.0
        return design


@dataclass(frozen=True)
class PathSolution:
    """Per-path arrays of an LSMC solve: y (M, N+1), z (M, N) or (M, N, d),
    k (M, N+1) cumulative along each path."""

    y: np.ndarray
    z: np.ndarray
    k: np.ndarray

    @property
    def y_root(self) -> float:
        return float(self.y[:, 0].mean())


def lsmc_solve(spec: ProblemSpec, bundle: PathBundle, config: PenaltyConfig,
               basis: RegressionBasis) -> PathSolution:
    """Backward induction with regressed conditional expectations.

    At each step the next-step value (and, for substeps > 1, the value at
    the next coarse time) is regressed on basis functions of the current
    state and their products with the step increments; the increment
    coefficients are the z estimate and the plain part the conditional
    mean, which then feeds the same frozen-y implicit penalty step as the
    lattice solver. Rank-deficient designs fall back to ridge (1e-8) with a
    logged warning.
    """
    if config.penalty_mode != IMPLICIT:
        raise ConfigurationError("lsmc_solve supports the implicit penalty mode only")
    n_basis_cap = basis.size + 1 if basis.family == "polynomial" else basis.size
    if n_basis_cap >= bundle.n_paths:
        raise ConfigurationError("basis size must be smaller than the number of paths")
    if bundle.n_steps % config.substeps != 0:
        raise ConfigurationError(
            f"{bundle.n_steps} steps is not a multiple of substeps={config.substeps}")

    m_paths, n_steps, dim = bundle.n_paths, bundle.n_steps, bundle.dim
    h = bundle.h
    lam = config.lam
    states = bundle.states()
    f = spec.generator
    barrier = spec.barrier

    def state_arg(i):
        xs = states[:, i, :]
        return xs[:, 0] if dim == 1 else xs

    y = np.zeros((m_paths, n_steps + 1))
    z = np.zeros((m_paths, n_steps, dim))
    inc_k = np.zeros((m_paths, n_steps))

    y[:, n_steps] = np.asarray(spec.terminal(state_arg(n_steps)), dtype=float)
    frozen_next = y[:, n_steps]

    for i in range(n_steps - 1, -1, -1):
        if (i + 1) % config.substeps == 0:
            frozen_next = y[:, i + 1]
        phi = basis.design(states[:, i, :])
        p = phi.shape[1]
        dw = bundle.increments[:, i, :]
        blocks = [phi] + [phi * dw[:, k:k + 1] for k in range(dim)]
        design = np.hstack(blocks)
        targets = np.column_stack([y[:, i + 1], frozen_next])

        keep = np.flatnonzero(np.any(design != 0.0, axis=0))
        pruned = design[:, keep]
        beta_kept, _, rank, _ = np.linalg.lstsq(pruned, targets, rcond=None)
        if rank < pruned.shape[1]:
            logger.warning("rank-deficient regression at step %d: ridge fallback (%.0e)", i, RIDGE)
            gram = pruned.T @ pruned + RIDGE * np.eye(pruned.shape[1])
            beta_kept = np.linalg.solve(gram, pruned.T @ targets)
        beta = np.zeros((design.shape[1], targets.shape[1]))
        beta[keep] = beta_kept

        cond = phi @ beta[:p, 0]
        frozen = phi @ beta[:p, 1]
        for k in range(dim):
            z[:, i, k] = phi @ beta[p * (1 + k):p * (2 + k), 0]

        t = bundle.horizon * i / n_steps
        x = state_arg(i)
        s_val = np.asarray(barrier(t, x), dtype=float)
        z_arg = z[:, i, 0] if dim == 1 else z[:, i, :]
        y_new = backward_step_implicit_penalty(cond, z_arg, t, h, f, lam, s_val, x,
                                               y_frozen=frozen)
        a1 = cond + h * f(t, frozen, z_arg, x)
        y[:, i] = y_new
        inc_k[:, i] = y_new - a1
        frozen_next = frozen

    k = np.zeros((m_paths, n_steps + 1))
    np.cumsum(inc_k, axis=1, out=k[:, 1:])
    z_out = z[:, :, 0] if dim == 1 else z
    return PathSolution(y=y, z=z_out, k=k)


def sp_error(paths_a: np.ndarray, paths_b: np.ndarray, p: float = 2.0) -> float:
    """Empirical (E[sup_i |A_i - B_i|^p])^(1/p) over paths; grid sup, so a
    lower bound of the continuous-time version."""
    a = np.asarray(paths_a, dtype=float)
    b = np.asarray(paths_b, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch {a.shape} vs {b.shape}")
    if p < 2.0:
        raise ConfigurationError(f"p must be >= 2, got {p}")
    sup = np.max(np.abs(a - b), axis=tuple(range(1, a.ndim)))
    return float(np.mean(sup ** p) ** (1.0 / p))


def hp_error(z_a: np.ndarray, z_b: np.ndarray, h: float, p: float = 2.0) -> float:
    """Empirical (E[(sum_i |dz_i|^2 h)^(p/2)])^(1/p) over paths.

    Arrays are (paths, steps) or (paths, steps, dim); the squared gap is
    summed over the last axis for vector z.
    """
    a = np.asarray(z_a, dtype=float)
    b = np.asarray(z_b, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch {a.shape} vs {b.shape}")
    if p < 2.0:
        raise ConfigurationError(f"p must be >= 2, got {p}")
    if h <= 0:
        raise ConfigurationError(f"h must be positive, got {h}")
    sq = (a - b) ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=2)
    integral = (sq * h).sum(axis=1)
    return float(np.mean(integral ** (p / 2.0)) ** (1.0 / p))
