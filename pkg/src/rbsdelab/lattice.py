"""Recombining Bernoulli random-walk lattice for a 1-D Brownian driver.

The walk moves by +/-sqrt(h) with probability 1/2 each step, so increments
match the first two Brownian moments exactly and one-step conditional
expectations are exact two-point averages rather than sampled estimates.
Level i holds i+1 nodes; the children of node (i, j) are (i+1, j+1) on an
up move and (i+1, j) on a down move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_n = T with step h = T/n."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    def t(self, i: int) -> float:
        return (i * self.horizon) / self.n_steps

    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps + 1) * self.horizon) / self.n_steps

    def phi(self, t: float) -> float:
        """Right-endpoint map: t in (t_i, t_{i+1}] goes to t_{i+1}, phi(T) = T.

        Grid points map to themselves; values within 1e-9 steps of a grid
        point are snapped to it to absorb float noise.
        """
        if t < -1e-12 or t > self.horizon * (1 + 1e-12):
            raise ConfigurationError(f"time {t} outside [0, {self.horizon}]")
        r = t * self.n_steps / self.horizon
        k = int(math.ceil(r - 1e-9))
        k = min(max(k, 0), self.n_steps)
        return self.t(k)


@dataclass(frozen=True)
class Lattice:
    """Recombining walk over a TimeGrid; node states are computed on demand."""

    grid: TimeGrid

    @property
    def sqrt_h(self) -> float:
        return math.sqrt(self.grid.h)

    def n_nodes(self, level: int) -> int:
        return level + 1

    def states(self, level: int) -> np.ndarray:
        """Driver values (2j - i) * sqrt(h) for j = 0..level."""
        if not 0 <= level <= self.grid.n_steps:
            raise ConfigurationError(f"level {level} outside 0..{self.grid.n_steps}")
        return (2.0 * np.arange(level + 1) - level) * self.sqrt_h


def build_lattice(horizon: float, n_steps: int) -> Lattice:
    """Build a lattice with n_steps levels over [0, horizon].

    Storage is O(1); states and per-level arrays are materialized on demand,
    so the total work of a backward solve is O(n_steps^2).
    """
    return Lattice(TimeGrid(horizon, n_steps))


@dataclass(frozen=True)
class LevelValues:
    """One value per node of a single lattice level."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.level + 1,):
            raise ConfigurationError(
                f"level {self.level} expects {self.level + 1} values, got shape {vals.shape}"
            )


def _cond_expect(next_values: np.ndarray) -> np.ndarray:
    return 0.5 * (next_values[1:] + next_values[:-1])


def _mart_coeff(next_values: np.ndarray, sqrt_h: float) -> np.ndarray:
    return (next_values[1:] - next_values[:-1]) / (2.0 * sqrt_h)


def cond_expect(next_level: LevelValues) -> LevelValues:
    """Exact one-step conditional expectation: out(j) = (next(j+1) + next(j)) / 2."""
    if next_level.level < 1:
        raise ConfigurationError("cond_expect needs a level >= 1")
    return LevelValues(next_level.level - 1, _cond_expect(next_level.values))


def cond_martingale_coeff(next_level: LevelValues, h: float) -> LevelValues:
    """Exact martingale integrand: out(j) = (next(j+1) - next(j)) / (2 sqrt(h)).

    This is the discrete identification z_i = E_i[y_{i+1} dW] / h on the
    two-point walk; together with cond_expect it reconstructs the children:
    next(j +/-) = cond_expect +/- sqrt(h) * coeff.
    """
    if next_level.level < 1:
        raise ConfigurationError("cond_martingale_coeff needs a level >= 1")
    if h <= 0:
        raise ConfigurationError(f"h must be positive, got {h}")
    return LevelValues(next_level.level - 1, _mart_coeff(next_level.values, math.sqrt(h)))


def expectation_of_sum(terms) -> float:
    """Exact root expectation of sum_i g_i(node at level i).

    ``terms[i]`` holds the node values of g_i at level i (length i+1); the
    list may stop at any level. Computed by one backward averaging pass.
    """
    if len(terms) == 0:
        return 0.0
    acc = np.asarray(terms[-1], dtype=float).copy()
    for g in reversed(terms[:-1]):
        acc = np.asarray(g, dtype=float) + _cond_expect(acc)
    if acc.shape != (1,):
        raise ConfigurationError("terms[i] must have length i+1 down to the root")
    return float(acc[0])


def level_probabilities(n_levels: int):
    """Yield reach probabilities P(level, j) for levels 0..n_levels.

    P satisfies P(l+1, j) = (P(l, j-1) + P(l, j)) / 2; extreme tails underflow
    to 0.0 for very deep lattices, which downstream code treats as unreachable.
    """
    p = np.array([1.0])
    yield p
    for _ in range(n_levels):
        nxt = np.zeros(p.size + 1)
        nxt[1:] += 0.5 * p
        nxt[:-1] += 0.5 * p
        p = nxt
        yield p
