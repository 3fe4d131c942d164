"""Independent oracles used by the test suite.

``path_tree_solve`` recomputes the penalized backward induction on the full
non-recombining binary tree (2^n leaves). It reuses the solver's one-step
maps, so any disagreement with the lattice isolates the recombination and
conditional-expectation wiring rather than scalar arithmetic.

The binomial pricers are coded from scratch as plain scalar/array loops.
"""
import math

import numpy as np

from rbsdelab.solver import (EXPLICIT, backward_step_explicit,
                             backward_step_implicit_penalty, penalized_generator)


def path_tree_solve(spec, n, config):
    """Solve on the full path tree; level i arrays have 2^i entries.

    Prefix indexing: the children of prefix b are 2b (down) and 2b+1 (up),
    so the lattice node of prefix b is its popcount. Returns
    (y, z, k_inc, popcounts).
    """
    horizon = spec.horizon
    h = horizon / n
    sq = math.sqrt(h)
    m = config.substeps
    assert n % m == 0
    f = spec.generator
    f_lam = penalized_generator(f, config.lam, spec.barrier)

    pc = [np.zeros(1, dtype=int)]
    for lev in range(n):
        prev = pc[-1]
        nxt = np.empty(2 ** (lev + 1), dtype=int)
        nxt[0::2] = prev
        nxt[1::2] = prev + 1
        pc.append(nxt)
    states = [(2.0 * p - lev) * sq for lev, p in enumerate(pc)]

    y = [None] * (n + 1)
    z = [None] * n
    k = [None] * n
    term = np.asarray(spec.terminal(states[n]), dtype=float)
    if term.shape != states[n].shape:
        term = np.broadcast_to(term, states[n].shape).astype(float)
    y[n] = term
    frozen = y[n]
    for lev in range(n - 1, -1, -1):
        nxt_vals = y[lev + 1]
        if (lev + 1) % m == 0:
            frozen = nxt_vals
        up, down = nxt_vals[1::2], nxt_vals[0::2]
        a = 0.5 * (up + down)
        zz = (up - down) / (2.0 * sq)
        frozen = 0.5 * (frozen[1::2] + frozen[0::2])
        t = (lev * horizon) / n
        x = states[lev]
        s_val = np.asarray(spec.barrier(t, x), dtype=float)
        if config.penalty_mode == EXPLICIT:
            y_new = backward_step_explicit(a, zz, t, h, f_lam, x, y_frozen=frozen)
            k_inc = h * config.lam * np.maximum(s_val - y_new, 0.0)
        else:
            y_new = backward_step_implicit_penalty(a, zz, t, h, f, config.lam, s_val, x,
                                                   y_frozen=frozen)
            a1 = a + h * f(t, frozen, zz, x)
            k_inc = y_new - a1
        y[lev] = np.asarray(y_new, dtype=float)
        z[lev] = np.asarray(zz, dtype=float)
        k[lev] = np.asarray(k_inc, dtype=float)
    return y, z, k, pc


def assert_tree_matches_lattice(tree, sol):
    """Bitwise comparison of path-tree values against lattice node values."""
    y, z, k, pc = tree
    for lev, counts in enumerate(pc):
        assert np.array_equal(y[lev], sol.y[lev][counts]), f"y mismatch at level {lev}"
        if lev < len(z):
            assert np.array_equal(z[lev], sol.z[lev][counts]), f"z mismatch at level {lev}"
            assert np.array_equal(k[lev], sol.k_inc[lev][counts]), f"k mismatch at level {lev}"


def tree_cumulative_k(tree):
    """Pathwise cumulative k at the leaves, summed forward along prefixes."""
    _, _, k, pc = tree
    n = len(k)
    acc = np.zeros(1)
    for lev in range(n):
        nxt = np.empty(2 ** (lev + 1))
        cum = acc + k[lev]
        nxt[0::2] = cum
        nxt[1::2] = cum
        acc = nxt
    return acc


def same_tree_american_put(s0, strike, r, sigma, horizon, n):
    """American put on the +/- sqrt(h) walk with drifted state map and
    (1 - r h) one-step discounting; plain scalar loops."""
    h = horizon / n
    sq = math.sqrt(h)

    def stock(t, x):
        return s0 * math.exp(sigma * x + (r - 0.5 * sigma * sigma) * t)

    def payoff(t, x):
        return min(max(strike - stock(t, x), 0.0), strike)

    values = [payoff(horizon, (2 * j - n) * sq) for j in range(n + 1)]
    for i in range(n - 1, -1, -1):
        t = (i * horizon) / n
        nxt = []
        for j in range(i + 1):
            a = 0.5 * (values[j + 1] + values[j])
            cont = a + h * (-r * a)
            nxt.append(max(payoff(t, (2 * j - i) * sq), cont))
        values = nxt
    return values[0]


def classic_crr_american_put(s0, strike, r, sigma, horizon, n):
    """Textbook Cox-Ross-Rubinstein American put (u = exp(sigma sqrt(h)),
    risk-neutral weights, exp(-r h) discounting)."""
    h = horizon / n
    u = math.exp(sigma * math.sqrt(h))
    d = 1.0 / u
    disc = math.exp(-r * h)
    q = (math.exp(r * h) - d) / (u - d)
    ups = np.arange(n + 1)
    vals = np.maximum(strike - s0 * u ** ups * d ** (n - ups), 0.0)
    for i in range(n - 1, -1, -1):
        ups = np.arange(i + 1)
        st = s0 * u ** ups * d ** (i - ups)
        vals = disc * (q * vals[1:] + (1 - q) * vals[:-1])
        vals = np.maximum(vals, strike - st)
    return float(vals[0])


def random_instance(rng):
    """A random generator/barrier/terminal triple safe for explicit stepping
    with lam <= 1.5 and n >= 8 over a unit horizon."""
    from rbsdelab.problem import Barrier, Generator, ProblemSpec, TerminalCondition

    alpha = rng.uniform(-1.0, 1.0)
    beta = rng.uniform(-1.0, 1.0)
    q = rng.uniform(1.0, 2.0)
    c0 = rng.uniform(-1.0, 1.0)
    omega = rng.uniform(0.0, 3.0)
    b0, b1, b2 = rng.uniform(-1.0, 1.0, size=3)
    c1, c2 = rng.uniform(-1.0, 1.0, size=2)

    def fn(t, y, z, x):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        return alpha * y + beta * np.abs(z) ** q + c0 * np.cos(omega * t)

    gen = Generator(fn=fn, cbar=2.0, epsilon=2.0 - (q - 1.0), monotone_in_y=alpha >= 0)
    bar = Barrier(fn=lambda t, x: b0 + b1 * np.asarray(x, dtype=float) + b2 * t,
                  sup_plus_bound=10.0)
    term = TerminalCondition(fn=lambda x: c1 + c2 * np.tanh(np.asarray(x, dtype=float)),
                             bound=abs(c1) + abs(c2))
    return ProblemSpec(generator=gen, barrier=bar, terminal=term, horizon=1.0,
                       name="random")
