"""Config-driven experiment runner.

Three sweep families, each isolating one error source:

* penalty sweeps compare penalized solves against the reflected oracle on
  the same lattice (pure penalization error),
* mesh sweeps compare against a much finer solve of the same penalized
  scheme (pure discretization error, self-convergence),
* coupled sweeps tie the penalty to the mesh via lam = ceil(n^theta) and
  measure the total root error against a fine reflected reference.

Reports carry every config field, so an experiment is reproducible from its
JSON echo alone. Numeric results are deterministic for a fixed config; the
recorded wall-clock seconds are the only fields that vary between runs.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._version import __version__
from .diagnostics import RateReport, bmo_estimate, fit_rate, penalty_violation, skorohod_residual
from .errors import ConfigurationError
from .lattice import build_lattice, expectation_of_sum
from .mc import PathBundle, RegressionBasis, lsmc_solve, simulate_paths
from .problem import ProblemSpec, make_problem, validate_assumptions
from .solver import PenaltyConfig, cole_hopf_oracle, solve_penalized, solve_reflected

ZERO_SWEEP_TOL = 1e-13

OVERRIDE_KEYS = ("c", "gamma", "epsilon", "r", "strike")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; every field has a config-file key."""

    problem: str = "entropic"
    c: Optional[float] = None
    gamma: Optional[float] = None
    epsilon: Optional[float] = None
    r: Optional[float] = None
    strike: Optional[float] = None
    backend: str = "lattice"
    n: int = 256
    lam: float = 16.0
    lambdas: tuple = ()
    ns: tuple = ()
    n_reference: Optional[int] = None
    theta: Optional[float] = None
    penalty_mode: str = "implicit"
    substeps: int = 1
    p: float = 2.0
    seed: int = 0
    out: str = "."
    fmt: str = "csv"
    m_paths: int = 10000
    mc_steps: int = 64
    law: str = "bernoulli"
    basis: str = "polynomial"
    basis_size: int = 5
    dim: int = 1

    def __post_init__(self):
        if self.backend not in ("lattice", "mc"):
            raise ConfigurationError(f"backend must be lattice or mc, got {self.backend!r}")
        if self.fmt not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.fmt!r}")
        if self.p < 2.0:
            raise ConfigurationError(f"p must be >= 2, got {self.p}")
        if self.n < 1 or self.substeps < 1:
            raise ConfigurationError("n and substeps must be >= 1")

    def overrides(self) -> dict:
        return {k: getattr(self, k) for k in OVERRIDE_KEYS if getattr(self, k) is not None}

    def problem_spec(self) -> ProblemSpec:
        return make_problem(self.problem, **self.overrides())

    def echo(self) -> dict:
        raw = dataclasses.asdict(self)
        raw["lambda"] = raw.pop("lam")
        raw["format"] = raw.pop("fmt")
        raw["lambdas"] = list(self.lambdas)
        raw["ns"] = list(self.ns)
        return raw


_KEY_CASTS = {
    "problem": ("problem", str),
    "c": ("c", float),
    "gamma": ("gamma", float),
    "epsilon": ("epsilon", float),
    "r": ("r", float),
    "strike": ("strike", float),
    "backend": ("backend", str),
    "n": ("n", int),
    "lambda": ("lam", float),
    "lambdas": ("lambdas", "float_list"),
    "ns": ("ns", "int_list"),
    "n_reference": ("n_reference", int),
    "theta": ("theta", float),
    "penalty_mode": ("penalty_mode", str),
    "substeps": ("substeps", int),
    "p": ("p", float),
    "seed": ("seed", int),
    "out": ("out", str),
    "format": ("fmt", str),
    "m_paths": ("m_paths", int),
    "mc_steps": ("mc_steps", int),
    "law": ("law", str),
    "basis": ("basis", str),
    "basis_size": ("basis_size", int),
    "dim": ("dim", int),
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format.

    Blank lines and lines starting with ``#`` are ignored. Values are typed
    per key; list-valued keys take comma-separated entries. Unknown keys are
    errors, never silently dropped.
    """
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_CASTS:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        attr, cast = _KEY_CASTS[key]
        try:
            if cast == "float_list":
                fields[attr] = tuple(float(v) for v in value.split(",") if v.strip())
            elif cast == "int_list":
                fields[attr] = tuple(int(v) for v in value.split(",") if v.strip())
            else:
                fields[attr] = cast(value)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return ExperimentConfig(**fields)


def parse_config_file(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    n: int
    y0: float
    err_y_sup: Optional[float] = None
    err_z_h2: Optional[float] = None
    err_k_sup: Optional[float] = None
    bmo: Optional[float] = None
    penalty_violation: Optional[float] = None
    skorohod: Optional[float] = None
    seconds: float = 0.0
    bound: Optional[float] = None


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    config_echo: dict
    points: tuple
    fits: dict
    reference: dict = field(default_factory=dict)
    notes: tuple = ()
    format_version: str = "1"


def _require_sweep(values, name):
    if len(values) == 0:
        raise ConfigurationError(f"{name} sweep is empty")
    if any(v <= 0 for v in values):
        raise ConfigurationError(f"{name} sweep entries must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigurationError(f"{name} sweep must be strictly increasing")


def _sup_gap(levels_a, levels_b) -> float:
    return max(float(np.max(np.abs(a - b))) for a, b in zip(levels_a, levels_b))


def _h2_gap(sol, ref) -> float:
    h = sol.grid.h
    terms = [(sol.z[i] - ref.z[i]) ** 2 * h for i in range(sol.n_levels)]
    return math.sqrt(max(expectation_of_sum(terms), 0.0))


def _fit_or_note(pairs, family, notes):
    positive = [(a, b) for a, b in pairs if b > ZERO_SWEEP_TOL]
    if len(pairs) < 2:
        notes.append(f"{family}: single-point sweep, no rate fit")
        return None
    if len(positive) == 0:
        notes.append(f"{family}: degenerate zero sweep (errors at roundoff), no rate fit")
        return None
    if len(positive) < len(pairs):
        notes.append(f"{family}: {len(pairs) - len(positive)} zero error point(s) dropped from fit")
    if len(positive) < 2:
        return None
    return fit_rate(positive)


def run_penalization_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Sweep the penalty parameter at a fixed lattice.

    The reference is the reflected solve on the same lattice, which is the
    exact large-penalty limit of the implicit step, so the measured errors
    isolate the penalization effect. When the driver is the quadratic
    entropic one, the closed log-domain oracle is run as an independent
    cross-check and its root gap to the reflected solve is recorded. The z
    error is the quadratic time-integral norm computed exactly on the
    lattice (order p only affects the Monte Carlo norms).
    """
    if config.backend != "lattice":
        raise ConfigurationError("penalization sweeps run on the lattice backend")
    _require_sweep(config.lambdas, "lambda")
    spec = config.problem_spec()
    lattice = build_lattice(spec.horizon, config.n * config.substeps)
    ref = solve_reflected(spec, lattice)
    notes = []
    reference = {"reflected_root": ref.y_root, "n": config.n}
    if spec.name == "entropic":
        gamma = config.gamma if config.gamma is not None else 1.0
        ch = cole_hopf_oracle(gamma, spec, lattice)
        reference["cole_hopf_root"] = float(ch[0].values[0])
        reference["reflected_vs_cole_hopf_root_gap"] = abs(ref.y_root - reference["cole_hopf_root"])

    points = []
    for lam in config.lambdas:
        t0 = time.perf_counter()
        sol = solve_penalized(spec, lattice, PenaltyConfig(lam=lam,
                                                           penalty_mode=config.penalty_mode,
                                                           substeps=config.substeps))
        _, integral = penalty_violation(sol, spec, lam)
        points.append(SweepPoint(
            lam=float(lam), n=config.n, y0=sol.y_root,
            err_y_sup=_sup_gap(sol.y, ref.y),
            err_z_h2=_h2_gap(sol, ref),
            err_k_sup=_sup_gap(sol.k_cum, ref.k_cum),
            bmo=bmo_estimate(sol),
            penalty_violation=integral,
            skorohod=skorohod_residual(sol, spec),
            seconds=time.perf_counter() - t0,
        ))

    fits = {
        "y": _fit_or_note([(pt.lam, pt.err_y_sup) for pt in points], "y", notes),
        "z": _fit_or_note([(pt.lam, pt.err_z_h2) for pt in points], "z", notes),
        "k": _fit_or_note([(pt.lam, pt.err_k_sup) for pt in points], "k", notes),
    }
    return ExperimentReport(kind="penalization", config_echo=config.echo(),
                            points=tuple(points), fits=fits, reference=reference,
                            notes=tuple(notes))


def _matched_levels_y_gap(coarse, fine, ratio, lattice_c, lattice_f) -> float:
    worst = 0.0
    for i in range(coarse.n_levels + 1):
        xc = lattice_c.states(i)
        xf = lattice_f.states(i * ratio)
        approx = np.interp(xc, xf, fine.y[i * ratio])
        worst = max(worst, float(np.max(np.abs(coarse.y[i] - approx))))
    return worst


def _matched_levels_z_gap(coarse, fine, ratio, lattice_c, lattice_f) -> float:
    h = coarse.grid.h
    terms = []
    for i in range(coarse.n_levels):
        xc = lattice_c.states(i)
        xf = lattice_f.states(i * ratio)
        approx = np.interp(xc, xf, fine.z[i * ratio])
        terms.append((coarse.z[i] - approx) ** 2 * h)
    return math.sqrt(max(expectation_of_sum(terms), 0.0))


def run_discretization_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Self-convergence in the mesh at a fixed penalty.

    Each solve is compared at matched coarse times against the finest solve
    of the same scheme, with the fine solution interpolated linearly in the
    walk state. Every sweep entry must divide the reference mesh so times
    match exactly.
    """
    if config.backend != "lattice":
        raise ConfigurationError("mesh sweeps run on the lattice backend")
    _require_sweep(config.ns, "n")
    n_ref = config.n_reference if config.n_reference is not None else 8 * max(config.ns)
    if n_ref <= max(config.ns):
        raise ConfigurationError(f"n_reference={n_ref} must exceed the largest sweep entry")
    for n in config.ns:
        if n_ref % n != 0:
            raise ConfigurationError(f"n_reference={n_ref} is not a multiple of sweep entry {n}")

    spec = config.problem_spec()

    def pcfg():
        return PenaltyConfig(lam=config.lam, penalty_mode=config.penalty_mode,
                             substeps=config.substeps)

    lattice_f = build_lattice(spec.horizon, n_ref * config.substeps)
    fine = solve_penalized(spec, lattice_f, pcfg())
    notes = []
    reference = {"n_reference": n_ref, "reference_root": fine.y_root, "lambda": config.lam}

    points = []
    for n in config.ns:
        t0 = time.perf_counter()
        lattice_c = build_lattice(spec.horizon, n * config.substeps)
        sol = solve_penalized(spec, lattice_c, pcfg())
        ratio = (n_ref * config.substeps) // (n * config.substeps)
        _, integral = penalty_violation(sol, spec, config.lam)
        points.append(SweepPoint(
            lam=config.lam, n=int(n), y0=sol.y_root,
            err_y_sup=_matched_levels_y_gap(sol, fine, ratio, lattice_c, lattice_f),
            err_z_h2=_matched_levels_z_gap(sol, fine, ratio, lattice_c, lattice_f),
            err_k_sup=None,
            bmo=bmo_estimate(sol),
            penalty_violation=integral,
            skorohod=skorohod_residual(sol, spec),
            seconds=time.perf_counter() - t0,
        ))

    fits = {
        "y": _fit_or_note([(pt.n, pt.err_y_sup) for pt in points], "y", notes),
        "z": _fit_or_note([(pt.n, pt.err_z_h2) for pt in points], "z", notes),
    }
    return ExperimentReport(kind="discretization", config_echo=config.echo(),
                            points=tuple(points), fits=fits, reference=reference,
                            notes=tuple(notes))


def run_coupled_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Couple the penalty to the mesh, lam = ceil(n^theta), and track the
    total root error against a fine reflected reference.

    Each point also records the scheme's predicted error envelope
    sqrt(lam^e / n^(eps+1) + lam^2 / n + 1 / lam) with unit constant for
    side-by-side reporting; the envelope is undefined (null) for fully
    quadratic drivers. When the driver is not non-decreasing in y the
    polynomial coupling is not guaranteed and a note flags the slower
    logarithmic regime.
    """
    if config.backend != "lattice":
        raise ConfigurationError("coupled sweeps run on the lattice backend")
    if config.theta is None:
        raise ConfigurationError("coupled sweeps need theta")
    _require_sweep(config.ns, "n")
    n_ref = config.n_reference if config.n_reference is not None else 4 * max(config.ns)
    if n_ref < max(config.ns):
        raise ConfigurationError(f"n_reference={n_ref} must be at least the largest sweep entry")

    spec = config.problem_spec()
    lattice_ref = build_lattice(spec.horizon, n_ref)
    ref = solve_reflected(spec, lattice_ref)
    notes = []
    if not spec.generator.monotone_in_y:
        notes.append("driver not non-decreasing in y: only a logarithmic coupling rate is guaranteed")
    reference = {"n_reference": n_ref, "reflected_root": ref.y_root, "theta": config.theta}

    eps = spec.generator.epsilon
    points = []
    for n in config.ns:
        lam = float(math.ceil(n ** config.theta))
        t0 = time.perf_counter()
        lattice = build_lattice(spec.horizon, n * config.substeps)
        sol = solve_penalized(spec, lattice, PenaltyConfig(lam=lam,
                                                           penalty_mode=config.penalty_mode,
                                                           substeps=config.substeps))
        _, integral = penalty_violation(sol, spec, lam)
        if eps > 0.0:
            expo = max(8.0 - 4.0 * eps, 8.0 / eps - 4.0)
            bound = math.sqrt(lam ** expo / n ** (eps + 1.0) + lam ** 2 / n + 1.0 / lam)
        else:
            bound = None
        points.append(SweepPoint(
            lam=lam, n=int(n), y0=sol.y_root,
            err_y_sup=abs(sol.y_root - ref.y_root),
            err_z_h2=None, err_k_sup=None,
            bmo=bmo_estimate(sol),
            penalty_violation=integral,
            skorohod=skorohod_residual(sol, spec),
            seconds=time.perf_counter() - t0,
            bound=bound,
        ))

    fits = {"y": _fit_or_note([(pt.n, pt.err_y_sup) for pt in points], "y", notes)}
    return ExperimentReport(kind="coupled", config_echo=config.echo(),
                            points=tuple(points), fits=fits, reference=reference,
                            notes=tuple(notes))


def run_single_solve(config: ExperimentConfig) -> ExperimentReport:
    """One solve, lattice or Monte Carlo, reported as a one-point sweep."""
    spec = config.problem_spec()
    notes = []
    if config.backend == "lattice":
        t0 = time.perf_counter()
        lattice = build_lattice(spec.horizon, config.n * config.substeps)
        sol = solve_penalized(spec, lattice, PenaltyConfig(lam=config.lam,
                                                           penalty_mode=config.penalty_mode,
                                                           substeps=config.substeps))
        _, integral = penalty_violation(sol, spec, config.lam)
        point = SweepPoint(lam=config.lam, n=config.n, y0=sol.y_root,
                           bmo=bmo_estimate(sol),
                           penalty_violation=integral,
                           skorohod=skorohod_residual(sol, spec),
                           seconds=time.perf_counter() - t0)
        reference = {}
    else:
        t0 = time.perf_counter()
        bundle = simulate_paths(config.m_paths, config.mc_steps, config.dim,
                                spec.horizon, config.seed, config.law)
        basis = RegressionBasis(family="polynomial" if config.basis == "polynomial" else "bins",
                                size=config.basis_size)
        sol = lsmc_solve(spec, bundle, PenaltyConfig(lam=config.lam,
                                                     penalty_mode="implicit",
                                                     substeps=config.substeps), basis)
        point = SweepPoint(lam=config.lam, n=config.mc_steps, y0=sol.y_root,
                           seconds=time.perf_counter() - t0)
        reference = {"m_paths": config.m_paths, "law": config.law}
        notes.append("mc backend: diagnostics columns apply to the lattice backend only")
    return ExperimentReport(kind="solve", config_echo=config.echo(),
                            points=(point,), fits={}, reference=reference, notes=tuple(notes))


CSV_COLUMNS = ("lambda", "n", "y0", "err_y_sup", "err_z_h2", "err_k_sup",
               "bmo", "penalty_violation", "skorohod", "seconds")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(report: ExperimentReport, fmt: str, out_dir) -> list:
    """Write the report as ``<kind>.csv`` or ``<kind>.json`` under out_dir.

    CSV uses '.' decimals, LF line endings and a mandatory header; JSON
    encodes doubles losslessly (repr round-trip). Bytes are a pure function
    of the report.
    """
    if fmt not in ("csv", "json"):
        raise ConfigurationError(f"format must be csv or json, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt == "csv":
        path = out / f"{report.kind}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for pt in report.points:
                writer.writerow([_csv_cell(v) for v in
                                 (pt.lam, pt.n, pt.y0, pt.err_y_sup, pt.err_z_h2,
                                  pt.err_k_sup, pt.bmo, pt.penalty_violation,
                                  pt.skorohod, pt.seconds)])
        paths.append(path)
    else:
        path = out / f"{report.kind}.json"
        payload = {
            "format_version": report.format_version,
            "kind": report.kind,
            "config": report.config_echo,
            "points": [dataclasses.asdict(pt) for pt in report.points],
            "fits": {k: (dataclasses.asdict(v) if isinstance(v, RateReport) else None)
                     for k, v in report.fits.items()},
            "reference": report.reference,
            "notes": list(report.notes),
            "versions": {"rbsdelab": __version__, "numpy": np.__version__},
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        paths.append(path)
    return paths


def run_validation(config: ExperimentConfig, sample_budget: int = 10_000,
                   state_range=(-5.0, 5.0)):
    """Validate the configured problem's declared assumptions."""
    return validate_assumptions(config.problem_spec(), sample_budget, state_range)
