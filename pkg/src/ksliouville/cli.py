"""Experiment runner.

Usage::

    ksliouville --config run.ini --out results/ [--threads K] [--seed S] [--dump-fields]

The configuration is an INI file; see ``docs/config.md`` for the schema.
Exit codes: 0 success, 2 configuration or domain error, 3 convergence
failure, 4 blow-up or concentration signal.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import struct
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import potential
from .criticality import InteractionSpec, classify, mask_members, weighted_drift_min
from .dynamics import EvolveOptions, evolve
from .energy import inequality_gap, virial_defect
from .errors import BlowUp, ConcentrationOverflow, ConvergenceError, DomainError, KSError
from .field import DensityField, Grid2D
from .minimizer import CONCENTRATION, MINIMIZER, MinimizeOptions, approach_sequence, minimize
from .radial import asymptotics_check, mass_balance, ode_residual, solve_radial

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_SIGNAL = 4

COMMANDS = ("classify", "minimize", "radial", "evolve", "inequality", "sweep")
SWEEP_AXES = ("mass", "separation", "approach")
INITS = ("gaussian", "random")

FIELD_MAGIC = b"KSFIELD1"
HEADER = struct.Struct("<8sqdq")


class ConfigError(KSError, ValueError):
    """Malformed configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    A: tuple
    beta: tuple
    v: tuple = ()
    L: float = 12.0
    N: int = 256
    seed: int = 0
    init: str = "gaussian"
    init_variance: float = 1.0
    theta0: float = 0.5
    theta_min: float = 1e-4
    tol_fp: float = 1e-8
    max_iter: int = 5000
    virial_tol: float = 0.5
    t_end: float = 10.0
    cfl: float = 0.4
    dt: float | None = None
    radial_tol: float = 1e-12
    s_min: float = -12.0
    s_max: float = 3.0
    num_s: int = 4096
    sweep_axis: str = "mass"
    sweep_values: tuple = ()
    sweep_command: str = "minimize"
    out: str = "out"
    dump_fields: bool = False

    def __post_init__(self):
        _validate(self)

    @property
    def n(self) -> int:
        return len(self.beta)

    def spec(self) -> InteractionSpec:
        v = np.array(self.v, dtype=float).reshape(-1, 2) if self.v else np.zeros((self.n, 2))
        n = self.n
        return InteractionSpec(np.array(self.A, dtype=float).reshape(n, n), np.array(self.beta, dtype=float), v)

    def grid(self) -> Grid2D:
        return Grid2D(self.L, self.N)

    def minimize_options(self) -> MinimizeOptions:
        return MinimizeOptions(theta0=self.theta0, theta_min=self.theta_min, tol_fp=self.tol_fp,
                               max_iter=self.max_iter, virial_tol=self.virial_tol)


# key -> (section, parser)
def _floats(text):
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = text.strip().lower()
    return None if t in ("", "none", "auto") else float(t)


SCHEMA = {
    "command": ("run", str),
    "seed": ("run", int),
    "A": ("spec", _floats),
    "beta": ("spec", _floats),
    "v": ("spec", _floats),
    "L": ("grid", float),
    "N": ("grid", int),
    "init": ("solver", str),
    "init_variance": ("solver", float),
    "theta0": ("solver", float),
    "theta_min": ("solver", float),
    "tol_fp": ("solver", float),
    "max_iter": ("solver", int),
    "virial_tol": ("solver", float),
    "t_end": ("solver", float),
    "cfl": ("solver", float),
    "dt": ("solver", _opt_float),
    "radial_tol": ("solver", float),
    "s_min": ("solver", float),
    "s_max": ("solver", float),
    "num_s": ("solver", int),
    "sweep_axis": ("sweep", str),
    "sweep_values": ("sweep", _floats),
    "sweep_command": ("sweep", str),
    "out": ("output", str),
    "dump_fields": ("output", _bool),
}
SECTIONS = ("run", "spec", "grid", "solver", "sweep", "output")
# keys as written in the file; section-local names stay short
FILE_KEYS = {"sweep_axis": "axis", "sweep_values": "values", "sweep_command": "command",
             "out": "dir"}


def _validate(c: ExperimentConfig):
    def bad(key, msg):
        sec = SCHEMA[key][0]
        raise ConfigError(f"[{sec}] {FILE_KEYS.get(key, key)}: {msg}")

    if c.command not in COMMANDS:
        bad("command", f"unknown command {c.command!r}; expected one of {', '.join(COMMANDS)}")
    n = len(c.beta)
    if n == 0:
        bad("beta", "at least one species is required")
    if len(c.A) != n * n:
        bad("A", f"expected {n * n} entries (row-major {n}x{n}), got {len(c.A)}")
    M = np.array(c.A, dtype=float).reshape(n, n)
    if not np.array_equal(M, M.T):
        bad("A", "matrix is not symmetric")
    if np.any(M < 0):
        bad("A", "couplings must be nonnegative")
    if any(b <= 0 for b in c.beta):
        bad("beta", "masses must be positive")
    if c.v and len(c.v) != 2 * n:
        bad("v", f"expected {2 * n} coordinates (x1, y1, ...), got {len(c.v)}")
    if not c.L > 0:
        bad("L", "must be positive")
    if c.N <= 0 or c.N % 2:
        bad("N", "must be a positive even integer")
    if c.init not in INITS:
        bad("init", f"expected one of {', '.join(INITS)}")
    for key in ("init_variance", "theta0", "theta_min", "tol_fp", "virial_tol", "t_end", "cfl", "radial_tol"):
        if not getattr(c, key) > 0:
            bad(key, "must be positive")
    if c.dt is not None and not c.dt > 0:
        bad("dt", "must be positive or 'auto'")
    if c.theta_min > c.theta0 or c.theta0 > 1:
        bad("theta0", "need theta_min <= theta0 <= 1")
    if c.max_iter < 1:
        bad("max_iter", "must be at least 1")
    if not c.s_min < c.s_max:
        bad("s_min", "must be below s_max")
    if c.num_s < 8:
        bad("num_s", "must be at least 8")
    if c.sweep_axis not in SWEEP_AXES:
        bad("sweep_axis", f"expected one of {', '.join(SWEEP_AXES)}")
    if c.sweep_command not in ("minimize", "classify"):
        bad("sweep_command", "expected minimize or classify")
    if c.command == "sweep" and not c.sweep_values:
        bad("sweep_values", "a sweep needs at least one value")
    if c.command == "sweep" and c.sweep_axis == "separation" and n != 2:
        bad("sweep_axis", "the separation sweep needs exactly two species")
    if c.seed < 0 or c.seed >= 2 ** 64:
        bad("seed", "must be an unsigned 64-bit integer")


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into a validated :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"syntax: {e}") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
    lookup = {(sec, FILE_KEYS.get(k, k)): k for k, (sec, _) in SCHEMA.items()}
    kw = {}
    for sec in cp.sections():
        for fkey, raw in cp.items(sec):
            key = lookup.get((sec, fkey))
            if key is None:
                raise ConfigError(f"[{sec}] {fkey}: unknown key")
            try:
                kw[key] = SCHEMA[key][1](raw)
            except ValueError as e:
                raise ConfigError(f"[{sec}] {fkey}: {e}") from None
    for req in ("command", "A", "beta"):
        if req not in kw:
            sec = SCHEMA[req][0]
            raise ConfigError(f"[{sec}] {req}: missing")
    return ExperimentConfig(**kw)


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config: ExperimentConfig) -> str:
    """Serialize to INI text; :func:`parse_config` inverts this exactly."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec in SECTIONS:
        cp.add_section(sec)
    for f in fields(config):
        sec = SCHEMA[f.name][0]
        cp.set(sec, FILE_KEYS.get(f.name, f.name), _fmt(getattr(config, f.name)))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return parse_config(text)


# initial fields

def initial_field(config: ExperimentConfig, spec: InteractionSpec) -> DensityField:
    """Gaussians at the drift centers, or a seeded random Gaussian mixture."""
    grid = config.grid()
    if config.init == "gaussian":
        return DensityField.gaussians(grid, spec.beta, spec.v, config.init_variance)
    rng = np.random.default_rng(config.seed)
    vals = []
    for i in range(spec.n):
        acc = np.zeros((grid.N, grid.N))
        for _ in range(3):
            c = spec.v[i] + rng.normal(scale=0.5, size=2)
            var = config.init_variance * rng.uniform(0.5, 1.5)
            acc += rng.uniform(0.2, 1.0) * np.exp(-grid.dist2(c) / (2 * var))
        vals.append(acc)
    return DensityField(grid, vals).normalized(spec.beta)


# outputs

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_result(out: Path, doc: dict):
    (out / "result.json").write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n",
                                     encoding="utf-8")


def write_trace(out: Path, header, rows):
    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def dump_fields(out: Path, field: DensityField, meta: dict):
    """One binary file per species plus a JSON sidecar."""
    d = out / "fields"
    d.mkdir(parents=True, exist_ok=True)
    g = field.grid
    names = []
    for i in range(field.n):
        name = f"species_{i}.bin"
        with open(d / name, "wb") as fh:
            fh.write(HEADER.pack(FIELD_MAGIC, g.N, g.L, i))
            fh.write(np.ascontiguousarray(field.values[i], dtype="<f8").tobytes())
        names.append(name)
    side = dict(meta, N=g.N, L=g.L, h=g.h, files=names, masses=field.masses(),
                layout="row-major, first index along x, little-endian float64 after a 32-byte header")
    (d / "fields.json").write_text(json.dumps(_jsonable(side), sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")


def read_field_dump(path) -> tuple[int, float, int, np.ndarray]:
    """Inverse of the binary dump: ``(N, L, species, values)``."""
    raw = Path(path).read_bytes()
    magic, N, L, i = HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise DomainError(f"{path}: not a field dump")
    vals = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(N, N)
    return N, L, i, vals


# commands

def _minimize_trace(report):
    n = report.final_field.n
    header = ["iter", "F_v", "entropy_total"] + [f"second_moment_{i}" for i in range(n)] + ["residual", "max_density"]
    rows = [[d["iter"], d["energy"], d["entropy"], *d["second_moments"], d["residual"], d["max_density"]]
            for d in report.diagnostics]
    return header, rows


def _lambda_doc(verdict, n):
    return {",".join(str(i + 1) for i in mask_members(m)): val
            for m, val in sorted(verdict.lambda_table.items())}


def run_classify(config, spec):
    v = classify(spec)
    doc = {"class": v.cls, "lambda_table": _lambda_doc(v, spec.n),
           "witnesses": [[i + 1 for i in mask_members(m)] for m in v.witnesses]}
    return EXIT_OK, doc, (["subset", "lambda"], list(doc["lambda_table"].items())), None


def _minimize_doc(report, spec):
    E = report.final_energy
    doc = {"verdict": report.verdict, "energy": E.total, "entropy_terms": E.entropy_terms,
           "interaction_term": E.interaction_term, "confinement_terms": E.confinement_terms,
           "residual": report.residual, "iterations": report.iterations,
           "virial_ratio": virial_defect(spec, report.final_field)[1]}
    return doc


def _verdict_code(verdict):
    return {MINIMIZER: EXIT_OK, CONCENTRATION: EXIT_SIGNAL}.get(verdict, EXIT_CONVERGENCE)


def run_minimize(config, spec):
    try:
        report = minimize(spec, initial_field(config, spec), config.minimize_options())
    except ConcentrationOverflow as e:
        return EXIT_SIGNAL, {"verdict": CONCENTRATION, "detail": str(e)}, None, None
    doc = _minimize_doc(report, spec)
    return _verdict_code(report.verdict), doc, _minimize_trace(report), report.final_field


def run_radial(config, spec):
    p = solve_radial(spec, config.s_min, config.s_max, config.num_s, tol=config.radial_tol)
    lhs, rhs = mass_balance(p, spec)
    doc = {"log_center_density": p.log_center_density, "u0": p.u0,
           "shooting_residual": p.shooting_residual, "ode_residual": ode_residual(p),
           "mass_balance": {"lhs": lhs, "rhs": rhs}, "asymptotics": asymptotics_check(p, spec)}
    header = ["s"] + [f"w_{i}" for i in range(spec.n)] + [f"dw_{i}" for i in range(spec.n)]
    rows = np.column_stack([p.s, p.w.T, p.dw.T]).tolist()
    return EXIT_OK, doc, (header, rows), None


def run_evolve(config, spec):
    opts = EvolveOptions(dt=config.dt, cfl=config.cfl)
    try:
        st = evolve(spec, initial_field(config, spec), config.t_end, opts)
        code, status = EXIT_OK, "completed"
    except BlowUp as e:
        st, code, status = e.state, EXIT_SIGNAL, "blow-up"
    n = spec.n
    header = ["time", "F_v", "dissipation", "entropy_total"] + [f"second_moment_{i}" for i in range(n)] \
        + ["residual", "max_density"]
    rows = [[t, F, D, d["entropy"], *d["second_moments"], d["residual"], d["max_density"]]
            for (t, F, D), d in zip(st.dissipation_trace, st.diagnostics)]
    doc = {"status": status, "time": st.time, "steps": st.steps, "dt": st.dt,
           "energy": st.dissipation_trace[-1][1] if st.dissipation_trace else None,
           "max_density": float(st.field.values.max())}
    return code, doc, (header, rows), st.field


def run_inequality(config, spec):
    opts = config.minimize_options()
    rv = minimize(spec, initial_field(config, spec), opts)
    spec0 = spec.centered()
    r0 = minimize(spec0, initial_field(config, spec0), opts)
    wmin, x0 = weighted_drift_min(spec)
    doc = {"F_v": rv.energy, "F_0": r0.energy, "verdict_v": rv.verdict, "verdict_0": r0.verdict,
           "weighted_drift_min": wmin, "weighted_centroid": x0,
           "gap": inequality_gap(spec, rv.energy, r0.energy)}
    return EXIT_OK, doc, _minimize_trace(rv), rv.final_field


def sweep_specs(config, spec):
    """``(label, spec)`` pairs along the configured axis."""
    out = []
    for val in config.sweep_values:
        if config.sweep_axis == "mass":
            out.append((val, spec.with_beta(val * spec.beta)))
        elif config.sweep_axis == "approach":
            out.append((val, spec.with_beta(approach_sequence(spec.beta, [val])[0])))
        else:
            c = spec.v.mean(axis=0)
            v = np.array([c - [val / 2, 0.0], c + [val / 2, 0.0]])
            out.append((val, spec.with_drifts(v)))
    return out


def run_sweep(config, spec):
    header = [config.sweep_axis, "class", "verdict", "F_v", "residual", "iterations"]
    rows, points = [], []
    for val, sp in sweep_specs(config, spec):
        cls = classify(sp).cls
        verdict, E, res, it = "", float("nan"), float("nan"), 0
        if config.sweep_command == "minimize":
            try:
                rep = minimize(sp, initial_field(config, sp), config.minimize_options())
                verdict, E, res, it = rep.verdict, rep.energy, rep.residual, rep.iterations
            except ConcentrationOverflow:
                verdict = CONCENTRATION
            except DomainError as e:
                verdict = f"refused: {e}"
        rows.append([val, cls, verdict, E, res, it])
        points.append(dict(zip(header, rows[-1])))
    return EXIT_OK, {"axis": config.sweep_axis, "points": points}, (header, rows), None


RUNNERS = {"classify": run_classify, "minimize": run_minimize, "radial": run_radial,
           "evolve": run_evolve, "inequality": run_inequality, "sweep": run_sweep}


def run(config: ExperimentConfig, out: Path | None = None) -> int:
    """Execute ``config``, writing ``result.json``, ``trace.csv`` and optional dumps."""
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.spec()
    try:
        code, doc, trace, final = RUNNERS[config.command](config, spec)
    except ConvergenceError as e:
        code, doc, trace, final = EXIT_CONVERGENCE, {"error": "convergence", "detail": str(e),
                                                     "best_residual": e.best_residual}, None, None
    doc = dict(doc, command=config.command, exit_code=code, seed=config.seed,
               grid={"L": config.L, "N": config.N})
    write_result(out, doc)
    if trace is not None:
        write_trace(out, *trace)
    if config.dump_fields and final is not None:
        dump_fields(out, final, {"command": config.command, "beta": spec.beta})
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ksliouville", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", required=True, help="INI experiment configuration")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--threads", type=int, help="FFT worker threads (default: hardware count)")
    p.add_argument("--seed", type=int, help="seed for randomized initial fields (overrides [run] seed)")
    p.add_argument("--dump-fields", action="store_true", help="write binary field dumps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.dump_fields:
            over["dump_fields"] = True
        if args.out:
            over["out"] = args.out
        config = replace(config, **over)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None:
        if args.threads < 1:
            print("config error: --threads must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        potential.set_threads(args.threads)
    try:
        return run(config)
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
