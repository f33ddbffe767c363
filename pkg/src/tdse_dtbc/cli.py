"""Command line front end: ``run``, ``study``, ``kernel`` and ``cost``.

Settings come from three layers, later ones winning: preset defaults, a
JSON config file (``--config``), command line flags. The output directory
is taken from ``--out``, then the ``TDSE_DTBC_OUTPUT_DIR`` environment
variable, then the config file, then ``./results``.

Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration,
3 stability monitor violation, 4 resource cap exceeded. Every failure
prints one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .cases import ExperimentPreset, preset as get_preset
from .dtbc import KernelAccuracyWarning, kernel_from_symbol
from .error_analysis import (
    ResourceCap,
    ResourceCapExceeded,
    error_study,
    pseudo_exact_many,
    ratio_table,
    study_times,
)
from .mesh import evaluation_grid, evaluation_matrix, reference_basis
from .richardson import cost_overhead, fit_cost_model, plan, run_extrapolated, time_run
from .stepper import DIRICHLET, DTBC, InvariantViolation, run

ENV_OUTPUT = "TDSE_DTBC_OUTPUT_DIR"
EXIT_ERROR, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CAP = 1, 2, 3, 4

_int_or_list = {"oneOf": [{"type": "integer", "minimum": 1},
                          {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string"},
        "physics": {"type": "object"},
        "discretization": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 1, "maximum": 9},
                           "J": _int_or_list, "M": _int_or_list, "r": _int_or_list},
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"left": {"enum": [DTBC, DIRICHLET]}, "right": {"enum": [DTBC, DIRICHLET]}},
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "snapshots": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "certify": {"type": "boolean"},
            },
        },
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"max_work": {"type": ["number", "null"], "exclusiveMinimum": 0}},
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "side": {"enum": ["left", "right"]},
                "symbol": {"enum": ["dtn", "initial", "unit", "delay", "geometric"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"repeats": {"type": "integer", "minimum": 1}},
        },
        "workers": {"type": "integer", "minimum": 1},
        "convolution": {"enum": ["direct", "fft"]},
    },
}

_DEFAULTS = {"run": dict(n=9, r=1), "study": dict(n=9, r=4), "kernel": dict(n=1, r=1), "cost": dict(n=5, r=2)}


class ConfigError(ValueError):
    """Invalid or inconsistent job configuration."""


@dataclass
class JobConfig:
    command: str
    preset: ExperimentPreset
    n: int
    J: list
    M: list
    r: list
    out: Path
    snapshots: list = field(default_factory=list)
    certify: bool = True
    cap: ResourceCap = field(default_factory=ResourceCap)
    workers: int = 1
    conv_mode: str = "direct"
    side: str = "right"
    symbol: str = "dtn"
    tol: float | None = None
    h: float | None = None
    tau: float | None = None
    repeats: int = 3

    def single(self):
        if len(self.J) != 1 or len(self.M) != 1 or len(self.r) != 1:
            raise ConfigError(f"{self.command} takes single values of J, M and r")
        return self.n, self.J[0], self.M[0], self.r[0]

    def cells(self):
        return [(J, M, r) for J in self.J for M in self.M for r in self.r]


# ------------------------------------------------------------------ config


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {path}: {where}: {exc.message}") from None
    return data


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _parse_list(text: str, kind):
    try:
        return [kind(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values, got {text!r}")


def _ints(text):
    return _parse_list(text, int)


def _floats(text):
    return _parse_list(text, float)


def _cap(text):
    if text.lower() in ("none", "0", "off"):
        return None
    return float(text)


def _build_preset(args, cfg) -> ExperimentPreset:
    name = args.preset or cfg.get("preset")
    physics = cfg.get("physics")
    if name is None and physics is None:
        raise ConfigError("give a preset (--preset or config 'preset') or a 'physics' block")
    try:
        base = get_preset(name).to_dict() if name is not None else {"name": "custom"}
        if physics:
            base.update(physics)
        bnd = dict(cfg.get("boundary", {}))
        for side in ("left", "right"):
            if getattr(args, side, None):
                bnd[side] = getattr(args, side)
        base.update(bnd)
        return ExperimentPreset.from_dict(base)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid physics block: {exc}") from None


def resolve(args) -> JobConfig:
    """Merge preset defaults, the config file and flags into a job."""
    cfg = load_config(args.config) if args.config else {}
    kern = cfg.get("kernel", {})
    symbol = getattr(args, "symbol", None) or kern.get("symbol", "dtn")
    plain = args.command == "kernel" and symbol not in ("dtn", "initial")
    p = None if plain and not (args.preset or cfg.get("preset") or cfg.get("physics")) else _build_preset(args, cfg)
    disc = dict(_DEFAULTS[args.command])
    if plain:
        disc.setdefault("J", 1)
    disc.update(cfg.get("discretization", {}))
    for key in ("n", "J", "M", "r"):
        v = getattr(args, key, None)
        if v is not None:
            disc[key] = v
    for key in ("J", "M"):
        if key not in disc:
            raise ConfigError(f"{key} is required (flag --{key} or config discretization.{key})")
    outputs = cfg.get("outputs", {})
    out = args.out or os.environ.get(ENV_OUTPUT) or outputs.get("directory") or "results"
    cap = ResourceCap(cfg["caps"]["max_work"]) if "max_work" in cfg.get("caps", {}) else ResourceCap()
    if getattr(args, "max_work", False) is not False:
        cap = ResourceCap(args.max_work)
    job = JobConfig(
        command=args.command,
        preset=p,
        n=int(disc["n"]),
        J=[int(v) for v in _as_list(disc["J"])],
        M=[int(v) for v in _as_list(disc["M"])],
        r=[int(v) for v in _as_list(disc["r"])],
        out=Path(out),
        snapshots=list(args.snapshots if getattr(args, "snapshots", None) is not None else outputs.get("snapshots", [])),
        certify=outputs.get("certify", True) and not getattr(args, "no_certify", False),
        cap=cap,
        workers=args.workers or cfg.get("workers", 1),
        conv_mode=args.conv_mode or cfg.get("convolution", "direct"),
        side=getattr(args, "side", None) or kern.get("side", "right"),
        symbol=symbol,
        tol=getattr(args, "tol", None) or kern.get("tol"),
        h=getattr(args, "h", None) or kern.get("h"),
        tau=getattr(args, "tau", None) or kern.get("tau"),
        repeats=getattr(args, "repeats", None) or cfg.get("cost", {}).get("repeats", 3),
    )
    _validate(job)
    return job


def _validate(job: JobConfig) -> None:
    if not 1 <= job.n <= 9:
        raise ConfigError(f"n must lie in 1..9, got {job.n}")
    if job.command == "kernel" and job.symbol not in ("dtn", "initial"):
        return
    try:
        for J in job.J:
            job.preset.check_J(J)
        for M, r in itertools.product(job.M, job.r):
            plan(r, M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------------------ output


def atomic_write(path: Path, text: str) -> Path:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.16e}"


def csv_text(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _emit(record: dict, stream=None) -> None:
    print(json.dumps(record, sort_keys=True), file=stream or sys.stderr)


# ---------------------------------------------------------------- commands


def _check_cap(job, cfg, r, what):
    for c in plan(r, cfg.M).constituents:
        job.cap.check(cfg.mesh.n_dofs(cfg.n), c.steps, f"{what} M={c.steps}")


def _snapshot_levels(job, cfg, r):
    """Map requested physical times to extrapolant levels ``t = j r tau``."""
    dt = r * cfg.tau
    levels = []
    for t in job.snapshots:
        j = round(t / dt)
        if not 0 <= t <= cfg.T * (1 + 1e-12) or abs(j * dt - t) > 1e-9 * max(dt, abs(t)):
            raise ConfigError(f"snapshot time {t} is not a level of the run (multiples of r*tau = {dt:.6g} in [0, T])")
        levels.append(int(j))
    return levels


def cmd_run(job: JobConfig) -> int:
    n, J, M, r = job.single()
    p = job.preset
    cfg = p.scheme(n, J, M)
    _check_cap(job, cfg, r, f"{p.name} n={n} J={J}")
    levels = _snapshot_levels(job, cfg, r)
    x = evaluation_grid(cfg.mesh, n)
    P = evaluation_matrix(cfg.mesh, reference_basis(n), x)
    base = run(cfg, record=[j * r for j in levels] if r == 1 else (), probe=lambda u: P @ u,
               conv_mode=job.conv_mode)
    if r == 1:
        snaps = {j: base.snapshots[j] for j in levels}
    else:
        ext = run_extrapolated(cfg, r, probe=lambda u: P @ u, levels=sorted(set(levels)), conv_mode=job.conv_mode)
        by_t = dict(zip(np.round(ext.times / (r * cfg.tau)).astype(int), ext.values))
        snaps = {j: by_t[j] for j in levels}
    out = job.out
    rows = [(m, float(t), float(a), float(b)) for m, (t, a, b) in
            enumerate(zip(base.times, base.rho_norms, base.energy_norms))]
    atomic_write(out / "diagnostics.csv", csv_text(
        ["m", "t", "rho_norm", "energy_norm"], rows,
        [f"preset={p.name} n={n} J={J} M={M} tau={cfg.tau!r} (diagnostics of the single-step run)"]))
    files = []
    for j in sorted(set(levels)):
        m = j * r
        u = snaps[j]
        text = csv_text(["x", "re", "im", "abs"], zip(x, u.real, u.imag, np.abs(u)),
                        [f"preset={p.name} n={n} J={J} M={M} r={r}", f"m={m} t={m * cfg.tau!r}"])
        files.append(str(atomic_write(out / f"snapshot_m{m:06d}.csv", text)))
    summary = {"command": "run", "preset": p.to_dict(), "n": n, "J": J, "M": M, "r": r,
               "snapshots": files, "flags": base.flags}
    atomic_write(out / "run.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if base.flags:
        raise InvariantViolation("; ".join(base.flags))
    return 0


def _study_group(args):
    p, n, cells, reference, conv_mode = args
    return error_study(p, n, cells, reference, conv_mode)


def _ratios(errs):
    return [None] + list(ratio_table(errs)) if len(errs) > 1 and min(errs) > 0 else [None] * len(errs)


def cmd_study(job: JobConfig) -> int:
    p, n = job.preset, job.n
    cells = job.cells()
    for J, M, r in cells:
        _check_cap(job, p.scheme(n, J, M), r, f"{p.name} n={n} J={J}")
    reference = None
    certificate = None
    if not p.has_exact:
        meshes = {J: p.mesh(J) for J in job.J}
        reference = pseudo_exact_many(p, meshes, n, study_times(cells), job.certify,
                                       cap=job.cap, conv_mode=job.conv_mode)
        certificate = reference[job.J[0]].certificate
    groups = [[c for c in cells if c[0] == J] for J in job.J]
    tasks = [(p, n, g, None if reference is None else {g[0][0]: reference[g[0][0]]}, job.conv_mode)
             for g in groups]
    results = {}
    if job.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=job.workers) as pool:
            for res in pool.map(_study_group, tasks):
                results.update(res)
    else:
        for t in tasks:
            results.update(_study_group(t))
    write_study(job, results, certificate)
    return 0


def write_study(job: JobConfig, results: dict, certificate=None) -> None:
    """Long-form error CSV, one pivot table per norm and a text rendering."""
    out = job.out
    Ms = sorted(job.M)
    ratio = {}
    for J, r in itertools.product(job.J, job.r):
        for norm in ("l2", "c"):
            errs = [results[(J, M, r)].max(norm) for M in Ms]
            for M, q in zip(Ms, _ratios(errs)):
                ratio[(J, M, r, norm)] = q
    header = ["J", "M", "r", "max_abs_l2", "max_abs_c", "max_rel_l2", "max_rel_c",
              "half_abs_l2", "half_abs_c", "final_abs_l2", "final_abs_c", "ratio_l2", "ratio_c"]
    rows = []
    for J, r, M in itertools.product(job.J, job.r, Ms):
        s = results[(J, M, r)].summary(job.preset.T)
        rows.append([J, M, r] + [s[k] for k in ("max_abs_l2", "max_abs_c", "max_rel_l2", "max_rel_c",
                                                 "half_abs_l2", "half_abs_c", "final_abs_l2", "final_abs_c")]
                    + [ratio[(J, M, r, "l2")], ratio[(J, M, r, "c")]])
    note = [f"preset={job.preset.name} n={job.n}",
            "reference=" + ("exact" if job.preset.has_exact else "pseudo-exact")]
    atomic_write(out / "errors.csv", csv_text(header, rows, note))
    cols = list(itertools.product(job.J, job.r))
    text = []
    for norm in ("l2", "c"):
        hdr = ["M"]
        for J, r in cols:
            hdr += [f"J={J} r={r}", f"ratio J={J} r={r}"]
        body = []
        for M in Ms:
            row = [M]
            for J, r in cols:
                row += [results[(J, M, r)].max(norm), ratio[(J, M, r, norm)]]
            body.append(row)
        atomic_write(out / f"table_{norm}.csv", csv_text(hdr, body, note + [f"norm={norm}, max over [0, T]"]))
        text.append(render_table(hdr, body, f"max {'L2h' if norm == 'l2' else 'Ch'} error"))
    atomic_write(out / "table.txt", "\n".join(text))
    if certificate is not None:
        atomic_write(out / "certificate.json", json.dumps(certificate, indent=2, sort_keys=True) + "\n")


def render_table(header, rows, title="") -> str:
    cells = [[str(h) for h in header]]
    for row in rows:
        cells.append([str(row[0])] + ["--" if v is None else f"{v:.3g}" if i % 2 else f"{v:.3e}"
                                      for i, v in enumerate(row[1:])])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = [title] if title else []
    for r in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def _test_symbol(name):
    return {
        "unit": lambda z: np.ones_like(z),
        "delay": lambda z: 1.0 / z,
        "geometric": lambda z: 1.0 / (1.0 - 0.5 / z),
    }[name]


def cmd_kernel(job: JobConfig) -> int:
    n, J, M, _ = job.single()
    p = job.preset
    if job.symbol in ("dtn", "initial"):
        ext = p.scheme(n, J, M).exterior(job.side)
        if job.h is not None or job.tau is not None:
            ext = replace(ext, h=job.h or ext.h, tau=job.tau or ext.tau)
        symbol = ext if job.symbol == "dtn" else ext.initial_symbol
        scale = ext.kinetic
        desc = f"symbol={job.symbol} side={job.side} n={n} " + " ".join(
            f"{k}={float(getattr(ext, k))!r}" for k in ("h", "tau", "hbar", "rho", "B", "V"))
    else:
        symbol, scale, desc = _test_symbol(job.symbol), 1.0, f"symbol={job.symbol}"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", KernelAccuracyWarning)
        k = kernel_from_symbol(symbol, M, tol=job.tol, scale=scale)
    flagged = any(issubclass(w.category, KernelAccuracyWarning) for w in caught)
    residual = k.round_trip_residual()
    head = [desc, f"M={M} n_samples={k.n_samples} radius={k.radius!r}",
            f"max_error_estimate={k.max_error_estimate:.6e}", f"round_trip_residual={residual:.6e}",
            f"warning={int(flagged)}"]
    c = k.boundary_coeffs
    path = atomic_write(job.out / "kernel.csv",
                        csv_text(["l", "re", "im"], zip(range(c.size), c.real, c.imag), head))
    if flagged:
        _emit({"status": "warning", "code": 0, "kind": "kernel_tolerance", "file": str(path),
               "message": str(caught[-1].message)})
    return 0


def cmd_cost(job: JobConfig) -> int:
    p, n = job.preset, job.n
    samples, rows = [], []
    for J, M in itertools.product(job.J, job.M):
        cfg = p.scheme(n, J, M)
        rs = sorted(set(job.r) | {1})
        for r in rs:
            plan(r, M)
            _check_cap(job, cfg, r, f"{p.name} n={n} J={J}")
        t1 = time_run(cfg, 1, job.repeats)
        samples.append((J, M, t1))
        for r in sorted(set(job.r)):
            tr = t1 if r == 1 else time_run(cfg, r, job.repeats)
            rows.append([J, M, r, t1, tr, 0.0 if r == 1 else 100.0 * (tr / t1 - 1.0)])
    try:
        model = fit_cost_model(samples) if len({(J, M) for J, M, _ in samples}) >= 2 else None
    except ValueError:
        model = None
    for row in rows:
        J, M, r = row[:3]
        row.append(cost_overhead(model, J, M, r) if model is not None else None)
        row.append(50.0 * (r - 1))
    head = [f"preset={p.name} n={n} repeats={job.repeats} (wall times are machine dependent)"]
    if model is not None:
        head.append(f"fit a={model.a:.6e} b={model.b:.6e}")
    atomic_write(job.out / "cost.csv", csv_text(
        ["J", "M", "r", "seconds_base", "seconds_r", "measured_pct", "predicted_pct", "bound_pct"], rows, head))
    return 0


COMMANDS = {"run": cmd_run, "study": cmd_study, "kernel": cmd_kernel, "cost": cmd_cost}


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit({"status": "error", "code": EXIT_CONFIG, "kind": "usage", "message": message})
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tdse_dtbc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON job file")
    common.add_argument("--preset", help="ex1, ex2, ex3 or ex3_scaled")
    common.add_argument("--n", type=int, help="polynomial degree (1..9)")
    common.add_argument("--out", help=f"output directory (else ${ENV_OUTPUT}, config, ./results)")
    common.add_argument("--left", choices=[DTBC, DIRICHLET])
    common.add_argument("--right", choices=[DTBC, DIRICHLET])
    common.add_argument("--max-work", type=_cap, default=False, dest="max_work",
                        help="cap on dofs*steps per run ('none' disables)")
    common.add_argument("--workers", type=int, help="worker processes for independent cells")
    common.add_argument("--conv-mode", choices=["direct", "fft"], dest="conv_mode")

    p = sub.add_parser("run", parents=[common], help="single (extrapolated) run")
    p.add_argument("--J", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--snapshots", type=_floats, help="comma-separated physical times")

    p = sub.add_parser("study", parents=[common], help="error tables over a (J, M, r) grid")
    p.add_argument("--J", type=_ints)
    p.add_argument("--M", type=_ints)
    p.add_argument("--r", type=_ints)
    p.add_argument("--no-certify", action="store_true", dest="no_certify",
                   help="skip the refinement certificate of the pseudo-exact reference")

    p = sub.add_parser("kernel", parents=[common], help="dump a boundary kernel")
    p.add_argument("--J", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--side", choices=["left", "right"])
    p.add_argument("--symbol", choices=["dtn", "initial", "unit", "delay", "geometric"])
    p.add_argument("--tol", type=float)
    p.add_argument("--h", type=float, help="element size (instead of the preset mesh)")
    p.add_argument("--tau", type=float, help="time step (instead of T/M)")

    p = sub.add_parser("cost", parents=[common], help="measured vs modelled extrapolation overhead")
    p.add_argument("--J", type=_ints)
    p.add_argument("--M", type=_ints)
    p.add_argument("--r", type=_ints)
    p.add_argument("--repeats", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = resolve(args)
        return COMMANDS[args.command](job)
    except (ConfigError, ValueError) as exc:
        code, kind, msg = EXIT_CONFIG, "config", str(exc)
    except InvariantViolation as exc:
        code, kind, msg = EXIT_INVARIANT, "invariant", str(exc)
    except ResourceCapExceeded as exc:
        code, kind, msg = EXIT_CAP, "resource_cap", str(exc)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        code, kind, msg = EXIT_ERROR, type(exc).__name__, str(exc)
    _emit({"status": "error", "code": code, "kind": kind, "command": args.command,
           "message": msg.replace("\n", " ")})
    return code
