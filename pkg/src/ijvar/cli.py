"""Command-line interface: ``ijvar exact | simulate | coeffs | ustat``.

Exit codes: 0 success, 2 invalid input, 3 capacity limit, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    BOOTSTRAP_ENUM_CAP,
    DEFAULT_SEED,
    SUBSET_ENUM_CAP,
    CapacityError,
    DomainError,
    RandomnessPolicy,
    Sample,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

EXIT_OK, EXIT_INVALID, EXIT_CAPACITY, EXIT_RUNTIME = 0, 2, 3, 4
OUT_ENV = "IJVAR_OUT"
DEFAULT_OUT = "ijvar-results"
SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=d(None), help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--workers", type=int, default=d(None), help="worker processes for simulate (default 1)")
    common.add_argument("--out", default=d(None),
                        help=f"output directory (simulate: default ${OUT_ENV} or ./{DEFAULT_OUT}; others: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=d(None), help="output format (default csv)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    p = _Parser(prog="ijvar", description=__doc__.splitlines()[0], parents=[_common(suppress=False)])
    p.add_argument("--version", action="version", version=f"ijvar {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("exact", parents=[common], help=f"exact bootstrap variances (n <= {BOOTSTRAP_ENUM_CAP})")
    ex.add_argument("sample_file")
    ex.add_argument("--stat", required=True, help="statistic name, e.g. mean, variance, max")

    sim = sub.add_parser("simulate", parents=[common], help="run experiments from a TOML config or a JSON manifest")
    sim.add_argument("config")

    co = sub.add_parser("coeffs", parents=[common], help="expectation coefficients alpha, beta, r_j and r_d")
    co.add_argument("--n", type=int, required=True)
    co.add_argument("--k", type=int, required=True)
    co.add_argument("--dmax", type=int, default=1)

    us = sub.add_parser("ustat", parents=[common], help="U-statistic and its IJ variance estimates")
    us.add_argument("sample_file")
    us.add_argument("--kernel", required=True)
    us.add_argument("--k", type=int, required=True)
    us.add_argument("--N", type=int, default=None, help="expected number of random subsets (incomplete U-statistic)")
    us.add_argument("--ci", type=float, default=None, help="confidence level, e.g. 0.95")
    us.add_argument("--regime", default="auto", help="auto, 'N<<n/k', 'N~n/k' or 'N>>n/k'")
    return p


# ---------------------------------------------------------------------------
# output helpers


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render(rows: list[dict], metadata: dict, fmt: str, columns=None) -> str:
    """CSV with a ``# {json}`` metadata line, or one JSON document."""
    if fmt == "json":
        return json.dumps({"metadata": _jsonable(metadata), "rows": _jsonable(rows)}, indent=2, sort_keys=False) + "\n"
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    buf.write("# " + json.dumps(_jsonable(metadata), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _emit(text: str, args, name: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.{args.format}"
    path.write_text(text, encoding="utf-8")
    print(path)


def _provenance(seed: int | None = None, **extra) -> dict:
    import scipy

    meta = {"tool": "ijvar", "version": __version__, "schema_version": SCHEMA_VERSION,
            "numpy": np.__version__, "scipy": scipy.__version__,
            "caps": {"bootstrap_n": BOOTSTRAP_ENUM_CAP, "subsets": SUBSET_ENUM_CAP}}
    if seed is not None:
        meta["seed"] = seed
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# subcommands


def cmd_exact(args) -> int:
    from .bootstrap_exact import exact_report
    from .kernels import get_kernel

    sample = Sample.from_file(args.sample_file)
    rep = exact_report(sample, get_kernel(args.stat))
    rows = [{"j": j + 1, "x": float(x), "e": float(e), "cov": float(c)}
            for j, (x, e, c) in enumerate(zip(sample.values, rep.e, rep.cov))]
    meta = _provenance(command="exact", statistic=args.stat, n=sample.n, s0=rep.s0, ij_b=rep.ij_b,
                       jk_b=rep.jk_b, var_l=rep.var_l, max_gap=rep.max_gap)
    _emit(render(rows, meta, args.format), args, "exact")
    return EXIT_OK


def cmd_coeffs(args) -> int:
    from .ustat import coefficient_tables

    ct = coefficient_tables(args.n, args.k, args.dmax)
    rows = []
    for j in range(1, args.k + 1):
        row = {"j": j, "r_ij": float(ct.r_ij[j - 1]), "r_ps": float(ct.r_ps[j - 1])}
        for d in range(1, args.dmax + 1):
            row[f"r_d{d}"] = float(ct.r_d[j - 1, d - 1])
        rows.append(row)
    meta = _provenance(command="coeffs", n=args.n, k=args.k, dmax=args.dmax, alpha=ct.alpha, beta=ct.beta,
                       theta2_coef=ct.theta2_coef)
    _emit(render(rows, meta, args.format), args, "coeffs")
    return EXIT_OK


def cmd_ustat(args) -> int:
    from .incomplete import analyze, z_quantile
    from .kernels import get_kernel
    from .ustat import complete_ustat_report

    sample = Sample.from_file(args.sample_file)
    kernel = get_kernel(args.kernel, args.k)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    policy = RandomnessPolicy(seed)
    if args.ci is not None:
        z_quantile(args.ci)  # validates the level
    meta = _provenance(seed, command="ustat", kernel=args.kernel, n=sample.n, k=args.k)
    if args.N is None:
        if math.comb(sample.n, args.k) > SUBSET_ENUM_CAP:
            raise CapacityError(f"C({sample.n}, {args.k}) = {math.comb(sample.n, args.k)} subsets exceed the "
                                f"enumeration cap {SUBSET_ENUM_CAP}; pass --N for an incomplete U-statistic",
                                SUBSET_ENUM_CAP)
        rep = complete_ustat_report(sample, kernel, policy, "cli/ustat")
        row = {"estimate": rep.u_value, "ij_u": rep.ij_u, "ps_ij_u": rep.ps_ij_u, "alpha": rep.alpha, "beta": rep.beta}
        if args.ci is not None:
            hw = z_quantile(args.ci) * math.sqrt(max(rep.ps_ij_u, 0.0))
            row.update(level=args.ci, lower=rep.u_value - hw, upper=rep.u_value + hw)
        meta["mode"] = "complete"
    else:
        res = analyze(sample, kernel, args.N, args.ci, policy, "cli/ustat", 0, regime=args.regime)
        est = res.estimate
        row = {"estimate": res.point, "N": args.N, "N_hat": res.run.N_hat, "ps_ij_hat": est.ps_ij_hat,
               "zeta1_scaled": est.zeta1_scaled, "zeta_k_hat": est.zeta_k_hat, "collisions": res.run.collisions}
        if res.interval is not None:
            row.update(level=args.ci, regime=res.regime, lower=res.interval[0], upper=res.interval[1])
        meta["mode"] = "incomplete"
        if est.empty:
            meta["warning"] = "no subset was selected"
    _emit(render([row], meta, args.format), args, "ustat")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _experiment_lines(text: str) -> list[int]:
    return [i for i, line in enumerate(text.splitlines(), start=1) if re.match(r"^\s*\[\[\s*experiment\s*\]\]", line)]


def load_config(path: str, seed: int | None):
    """Parse a TOML config or JSON manifest into specs; returns (specs, workers, format, source digest)."""
    from .simharness import ExperimentSpec

    p = Path(path)
    try:
        raw_bytes = p.read_bytes()
    except OSError as exc:
        raise DomainError(f"{path}: {exc.strerror}") from None
    text = raw_bytes.decode("utf-8")
    if p.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        entries = doc.get("experiments") if isinstance(doc, dict) else None
        where = ["" for _ in entries or []]
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise DomainError(f"{path}: invalid TOML: {exc}") from None
        entries = doc.get("experiment")
        lines = _experiment_lines(text)
        where = [f"{path}:{lines[i]}: " if i < len(lines) else "" for i in range(len(entries or []))]
    errors = []
    allowed = {"kind", "schema_version", "seed", "workers", "format", "experiment", "experiments", "tool", "version",
               "provenance", "outputs", "errors", "numpy", "scipy", "caps"}
    for key in sorted(set(doc) - allowed):
        errors.append(f"{path}: unknown top-level field {key!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"{path}: schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    if not isinstance(entries, list) or not entries:
        errors.append(f"{path}: no experiments defined")
        entries = []
    default_seed = seed if seed is not None else doc.get("seed", DEFAULT_SEED)
    specs, seen = [], set()
    for i, entry in enumerate(entries):
        label = f"{where[i]}experiment[{i}]"
        if isinstance(entry, dict) and isinstance(entry.get("id"), str):
            label += f" (id {entry['id']!r})"
        if not isinstance(entry, dict):
            errors.append(f"{label}: must be a table")
            continue
        entry = dict(entry)
        if seed is not None:
            entry["seed"] = seed
        try:
            spec = ExperimentSpec.from_dict(entry, default_seed)
        except DomainError as exc:
            errors.extend(f"{label}: {msg}" for msg in str(exc).split("\n"))
            continue
        if spec.id in seen:
            errors.append(f"{label}: duplicate experiment id {spec.id!r}")
        seen.add(spec.id)
        specs.append(spec)
    fmt = doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        errors.append(f"{path}: format must be 'csv' or 'json'")
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        errors.append(f"{path}: workers must be a positive integer")
    if errors:
        raise DomainError("\n".join(errors))
    return specs, workers, fmt, hashlib.sha256(raw_bytes).hexdigest()


def cmd_simulate(args) -> int:
    from .simharness import COLUMNS, ErrorRecord, run_batch

    specs, workers, fmt, digest = load_config(args.config, args.seed)
    workers = args.workers if args.workers is not None else workers
    fmt = args.format or fmt
    if workers < 1:
        raise DomainError("--workers must be at least 1")
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    results = run_batch(specs, workers)
    outputs, errors = {}, []
    for res in results:
        if isinstance(res, ErrorRecord):
            errors.append({"id": res.id, "error": res.error, "message": res.message})
            print(f"experiment {res.id!r} failed: {res.error}: {res.message}", file=sys.stderr)
            continue
        name = f"{res.spec.output or res.spec.id}.{fmt}"
        (out / name).write_text(render(res.rows, res.metadata, fmt, COLUMNS), encoding="utf-8")
        outputs[res.spec.id] = name
    manifest = {
        "kind": "ijvar-manifest",
        "schema_version": SCHEMA_VERSION,
        "format": fmt,
        "provenance": _provenance(config_sha256=digest),
        "experiments": [s.to_dict() for s in specs],
        "outputs": outputs,
        "errors": errors,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n", encoding="utf-8")
    print(out / "manifest.json")
    if errors:
        if all(e["error"] == "CapacityError" for e in errors):
            return EXIT_CAPACITY
        if all(e["error"] == "DomainError" for e in errors):
            return EXIT_INVALID
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"exact": cmd_exact, "simulate": cmd_simulate, "coeffs": cmd_coeffs, "ustat": cmd_ustat}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command != "simulate" and args.format is None:
        args.format = "csv"
    try:
        return COMMANDS[args.command](args)
    except CapacityError as exc:
        print(f"ijvar: capacity limit: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except DomainError as exc:
        print(f"ijvar: invalid input:\n{exc}" if "\n" in str(exc) else f"ijvar: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"ijvar: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
