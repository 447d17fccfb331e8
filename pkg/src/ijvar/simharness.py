"""Deterministic parallel Monte Carlo experiments.

An :class:`ExperimentSpec` names a template and its grids.  Work is split
into cells of replications; every replication draws from streams keyed by
``(seed, experiment id, grid point, replication)``, so results do not depend
on the number of workers or the order cells finish in.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import analytic
from .bootstrap_mc import estimate_all, run_bootstrap
from .core import DEFAULT_SEED, CapacityError, DomainError, RandomnessPolicy, Sample
from .hdecomp import decompose, expected_estimator, variance_of_u
from .incomplete import analyze, draw_incomplete, ps_ij_hat
from .kernels import KERNEL_NAMES, get_kernel
from .laws import DiscreteDistribution, NormalLaw, UniformLaw, law_from_dict
from .ustat import coefficient_tables, ustat_estimates_batch

#: Replications declared for figure templates when a spec does not set them.
DEFAULT_REPLICATIONS = 500
CELL_SIZE = 25

_NORMAL = {"law": "normal", "mu": 0.0, "sigma2": 1.0}
_UNIFORM = {"law": "uniform", "lo": 0.0, "hi": 1.0}
_THREE_POINT = {"law": "discrete", "support": [0.0, 1.0, 3.0], "probs": [0.3, 0.5, 0.2]}

TEMPLATES: dict[str, dict[str, Any]] = {
    "fig1": {"statistic": "mean", "law": _NORMAL, "n": [100], "B": [100]},
    "fig2": {"statistic": "mean", "law": _NORMAL, "n": [100], "B": [1000]},
    "fig3": {"statistic": "variance", "law": _NORMAL, "n": [100], "B": [100]},
    "fig4": {"statistic": "variance", "law": _NORMAL, "n": [100], "B": [1000]},
    "fig5": {"statistic": "max", "law": _UNIFORM, "n": [100], "B": [100]},
    "fig6": {"statistic": "max", "law": _UNIFORM, "n": [100], "B": [1000]},
    "fig7": {"n": [20], "k": [10], "d_max": 4, "replications": 1},
    "coverage": {"statistic": "mean", "law": _NORMAL, "n": [500], "k": [10], "N": [20000],
                 "replications": 1000, "level": 0.95},
    "consistency-trend": {"statistic": "mean", "law": _NORMAL, "n": [100, 200, 400, 800],
                          "replications": 200},
    "rho-diagnostic": {"statistic": "mean", "law": _NORMAL, "n": [6], "replications": 1000},
    "ustat-expectation": {"statistic": "max", "law": _THREE_POINT, "n": [8], "k": [3], "replications": 2000},
}

_FIELDS = {"id", "template", "statistic", "law", "n", "k", "B", "N", "replications", "seed",
           "d_max", "level", "partitions", "output"}


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    template: str
    statistic: str = ""
    law: dict = field(default_factory=dict)
    n: tuple[int, ...] = ()
    k: tuple[int, ...] = ()
    B: tuple[int, ...] = ()
    N: tuple[int, ...] = ()
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    d_max: int = 4
    level: float = 0.95
    partitions: int = 10
    output: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, default_seed: int | None = None) -> "ExperimentSpec":
        """Fill template defaults and validate; raises DomainError listing every problem."""
        errors = []
        raw = dict(raw)
        unknown = set(raw) - _FIELDS
        if unknown:
            errors.append(f"unknown field(s): {', '.join(sorted(unknown))}")
        ident = raw.get("id")
        if not isinstance(ident, str) or not ident:
            errors.append("field 'id' must be a non-empty string")
        template = raw.get("template")
        if template not in TEMPLATES:
            errors.append(f"field 'template': unknown template {template!r}; known: {', '.join(TEMPLATES)}")
            raise DomainError("\n".join(errors))
        merged = {"replications": DEFAULT_REPLICATIONS, **TEMPLATES[template]}
        merged.update({k: v for k, v in raw.items() if k in _FIELDS})
        if "seed" not in raw:
            merged["seed"] = DEFAULT_SEED if default_seed is None else default_seed
        kwargs: dict[str, Any] = {"id": ident, "template": template}
        for name in ("n", "k", "B", "N"):
            val = merged.get(name, [])
            if isinstance(val, int) and not isinstance(val, bool):
                val = [val]
            if not isinstance(val, (list, tuple)) or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in val):
                errors.append(f"field {name!r} must be a list of positive integers")
                val = []
            kwargs[name] = tuple(int(v) for v in val)
        for name, kind in (("replications", int), ("seed", int), ("d_max", int), ("partitions", int)):
            val = merged.get(name, getattr(cls, name, None))
            if not isinstance(val, kind) or isinstance(val, bool):
                errors.append(f"field {name!r} must be an integer")
            else:
                kwargs[name] = val
        if kwargs.get("replications", 1) < 1:
            errors.append("field 'replications' must be at least 1")
        if not 0 <= kwargs.get("seed", 0) < 2**64:
            errors.append("field 'seed' must be a 64-bit unsigned integer")
        level = merged.get("level", 0.95)
        if not isinstance(level, (int, float)) or not 0 < level < 1:
            errors.append("field 'level' must lie in (0, 1)")
        else:
            kwargs["level"] = float(level)
        stat = merged.get("statistic", "")
        if template != "fig7":
            if stat not in KERNEL_NAMES:
                errors.append(f"field 'statistic': unknown {stat!r}; available: {', '.join(KERNEL_NAMES)}")
            kwargs["statistic"] = stat
            try:
                law = law_from_dict(merged.get("law", {}))
                kwargs["law"] = law.describe()
            except DomainError as exc:
                errors.append(f"field 'law': {exc}")
        if merged.get("output") is not None:
            kwargs["output"] = str(merged["output"])
        errors.extend(_template_checks(template, kwargs))
        if errors:
            raise DomainError("\n".join(errors))
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("n", "k", "B", "N"):
            d[name] = list(d[name])
        return d

    def law_object(self):
        return law_from_dict(self.law)


def _template_checks(template: str, kw: dict) -> list[str]:
    errs = []
    n, k, B, N = (kw.get(x, ()) for x in ("n", "k", "B", "N"))
    if not n:
        errs.append("grid 'n' must be non-empty")
    if template.startswith("fig") and template != "fig7":
        if not B:
            errs.append("grid 'B' must be non-empty")
        if any(b < 2 for b in B):
            errs.append("every B must be at least 2")
        if any(v < 2 for v in n):
            errs.append("every n must be at least 2")
    if template in ("fig7", "coverage", "ustat-expectation"):
        if not k:
            errs.append("grid 'k' must be non-empty")
        elif n and any(kk >= nn for kk in k for nn in n):
            errs.append("every k must be smaller than every n")
    if template == "fig7" and k and kw.get("d_max", 1) > min(k):
        errs.append("d_max must not exceed k")
    if template == "coverage" and not N:
        errs.append("grid 'N' must be non-empty")
    if template == "consistency-trend" and kw.get("statistic") not in ("mean", None):
        errs.append("consistency-trend is defined for the mean kernel only")
    return errs


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[dict]
    metadata: dict


@dataclass
class ErrorRecord:
    id: str
    error: str
    message: str


# ---------------------------------------------------------------------------
# grid points and per-replication work


def _grid(spec: ExperimentSpec) -> list[dict]:
    t = spec.template
    if t.startswith("fig") and t != "fig7":
        return [{"n": n, "B": B} for n in spec.n for B in spec.B]
    if t == "fig7":
        return [{"n": n, "k": k} for n in spec.n for k in spec.k]
    if t == "coverage":
        return [{"n": n, "k": k, "N": N} for n in spec.n for k in spec.k for N in spec.N]
    if t == "consistency-trend":
        pts = []
        for i, n in enumerate(spec.n):
            k = spec.k[i] if i < len(spec.k) else math.ceil(n**0.4)
            N = spec.N[i] if i < len(spec.N) else math.ceil(4 * n * k)
            pts.append({"n": n, "k": k, "N": N})
        return pts
    if t == "rho-diagnostic":
        return [{"n": n} for n in spec.n]
    if t == "ustat-expectation":
        return [{"n": n, "k": k} for n in spec.n for k in spec.k]
    raise DomainError(f"unknown template {t!r}")


def _point_key(spec: ExperimentSpec, point: dict) -> str:
    return spec.id + "|" + ",".join(f"{k}={v}" for k, v in sorted(point.items()))


_FIG_METRICS = ("sigma2_ij", "sigma2_jk", "sigma2_ols", "ij_mc", "ij_whe", "ij_mc_clamped", "ij_whe_clamped", "oracle")


def _metric_names(spec: ExperimentSpec) -> tuple[str, ...]:
    t = spec.template
    if t.startswith("fig"):
        return _FIG_METRICS
    if t == "coverage":
        return ("covered", "half_width", "ps_ij_hat", "point")
    if t == "consistency-trend":
        return ("ratio", "abs_dev")
    if t == "rho-diagnostic":
        return ()
    if t == "ustat-expectation":
        return ("u", "ij_u", "ps_ij_u", "ps_ij_u_2")
    raise DomainError(t)


def _oracle(statistic: str, x: np.ndarray) -> float:
    s2 = float(x.var(ddof=1))
    if statistic == "mean":
        return s2 / x.size
    if statistic == "variance":
        return 2.0 * s2**2 / x.size
    return math.nan


def _run_cell(spec_dict: dict, point: dict, start: int, stop: int) -> np.ndarray:
    spec = ExperimentSpec(**{**spec_dict, **{k: tuple(spec_dict[k]) for k in ("n", "k", "B", "N")}})
    policy = RandomnessPolicy(spec.seed)
    key = _point_key(spec, point)
    law = spec.law_object()
    t = spec.template
    rows = []
    if t == "ustat-expectation":
        kern = get_kernel(spec.statistic, point["k"])
        X = np.stack([law.sample(point["n"], policy.generator(key + "/data", r)) for r in range(start, stop)])
        orders = (2,) if point["k"] >= 2 else ()
        b = ustat_estimates_batch(X, kern, orders=orders)
        cols = [b["u"], b["ij_u"], b["ps_ij_u"], b.get("ps_ij_u_2", np.full(len(X), math.nan))]
        return np.column_stack(cols)
    for r in range(start, stop):
        x = law.sample(point["n"], policy.generator(key + "/data", r))
        sample = Sample(x)
        if t.startswith("fig"):
            run = run_bootstrap(sample, get_kernel(spec.statistic), point["B"], policy, key + "/boot", r)
            est = estimate_all(run).as_dict()
            rows.append([est[m] for m in _FIG_METRICS[:-1]] + [_oracle(spec.statistic, x)])
        elif t == "coverage":
            kern = get_kernel(spec.statistic, point["k"])
            res = analyze(sample, kern, point["N"], spec.level, policy, key + "/sub", r, spec.partitions)
            theta = _kernel_mean(spec, law, point["k"])
            lo, hi = res.interval
            rows.append([float(lo <= theta <= hi), 0.5 * (hi - lo), res.estimate.ps_ij_hat, res.point])
        elif t == "consistency-trend":
            kern = get_kernel("mean", point["k"])
            run = draw_incomplete(sample, kern, point["N"], policy, key + "/sub", r)
            target = point["k"] ** 2 / point["n"] * law.variance / point["k"] ** 2
            ratio = ps_ij_hat(run).ps_ij_hat / target
            rows.append([ratio, abs(ratio - 1.0)])
        else:
            raise DomainError(f"template {t!r} has no replication loop")
    return np.asarray(rows, dtype=np.float64).reshape(stop - start, -1)


def _kernel_mean(spec: ExperimentSpec, law, k: int) -> float:
    if spec.statistic == "mean":
        return law.mean
    if isinstance(law, DiscreteDistribution):
        return decompose(get_kernel(spec.statistic, k), law).theta
    raise DomainError("coverage needs the mean kernel or a discrete law (for an exact theta)")


# ---------------------------------------------------------------------------
# summaries


def _summary(values: np.ndarray) -> dict:
    v = values[np.isfinite(values)]
    missing = int(values.size - v.size)
    if v.size == 0:
        nan = math.nan
        return {"mean": nan, "sd": nan, "min": nan, "q1": nan, "median": nan, "q3": nan, "max": nan,
                "whisker_lo": nan, "whisker_hi": nan, "missing": missing}
    q1, med, q3 = (float(q) for q in np.quantile(v, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else math.nan,
        "min": float(v.min()),
        "q1": q1,
        "median": med,
        "q3": q3,
        "max": float(v.max()),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "missing": missing,
    }


COLUMNS = ("experiment", "template", "kind", "estimator", "n", "k", "B", "N", "d", "j", "replications",
           "seed", "value", "mean", "sd", "min", "q1", "median", "q3", "max", "whisker_lo", "whisker_hi",
           "missing")


def _row(spec: ExperimentSpec, kind: str, estimator: str, point: dict, **vals) -> dict:
    row = {c: "" for c in COLUMNS}
    row.update({"experiment": spec.id, "template": spec.template, "kind": kind, "estimator": estimator,
                "replications": spec.replications, "seed": spec.seed})
    row.update(point)
    row.update(vals)
    return row


def _central_moments(law) -> tuple[float, float]:
    if isinstance(law, NormalLaw):
        return law.sigma2, 3.0 * law.sigma2**2
    if isinstance(law, UniformLaw):
        w = law.hi - law.lo
        return w**2 / 12.0, w**4 / 80.0
    mu = law.mean
    m2 = math.fsum(p * (s - mu) ** 2 for s, p in zip(law.support, law.probs))
    m4 = math.fsum(p * (s - mu) ** 4 for s, p in zip(law.support, law.probs))
    return m2, m4


def _references(spec: ExperimentSpec, point: dict) -> list[tuple[str, float]]:
    t = spec.template
    law = spec.law_object() if spec.law else None
    n = point.get("n")
    if t.startswith("fig") and t != "fig7":
        if spec.statistic == "mean":
            return [("var_smoothed", analytic.mean_example(n, law.variance).var_smoothed)]
        if spec.statistic == "variance" and n >= 4:
            mu2, mu4 = _central_moments(law)
            refs = [("var_smoothed", analytic.variance_example(n, mu2, mu4).var_smoothed)]
            if isinstance(law, NormalLaw):
                refs.append(("gaussian_large_n", analytic.gaussian_variance_reference(n, law.sigma2)))
            return refs
        if spec.statistic == "max" and isinstance(law, UniformLaw) and (law.lo, law.hi) == (0.0, 1.0):
            return [("var_smoothed", analytic.max_example(n, "exact").var_smoothed),
                    ("var_smoothed_closed_form", analytic.max_example(n, "published").var_smoothed)]
        return []
    if t == "coverage":
        return [("nominal_level", spec.level)]
    if t == "consistency-trend":
        return [("target_ps_ij", law.variance / n)]
    if t == "rho-diagnostic" and spec.statistic == "mean":
        return [("n_times_one_minus_rho", float(n * (1 - analytic.rho_mean_statistic(n))))]
    if t == "ustat-expectation":
        if not isinstance(law, DiscreteDistribution):
            return []
        kern = get_kernel(spec.statistic, point["k"])
        h = decompose(kern, law)
        ct = coefficient_tables(n, point["k"], min(2, point["k"]))
        refs = [("E_ij_u", expected_estimator(ct, h, "IJ_U")), ("E_ps_ij_u", expected_estimator(ct, h, "psIJ_U")),
                ("var_u", variance_of_u(h, n)), ("theta", h.theta)]
        if point["k"] >= 2:
            refs.append(("E_ps_ij_u_2", expected_estimator(ct, h, "psIJ_U(d)", 2)))
        return refs
    return []


def _assemble(spec: ExperimentSpec, point_results: list[tuple[dict, np.ndarray]]) -> list[dict]:
    rows = []
    names = _metric_names(spec)
    for point, data in point_results:
        for i, name in enumerate(names):
            rows.append(_row(spec, "summary", name, point, **_summary(data[:, i])))
        for name, value in _references(spec, point):
            rows.append(_row(spec, "reference", name, point, value=value))
    return rows


def _direct_rows(spec: ExperimentSpec) -> list[dict]:
    """Templates computed without a replication loop."""
    rows = []
    if spec.template == "fig7":
        for point in _grid(spec):
            ct = coefficient_tables(point["n"], point["k"], spec.d_max)
            rows.append(_row(spec, "value", "alpha", point, value=ct.alpha))
            rows.append(_row(spec, "value", "beta", point, value=ct.beta))
            for j in range(1, point["k"] + 1):
                rows.append(_row(spec, "value", "r_ij", point, j=j, value=float(ct.r_ij[j - 1])))
                rows.append(_row(spec, "value", "r_ps", point, j=j, value=float(ct.r_ps[j - 1])))
                for d in range(1, spec.d_max + 1):
                    rows.append(_row(spec, "value", "r_d", point, j=j, d=d, value=float(ct.r_d[j - 1, d - 1])))
    elif spec.template == "rho-diagnostic":
        for point in _grid(spec):
            policy = RandomnessPolicy(spec.seed)
            res = analytic.rho_diagnostic(get_kernel(spec.statistic), point["n"], spec.law_object(),
                                          spec.replications, policy, _point_key(spec, point))
            rows.append(_row(spec, "value", "rho_hat", point, value=res.rho_hat))
            rows.append(_row(spec, "value", "n_times_one_minus_rho", point, value=res.n_times_one_minus_rho))
            rows.append(_row(spec, "value", "degenerate", point, value=float(res.degenerate)))
            for name, value in _references(spec, point):
                rows.append(_row(spec, "reference", name, point, value=value))
    return rows


def _metadata(spec: ExperimentSpec) -> dict:
    from . import __version__
    from .core import BOOTSTRAP_ENUM_CAP, SUBSET_ENUM_CAP

    return {
        "kind": "ijvar-result",
        "schema_version": 1,
        "version": __version__,
        "seed": spec.seed,
        "caps": {"bootstrap_n": BOOTSTRAP_ENUM_CAP, "subsets": SUBSET_ENUM_CAP},
        "experiment": spec.to_dict(),
        "replications": spec.replications,
    }


# ---------------------------------------------------------------------------
# runners


def _cells(spec: ExperimentSpec) -> list[tuple[dict, int, int]]:
    if spec.template in ("fig7", "rho-diagnostic"):
        return []
    out = []
    for point in _grid(spec):
        for start in range(0, spec.replications, CELL_SIZE):
            out.append((point, start, min(start + CELL_SIZE, spec.replications)))
    return out


def run_figure_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Run one experiment (any template)."""
    return _run_specs([spec], workers, isolate=False)[0]


def run_batch(specs: list[ExperimentSpec], workers: int = 1) -> list[ExperimentResult | ErrorRecord]:
    """Run several experiments; a failing spec yields an :class:`ErrorRecord` in its slot."""
    ids = [s.id for s in specs]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise DomainError(f"duplicate experiment id(s): {', '.join(dup)}")
    return _run_specs(list(specs), workers, isolate=True)


def _safe_cell(spec_dict, point, start, stop):
    try:
        return _run_cell(spec_dict, point, start, stop)
    except Exception as exc:  # reported per spec by the caller
        return ErrorRecord(spec_dict["id"], type(exc).__name__, str(exc))


def _safe_direct(spec: ExperimentSpec):
    try:
        return _direct_rows(spec)
    except Exception as exc:
        return ErrorRecord(spec.id, type(exc).__name__, str(exc))


def _run_specs(specs, workers: int, isolate: bool):
    if workers < 1:
        raise DomainError("workers must be at least 1")
    tasks = [(i, spec.to_dict(), point, a, b) for i, spec in enumerate(specs) for point, a, b in _cells(spec)]
    if workers == 1 or len(tasks) <= 1:
        outputs = [_safe_cell(d, p, a, b) for _, d, p, a, b in tasks]
        direct = [_safe_direct(s) for s in specs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_safe_cell, d, p, a, b) for _, d, p, a, b in tasks]
            dfuts = [pool.submit(_safe_direct, s) for s in specs]
            outputs = [f.result() for f in futs]
            direct = [f.result() for f in dfuts]

    results: list[Any] = []
    for i, spec in enumerate(specs):
        mine = [(t[2], out) for t, out in zip(tasks, outputs) if t[0] == i]
        failure = next((o for _, o in mine if isinstance(o, ErrorRecord)), None)
        if failure is None and isinstance(direct[i], ErrorRecord):
            failure = direct[i]
        if failure is not None:
            if not isinstance(failure, ErrorRecord):
                failure = ErrorRecord(spec.id, "RuntimeError", str(failure))
            if not isolate:
                exc = CapacityError if failure.error == "CapacityError" else (
                    DomainError if failure.error == "DomainError" else RuntimeError)
                raise exc(failure.message)
            results.append(failure)
            continue
        # stitch cells back together in grid order
        per_point: list[tuple[dict, np.ndarray]] = []
        for point in (_grid(spec) if mine else []):
            chunks = [o for p, o in mine if p == point]
            per_point.append((point, np.concatenate(chunks, axis=0)))
        rows = _assemble(spec, per_point) + direct[i]
        results.append(ExperimentResult(spec, rows, _metadata(spec)))
    return results
