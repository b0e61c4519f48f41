"""
PDQLS SKILL MODULE: SWEEPS
==========================
This file is part of THE LAB - benchmark orchestration.

Grid sweeps over (kappa, N, eps, ...) with one solve per grid point,
executed on a thread pool and merged in grid order. Rows are written as
RFC-4180 CSV with doubles at 17 significant digits, each stamped with
the build identifier and a hash of the sweep configuration, so that the
same configuration always produces the same bytes.
"""

import csv
import hashlib
import io
import itertools
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

os.environ.setdefault("GIT_PYTHON_REFRESH", "quiet")
import git  # noqa: E402

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.codec import dumps, format_double, load
from core.errors import SweepConfigError, ValidationError
from core.polyapprox import approx_error_sup, build_inverse_approximant, build_window, least_degree
from core.runlog import log_event
from modules.instances import grover_diagonal, random_pd_instance, random_sum_instance
from modules.solver import SOLVER_SCHEMA, solve_postselect
from modules.sumqls import SUMQLS_SCHEMA, sumqls_solve
from modules.vtaa import build_schedule, gamma_factor, simulate_vst, vtaa_cost_report

STAMP = ("build_id", "config_hash")
DEGREE_SCHEMA = ("kappa", "eps", "ell", "degree", "K", "sup_error")
WINDOW_SCHEMA = ("eps", "delta", "degree", "sigma", "center_min", "edge_max", "max_abs")
VTAA_SCHEMA = (
    "N", "kappa", "eps", "seed", "m", "p_succ", "QUB", "QUb",
    "QUB_amplified", "trace_error", "gamma_factor", "bound_ratio",
)
GROVER_SCHEMA = ("N", "M", "kappa", "ell", "K", "p_succ", "k", "QUB", "marked_probability")
CURVE_SCHEMA = ("x", "P", "inverse")

SWEEP_KINDS = ("degree", "window", "solve", "vtaa", "sumqls", "grover")
FIT_ALIASES = {"degree": "ell", "queries": "QUB"}


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
@dataclass
class SweepConfig:
    """
    One sweep: its kind, the parameter grids and where the CSV goes.

    Grids that a kind does not use are ignored; the ones it uses must be
    non-empty. Seeds are always explicit.
    """

    kind: str
    kappas: List[float] = field(default_factory=list)
    ns: List[int] = field(default_factory=list)
    eps: List[float] = field(default_factory=lambda: [0.01])
    etas: List[float] = field(default_factory=lambda: [1.0])
    deltas: List[float] = field(default_factory=list)
    js: List[int] = field(default_factory=list)
    ss: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    mode: str = "amplify"
    output: Optional[str] = None
    workers: int = 1

    USES = {
        "degree": ("kappas", "eps"),
        "window": ("eps", "deltas"),
        "solve": ("ns", "kappas", "eps", "etas", "seeds"),
        "vtaa": ("ns", "kappas", "eps", "seeds"),
        "sumqls": ("ns", "js", "ss", "eps", "seeds"),
        "grover": ("kappas", "eps"),
    }

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.kind not in SWEEP_KINDS:
            raise SweepConfigError(f"unknown sweep kind {self.kind!r}", {"kinds": list(SWEEP_KINDS)})
        for name in self.USES[self.kind]:
            if not getattr(self, name):
                raise SweepConfigError(f"grid {name} is empty for a {self.kind} sweep")
        if self.workers < 1:
            raise SweepConfigError("workers must be positive", {"workers": self.workers})
        if self.mode not in ("postselect", "amplify"):
            raise SweepConfigError(f"unknown solve mode {self.mode!r}")
        if self.output:
            parent = Path(self.output).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise SweepConfigError("output directory is not writable", {"output": self.output})

    def to_json(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if k not in ("output", "workers")}

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise SweepConfigError("unknown sweep config keys", {"keys": sorted(unknown)})
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            return cls.from_json(load(path))
        except (OSError, ValueError) as e:
            raise SweepConfigError(f"cannot read sweep config {path}: {e}")

    @property
    def config_hash(self) -> str:
        """sha256 of the grid description; output path and pool size do not count."""
        return hashlib.sha256(dumps(self.to_json()).encode("utf-8")).hexdigest()[:16]


def build_id() -> str:
    """git describe of the working tree, or "unknown" outside a repository."""
    try:
        repo = git.Repo(config.PROJECT_ROOT, search_parent_directories=True)
        return repo.git.describe("--always", "--dirty", "--tags")
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.CommandError, OSError):
        return "unknown"


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------
def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_double(value)
    return str(value)


def csv_text(rows: Sequence[Dict[str, Any]], schema: Sequence[str]) -> str:
    """Header plus rows; every row must carry exactly the schema's columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(schema)
    for i, row in enumerate(rows):
        if set(row) != set(schema):
            raise ValidationError(
                f"row {i} does not match the schema",
                {"missing": sorted(set(schema) - set(row)), "extra": sorted(set(row) - set(schema))},
            )
        writer.writerow([_cell(row[col]) for col in schema])
    return buf.getvalue()


def emit_csv(rows: Sequence[Dict[str, Any]], schema: Sequence[str], path) -> Path:
    """Write rows to `path` (empty rows give a header-only file)."""
    path = Path(path)
    text = csv_text(rows, schema)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    log_event("emit_csv", path=str(path), rows=len(rows), columns=len(schema))
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


# ----------------------------------------------------------------------
# grid points
# ----------------------------------------------------------------------
def degree_point(kappa: float, eps: float) -> Dict[str, Any]:
    ell = least_degree(kappa, eps)
    p = build_inverse_approximant(ell, kappa)
    return {"kappa": kappa, "eps": eps, "ell": ell, "degree": p.degree, "K": p.K, "sup_error": approx_error_sup(p)}


def window_point(eps: float, delta: float) -> Dict[str, Any]:
    w = build_window(eps, delta)
    return {
        "eps": eps,
        "delta": delta,
        "degree": w.degree,
        "sigma": w.sigma,
        "center_min": w.bands["center_min"],
        "edge_max": w.bands["edge_max"],
        "max_abs": w.bands["max_abs"],
    }


def solve_point(n: int, kappa: float, eps: float, eta: float, seed: int, mode: str) -> Dict[str, Any]:
    inst = random_pd_instance(n, kappa, seed)
    _, report = solve_postselect(inst.operator, inst.b, eta=eta, eps=eps, mode=mode, seed=seed)
    return report.csv_row()


def vtaa_point(n: int, kappa: float, eps: float, seed: int, schedule) -> Dict[str, Any]:
    inst = random_pd_instance(n, kappa, seed)
    _, report = simulate_vst(inst.operator, inst.b, schedule)
    cost = vtaa_cost_report(schedule, report, inverse_norm=inst.meta["inverse_norm"], strict=False)
    _, amplified = solve_postselect(inst.operator, inst.b, eps=eps, mode="amplify", seed=seed)
    return {
        "N": n,
        "kappa": kappa,
        "eps": eps,
        "seed": seed,
        "m": schedule.m,
        "p_succ": report.p_succ,
        "QUB": report.queries["U_B"],
        "QUb": report.queries["U_b"],
        "QUB_amplified": amplified.queries["U_B"],
        "trace_error": report.trace_error,
        "gamma_factor": gamma_factor(inst.operator, inst.b, kappa),
        "bound_ratio": cost["ratio"],
    }


def sumqls_point(n: int, j_terms: int, s: int, eps: float, seed: int) -> Dict[str, Any]:
    inst = random_sum_instance(n, j_terms, s, seed)
    _, report = sumqls_solve(inst.spec, inst.b, eps)
    return report.csv_row()


def grover_point(kappa: float, eps: float) -> Dict[str, Any]:
    """M = 1 and N = kappa^2 + 1 give condition number kappa."""
    n = int(round(kappa * kappa)) + 1
    inst = grover_diagonal(n, 1, marked=[0])
    _, report = solve_postselect(inst.solver_operator(), inst.b, eps=eps, mode="amplify")
    return {
        "N": n,
        "M": 1,
        "kappa": inst.kappa,
        "ell": report.ell,
        "K": report.K,
        "p_succ": report.p_succ,
        "k": report.aa_rounds,
        "QUB": report.queries["U_B"],
        "marked_probability": inst.meta["marked_probability"],
    }


def _grid(cfg: SweepConfig) -> Tuple[Sequence[str], List[Callable[[], Dict[str, Any]]]]:
    if cfg.kind == "degree":
        return DEGREE_SCHEMA, [lambda k=k, e=e: degree_point(k, e) for k, e in itertools.product(cfg.kappas, cfg.eps)]
    if cfg.kind == "window":
        return WINDOW_SCHEMA, [lambda e=e, d=d: window_point(e, d) for e, d in itertools.product(cfg.eps, cfg.deltas)]
    if cfg.kind == "solve":
        grid = itertools.product(cfg.ns, cfg.kappas, cfg.eps, cfg.etas, cfg.seeds)
        return SOLVER_SCHEMA, [
            lambda n=n, k=k, e=e, h=h, s=s: solve_point(n, k, e, h, s, cfg.mode) for n, k, e, h, s in grid
        ]
    if cfg.kind == "vtaa":
        # schedules are immutable; build them once before the pool starts
        schedules = {(k, e): build_schedule(k, 1.0, e) for k, e in itertools.product(cfg.kappas, cfg.eps)}
        grid = itertools.product(cfg.ns, cfg.kappas, cfg.eps, cfg.seeds)
        return VTAA_SCHEMA, [
            lambda n=n, k=k, e=e, s=s: vtaa_point(n, k, e, s, schedules[(k, e)]) for n, k, e, s in grid
        ]
    if cfg.kind == "sumqls":
        grid = itertools.product(cfg.ns, cfg.js, cfg.ss, cfg.eps, cfg.seeds)
        return SUMQLS_SCHEMA, [
            lambda n=n, j=j, s=s, e=e, sd=sd: sumqls_point(n, j, s, e, sd) for n, j, s, e, sd in grid if s <= n
        ]
    return GROVER_SCHEMA, [lambda k=k, e=e: grover_point(k, e) for k, e in itertools.product(cfg.kappas, cfg.eps)]


def run_sweep(cfg: SweepConfig, quiet: bool = False) -> Tuple[List[Dict[str, Any]], Tuple[str, ...]]:
    """
    Run every grid point and merge the rows in grid order.

    Returns:
        (rows with build_id and config_hash appended, schema of those rows)
    """
    schema, jobs = _grid(cfg)
    full_schema = tuple(schema) + STAMP
    stamp = {"build_id": build_id(), "config_hash": cfg.config_hash}
    if not quiet:
        print("=" * 60)
        print(f"📐 Sweep: {cfg.kind} ({len(jobs)} points, {cfg.workers} workers)")
        print("=" * 60)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda job: job(), jobs))
    else:
        results = [job() for job in jobs]
    rows = [{**row, **stamp} for row in results]

    if cfg.output:
        emit_csv(rows, full_schema, cfg.output)
        if not quiet:
            print(f"✅ {len(rows)} rows written to {cfg.output}")
    log_event("run_sweep", kind=cfg.kind, points=len(rows), config_hash=stamp["config_hash"])
    return rows, full_schema


def fit_loglog(xs: Sequence[float], ys: Sequence[float]) -> Dict[str, float]:
    """Least-squares line through (log x, log y)."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if x.size < 2:
        raise ValidationError("a fit needs at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    return {"slope": float(slope), "intercept": float(intercept), "points": int(x.size)}


def fit_rows(rows: Sequence[Dict[str, Any]], spec: str) -> Dict[str, Any]:
    """
    Fit "y~x" over sweep rows, e.g. "degree~kappa"; rows sharing an x are
    averaged first.
    """
    try:
        y_name, x_name = (part.strip() for part in spec.split("~"))
    except ValueError:
        raise SweepConfigError(f"fit must look like y~x, got {spec!r}")
    y_col = y_name if rows and y_name in rows[0] else FIT_ALIASES.get(y_name, y_name)
    if not rows or y_col not in rows[0] or x_name not in rows[0]:
        raise SweepConfigError("fit columns are not in the sweep rows", {"fit": spec})
    groups: Dict[float, List[float]] = {}
    for row in rows:
        groups.setdefault(float(row[x_name]), []).append(float(row[y_col]))
    xs = sorted(groups)
    ys = [math.fsum(groups[x]) / len(groups[x]) for x in xs]
    return {"fit": spec, "column": y_col, **fit_loglog(xs, ys)}
