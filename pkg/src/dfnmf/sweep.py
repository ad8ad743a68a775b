"""Lambda sweeps, Pareto fronts and ideal-point selection of lambda*."""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import deep
from .metrics import evaluate
from .updates import NumericalError, as_operator

DEFAULT_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)

METRIC_COLUMNS = ["dataset", "k", "lambda", "seed", "Q", "B", "dSP", "ARI", "ACC"]
SWEEP_COLUMNS = METRIC_COLUMNS + ["iterations", "converged", "status"]


@dataclass
class SweepPoint:
    lam: float
    Q: float
    B_bar: float
    Q_scaled: float = float("nan")
    B_scaled: float = float("nan")
    dSP: float = float("nan")
    ARI: float = None
    ACC: float = None
    n_ok: int = 0
    n_failed: int = 0
    seed_mean: bool = True
    fit_refs: list = field(default_factory=list)

    @property
    def scalarized(self):
        return 0.5 * self.Q + 0.5 * self.B_bar


@dataclass
class SweepResult:
    grid: list
    points: list
    pareto: list
    lambda_star: float
    bracket: tuple
    runs: list
    k: int = None
    dataset: str = ""

    @property
    def star_point(self):
        return next(p for p in self.points if p.lam == self.lambda_star)

    def scalarized_choice(self):
        """Grid value maximizing ``0.5 Q + 0.5 B`` (reported, never used to select)."""
        ok = [p for p in self.points if p.n_ok]
        return max(ok, key=lambda p: (p.scalarized, -p.lam)).lam


def minmax_scale(values):
    """Scale to [0, 1]; a constant axis maps to 1.0 everywhere."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = np.min(v), np.max(v)
    if hi == lo:
        return np.ones_like(v)
    return (v - lo) / (hi - lo)


def pareto_front(points):
    """Indices of points not dominated in both coordinates (higher is better).

    Exact duplicates are kept once (first occurrence).
    """
    pts = [tuple(map(float, p)) for p in points]
    keep = []
    seen = set()
    for i, (q, b) in enumerate(pts):
        if (q, b) in seen:
            continue
        dominated = any(
            (q2 >= q and b2 >= b) and (q2 > q or b2 > b) for q2, b2 in pts
        )
        if not dominated:
            keep.append(i)
            seen.add((q, b))
    return keep


def nearest_on_grid(value, grid):
    """Grid entry closest to ``value`` in log distance (ties to the smaller)."""
    g = sorted(float(x) for x in grid)
    if value <= 0 or any(x <= 0 for x in g):
        return min(g, key=lambda x: (abs(x - value), x))
    lv = math.log10(value)
    return min(g, key=lambda x: (abs(math.log10(x) - lv), x))


def select_lambda_star(points, pareto, grid=None):
    """Pareto point closest to (1, 1) in scaled space, plus its bracket.

    Ties on the exact distance go to the smaller ``|Q_scaled - B_scaled|``,
    then to the smaller lambda. The bracket is the grid values nearest to
    ``lambda*/10`` and ``10 lambda*``.
    """
    if not pareto:
        raise ValueError("empty Pareto set")
    cand = [points[i] for i in pareto]

    def key(p):
        d = math.hypot(p.Q_scaled - 1.0, p.B_scaled - 1.0)
        return (d, abs(p.Q_scaled - p.B_scaled), p.lam)

    star = min(cand, key=key)
    grid = [p.lam for p in points] if grid is None else list(grid)
    bracket = (nearest_on_grid(star.lam / 10.0, grid), nearest_on_grid(star.lam * 10.0, grid))
    return star.lam, bracket


def _mean(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else None


def aggregate(runs, grid):
    """Seed means per lambda, min-max scaling over the whole grid, Pareto front."""
    runs = sorted(runs, key=lambda r: (r["lambda"], r["seed"]))
    points = []
    for lam in grid:
        rows = [r for r in runs if r["lambda"] == lam]
        ok = [r for r in rows if r["status"] == "ok"]
        points.append(SweepPoint(
            lam=float(lam),
            Q=_mean([r["Q"] for r in ok]) if ok else float("nan"),
            B_bar=_mean([r["B"] for r in ok]) if ok else float("nan"),
            dSP=_mean([r["dSP"] for r in ok]) if ok else float("nan"),
            ARI=_mean([r["ARI"] for r in ok]),
            ACC=_mean([r["ACC"] for r in ok]),
            n_ok=len(ok),
            n_failed=len(rows) - len(ok),
            fit_refs=[f"lambda={lam:g}/seed={r['seed']}" for r in ok],
        ))
    valid = [p for p in points if p.n_ok]
    if not valid:
        raise RuntimeError("every fit in the sweep failed")
    qs = minmax_scale([p.Q for p in valid])
    bs = minmax_scale([p.B_bar for p in valid])
    for p, q, b in zip(valid, qs, bs):
        p.Q_scaled, p.B_scaled = float(q), float(b)
    idx_valid = pareto_front([(p.Q_scaled, p.B_scaled) for p in valid])
    index_of = {id(p): i for i, p in enumerate(points)}
    pareto = [index_of[id(valid[i])] for i in idx_valid]
    return runs, points, pareto


def _fit_seed(args):
    """Pretrain once for a seed, then fine-tune every lambda from that start."""
    A, F, schedule, grid, seed, attr_index, fit_kw, dataset, truth, g = args
    rows = []
    k = schedule.k
    try:
        init = deep.pretrain(A, schedule, tol=fit_kw.get("tol", 1e-5),
                             max_iter=fit_kw.get("max_iter", 500), seed=seed)
    except (NumericalError, ValueError) as exc:
        return [_failed_row(dataset, k, lam, seed, exc) for lam in grid]
    for lam in grid:
        try:
            rep = deep.fit(A, F, schedule, lam, seed=seed, init=init, **fit_kw)
            m = evaluate(g, rep.hard_assignment, k, attr_index, truth)
        except (NumericalError, ValueError) as exc:
            rows.append(_failed_row(dataset, k, lam, seed, exc))
            continue
        rows.append({
            "dataset": dataset, "k": k, "lambda": float(lam), "seed": seed,
            "Q": m.Q, "B": m.B_bar, "dSP": m.delta_SP, "ARI": m.ARI, "ACC": m.ACC,
            "iterations": rep.iterations, "converged": rep.converged, "status": "ok",
            "penalty": rep.final[2], "objective": rep.final[0],
        })
    return rows


def _failed_row(dataset, k, lam, seed, exc):
    return {
        "dataset": dataset, "k": k, "lambda": float(lam), "seed": seed,
        "Q": None, "B": None, "dSP": None, "ARI": None, "ACC": None,
        "iterations": 0, "converged": False, "status": f"failed: {exc}",
    }


def run_sweep(g, F, schedule, grid=DEFAULT_GRID, seeds=(0,), k=None, attr_index=0,
              workers=1, dataset="", truth=None, **fit_kw):
    """Fit every (lambda, seed) pair and select lambda*.

    The same seeds are used for every lambda, and a seed's pretrained model is
    shared by all lambdas. Rows are sorted by (lambda, seed) before
    aggregation, so ``workers > 1`` gives the same result as a serial run.
    """
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("empty lambda grid")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if schedule is None:
        if k is None:
            raise ValueError("pass a schedule or k")
        schedule = deep.default_schedule(g.n, k)
    schedule = deep.as_schedule(schedule, g.n)
    if k is not None and schedule.k != k:
        raise ValueError(f"schedule ends at {schedule.k}, expected k={k}")
    if truth is None:
        truth = g.planted_clusters
    A = as_operator(g.adjacency)
    tasks = [(A, F, schedule, grid, s, attr_index, fit_kw, dataset, truth, g) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_fit_seed, tasks))
    else:
        chunks = [_fit_seed(t) for t in tasks]
    runs = [r for chunk in chunks for r in chunk]
    runs, points, pareto = aggregate(runs, grid)
    lam_star, bracket = select_lambda_star(points, pareto, grid)
    return SweepResult(grid, points, pareto, lam_star, bracket, runs, schedule.k, dataset)


def k_sensitivity(g, F, hidden, k_list, grid=DEFAULT_GRID, seeds=(0,), attr_index=0,
                  workers=1, dataset="", **fit_kw):
    """One sweep per k with schedule ``[n, *hidden, k]``; a row per k at lambda*."""
    rows = []
    for k in k_list:
        sched = deep.LayerSchedule((g.n, *(max(k, h) for h in hidden), k))
        res = run_sweep(g, F, sched, grid, seeds, k, attr_index, workers, dataset, **fit_kw)
        p = res.star_point
        rows.append({
            "k": k, "lambda_star": res.lambda_star, "layers": list(sched.sizes[1:]),
            "Q": p.Q, "B": p.B_bar, "bracket": list(res.bracket), "result": res,
        })
    return rows


def fmt(x):
    """17 significant digits for floats (exact round trip); blanks for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_rows(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])


def write_sweep_csv(result, path):
    write_rows(path, SWEEP_COLUMNS, result.runs)


def front_rows(result):
    pareto = set(result.pareto)
    return [
        {
            "lambda": p.lam, "Q": p.Q, "B": p.B_bar, "Q_scaled": p.Q_scaled, "B_scaled": p.B_scaled,
            "dSP": p.dSP, "ARI": p.ARI, "ACC": p.ACC, "scalarized": p.scalarized,
            "pareto": i in pareto, "selected": p.lam == result.lambda_star,
            "n_ok": p.n_ok, "n_failed": p.n_failed,
        }
        for i, p in enumerate(result.points)
    ]


FRONT_COLUMNS = ["lambda", "Q", "B", "Q_scaled", "B_scaled", "dSP", "ARI", "ACC",
                 "scalarized", "pareto", "selected", "n_ok", "n_failed"]


def write_front_points(result, path):
    write_rows(path, FRONT_COLUMNS, front_rows(result))


def pareto_document(result):
    return {
        "dataset": result.dataset,
        "k": result.k,
        "grid": result.grid,
        "pareto": [result.points[i].lam for i in result.pareto],
        "lambda_star": result.lambda_star,
        "bracket": list(result.bracket),
        "scalarized_choice": result.scalarized_choice(),
        "points": front_rows(result),
    }


def write_pareto_json(result, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pareto_document(result), fh, indent=2)
        fh.write("\n")
