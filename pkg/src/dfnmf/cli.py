"""Command-line entry point: ``dfnmf {generate,fit,sweep,eval}``.

Every command takes ``--config <file>`` (TOML or JSON) and flags mirroring
the config keys; flags win over the file. Logs go to stderr, results to
files in ``--out``. Exit codes: 0 ok, 2 validation, 3 numeric failure, 4 I/O.
"""

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, deep
from .fairness import build_fairness_matrix, build_intersectional_matrix
from .graph import (
    SbmSpec,
    generate_sbm,
    homophily,
    load_config_document,
    load_edge_list,
    read_assignment,
    write_attributes,
    write_clusters,
    write_edge_list,
)
from .metrics import evaluate
from .sweep import (
    DEFAULT_GRID,
    METRIC_COLUMNS,
    run_sweep,
    write_front_points,
    write_pareto_json,
    write_rows,
    write_sweep_csv,
)
from .updates import NumericalError

log = logging.getLogger("dfnmf")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    graph: str = None
    attrs: str = None
    sbm: object = None
    assignment: str = None
    attributes: list = None
    schedule: list = None
    hidden: list = None
    k: int = None
    lam: float = 0.0
    grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    seeds: list = field(default_factory=lambda: [0])
    tol: float = 1e-5
    max_iter: int = 500
    workers: int = 1
    out: str = None
    dataset: str = ""

    @classmethod
    def from_sources(cls, document=None, overrides=None):
        document = dict(document or {})
        # a run.json written by an earlier invocation carries its config under "config"
        if "config" in document and "command" in document:
            document = dict(document["config"])
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(document) - names)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        merged = {**document, **{k: v for k, v in (overrides or {}).items() if v is not None}}
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self):
        if self.lam is not None and float(self.lam) < 0:
            raise ValidationError("lam must be nonnegative")
        if not self.grid or any(float(x) < 0 for x in self.grid):
            raise ValidationError("grid must be a nonempty list of nonnegative values")
        if not self.seeds:
            raise ValidationError("seeds must be nonempty")
        if self.tol is None or float(self.tol) < 0:
            raise ValidationError("tol must be nonnegative")
        if int(self.max_iter) < 1:
            raise ValidationError("max_iter must be >= 1")
        if int(self.workers) < 1:
            raise ValidationError("workers must be >= 1")
        if self.k is not None and int(self.k) < 1:
            raise ValidationError("k must be >= 1")
        self.lam = float(self.lam)
        self.grid = [float(x) for x in self.grid]
        self.seeds = [int(s) for s in self.seeds]
        self.tol = float(self.tol)
        self.max_iter = int(self.max_iter)
        self.workers = int(self.workers)

    def to_dict(self):
        return dataclasses.asdict(self)


def _load_graph(cfg):
    if cfg.sbm is not None:
        spec_doc = cfg.sbm
        if isinstance(spec_doc, str):
            spec_doc = load_config_document(spec_doc)
        try:
            spec = SbmSpec.from_dict(spec_doc)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid SBM spec: {exc}") from exc
        return generate_sbm(spec)
    if not cfg.graph or not cfg.attrs:
        raise ValidationError("need --graph and --attrs, or an sbm spec")
    try:
        return load_edge_list(cfg.graph, cfg.attrs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _attribute_indices(g, cfg):
    if not cfg.attributes:
        return [0]
    out = []
    for a in cfg.attributes:
        if isinstance(a, int) or (isinstance(a, str) and a.isdigit()):
            idx = int(a)
        elif a in g.attribute_names:
            idx = g.attribute_names.index(a)
        else:
            raise ValidationError(f"unknown attribute {a!r}; have {g.attribute_names}")
        if not 0 <= idx < len(g.attributes):
            raise ValidationError(f"attribute index {idx} out of range")
        out.append(idx)
    return out


def _fairness(g, cfg):
    idx = _attribute_indices(g, cfg)
    try:
        if len(idx) == 1:
            return build_fairness_matrix(g, idx[0]), idx[0]
        return build_intersectional_matrix(g, idx), idx
    except (ValueError, IndexError) as exc:
        raise ValidationError(str(exc)) from exc


def _schedule(g, cfg):
    try:
        if cfg.schedule:
            sched = deep.LayerSchedule(tuple(cfg.schedule))
            if sched.n != g.n:
                raise ValidationError(f"schedule starts at {sched.n}, graph has {g.n} nodes")
            return sched
        if cfg.k is None:
            raise ValidationError("k is required unless a full schedule is given")
        if cfg.hidden is not None:
            return deep.LayerSchedule.from_hidden(g.n, [max(cfg.k, min(h, g.n)) for h in cfg.hidden], cfg.k)
        return deep.default_schedule(g.n, cfg.k)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _out_dir(cfg):
    if not cfg.out:
        raise ValidationError("--out is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_run(out, command, cfg, extra=None):
    doc = {"command": command, "version": __version__, "seeds": cfg.seeds, "config": cfg.to_dict()}
    if extra:
        doc.update(extra)
    _write_json(out / "run.json", doc)


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def cmd_generate(cfg):
    if cfg.sbm is None:
        raise ValidationError("generate needs an sbm spec (--sbm or config key 'sbm')")
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    write_edge_list(g, out / "edges.txt")
    write_attributes(g, out / "attributes.csv")
    write_clusters(g.node_ids, g.planted_clusters, out / "clusters.csv")
    spec_doc = cfg.sbm if isinstance(cfg.sbm, dict) else load_config_document(cfg.sbm)
    prov = {
        "spec": SbmSpec.from_dict(spec_doc).to_dict(),
        "n": g.n,
        "edges": g.n_edges,
        "density": g.density(),
        "homophily": {name: homophily(g, a) for a, name in enumerate(g.attribute_names)},
        "planted_homophily": homophily(g, "cluster"),
        "isolated_nodes": int(np.sum(np.diff(g.adjacency.indptr) == 0)),
    }
    _write_json(out / "provenance.json", prov)
    _write_run(out, "generate", cfg)
    log.info("wrote SBM with %d nodes, %d edges to %s", g.n, g.n_edges, out)
    return EXIT_OK


def _metric_row(cfg, k, lam, seed, m):
    return {"dataset": cfg.dataset, "k": k, "lambda": lam, "seed": seed,
            "Q": m.Q, "B": m.B_bar, "dSP": m.delta_SP, "ARI": m.ARI, "ACC": m.ACC}


def cmd_fit(cfg):
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    F, attr = _fairness(g, cfg)
    sched = _schedule(g, cfg)
    seed = cfg.seeds[0]
    rep = deep.fit(g.adjacency, F, sched, cfg.lam, tol=cfg.tol, max_iter=cfg.max_iter, seed=seed)
    m = evaluate(g, rep.hard_assignment, sched.k, attr)
    rep = rep.with_metrics(_json_safe(m.to_dict()))
    doc = rep.to_dict()
    doc.pop("timing")
    doc["node_ids"] = list(g.node_ids)
    _write_json(out / "fit_report.json", doc)
    write_rows(out / "metrics.csv", METRIC_COLUMNS, [_metric_row(cfg, sched.k, cfg.lam, seed, m)])
    write_clusters(g.node_ids, rep.hard_assignment, out / "assignment.csv")
    _write_run(out, "fit", cfg)
    log.info("fit lambda=%g seed=%d: %d sweeps, Q=%.4f B=%.4f (pretrain %.2fs, fine-tune %.2fs)",
             cfg.lam, seed, rep.iterations, m.Q, m.B_bar, rep.pretrain_seconds, rep.finetune_seconds)
    return EXIT_OK


def cmd_sweep(cfg):
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    F, attr = _fairness(g, cfg)
    sched = _schedule(g, cfg)
    res = run_sweep(g, F, sched, cfg.grid, cfg.seeds, sched.k, attr, workers=cfg.workers,
                    dataset=cfg.dataset, tol=cfg.tol, max_iter=cfg.max_iter)
    write_sweep_csv(res, out / "sweep.csv")
    write_pareto_json(res, out / "pareto.json")
    write_front_points(res, out / "front_points.csv")
    _write_run(out, "sweep", cfg)
    log.info("sweep over %d lambdas x %d seeds: lambda*=%g bracket=%s",
             len(res.grid), len(cfg.seeds), res.lambda_star, res.bracket)
    return EXIT_OK


def cmd_eval(cfg):
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    if not cfg.assignment:
        raise ValidationError("eval needs --assignment")
    try:
        labels = read_assignment(cfg.assignment, g)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    k = cfg.k if cfg.k is not None else int(labels.max()) + 1
    if labels.max() >= k:
        raise ValidationError(f"assignment uses cluster id {labels.max()} >= k={k}")
    attr = _attribute_indices(g, cfg)
    attr = attr[0] if len(attr) == 1 else attr
    m = evaluate(g, labels, k, attr)
    write_rows(out / "metrics.csv", METRIC_COLUMNS, [_metric_row(cfg, k, None, None, m)])
    _write_json(out / "metrics.json", _json_safe(m.to_dict()))
    _write_run(out, "eval", cfg)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "sweep": cmd_sweep, "eval": cmd_eval}


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="dfnmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML/JSON manifest (or a previous run.json)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--graph", help="edge list file")
        p.add_argument("--attrs", help="attribute CSV (node,attr1[,...][,cluster])")
        p.add_argument("--sbm", help="SBM spec file (TOML/JSON) instead of --graph/--attrs")
        p.add_argument("--attributes", type=_strs, help="comma-separated attribute names or indices")
        p.add_argument("--dataset", help="dataset label for CSV rows")
        p.add_argument("--k", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("fit", "sweep"):
            p.add_argument("--schedule", type=_ints, help="full layer sizes n,r1,...,k")
            p.add_argument("--hidden", type=_ints, help="hidden widths; schedule becomes n,hidden...,k")
            p.add_argument("--tol", type=float)
            p.add_argument("--max-iter", dest="max_iter", type=int)
            p.add_argument("--seeds", type=_ints, help="comma-separated seeds")
        if name == "fit":
            p.add_argument("--lam", type=float, help="fairness weight lambda")
        if name == "sweep":
            p.add_argument("--grid", type=_floats, help="comma-separated lambda grid")
            p.add_argument("--workers", type=int)
        if name == "eval":
            p.add_argument("--assignment", help="CSV node,cluster")
    return parser


def _error(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        document = load_config_document(args.config) if args.config else {}
        cfg = RunConfig.from_sources(document, overrides)
        return COMMANDS[args.command](cfg)
    except (ValidationError, TypeError) as exc:
        return _error(EXIT_VALIDATION, "validation", exc)
    except (NumericalError, FloatingPointError) as exc:
        return _error(EXIT_NUMERIC, "numeric", exc)
    except OSError as exc:
        return _error(EXIT_IO, "io", exc)
    except ValueError as exc:
        return _error(EXIT_VALIDATION, "validation", exc)


if __name__ == "__main__":
    sys.exit(main())
