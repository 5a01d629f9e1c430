"""Command-line front end.

Exit codes: 0 success, 2 malformed input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bench import (
    ExperimentConfig,
    StabilityConfig,
    misspecification_sweep,
    rows_to_csv,
    run_experiment,
    stability_counts,
    sweep_to_csv,
)
from .cam import CamConfig, edge_pvalues, greedy_search, neg_log_lik_score, pns, prune, run_cam, Neighborhoods
from .data import read_csv, write_csv
from .errors import CamError, InvalidData
from .graph import Dag, from_edge_list, from_json, sid, shd, to_edge_list, to_json
from .simulate import default_p_conn, make_sem, random_dag, simulate_data

log = logging.getLogger("camdag")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


def _load_json(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _cam_config(args) -> CamConfig:
    doc = _load_json(args.config)
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    doc = dict(doc.get("cam", {k: v for k, v in doc.items() if k != "stability"}))
    if args.no_pns:
        doc["use_pns"] = False
    if args.alpha is not None:
        doc["prune_alpha"] = args.alpha
    if args.basis is not None:
        doc["num_basis"] = args.basis
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        return CamConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None


def _read_data(path):
    if path is None:
        raise InputError("--input is required")
    try:
        return read_csv(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_dag_file(path):
    """Return (dag-or-edges, explicit p or None)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from None
    try:
        if text.lstrip().startswith("{"):
            dag = from_json(text)
            return dag, dag.p
        return from_edge_list(text), None
    except (ValueError, KeyError, CamError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_dag(out_dir, dag: Dag, stem="dag"):
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, f"{stem}.txt"), to_edge_list(dag))
    _write(os.path.join(out_dir, f"{stem}.json"), to_json(dag) + "\n")


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise InputError(f"--{name} is required for '{args.command}'")


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    _require(args, "seed", "output")
    doc = _load_json(args.config)
    p = int(doc.get("p", args.p))
    n = int(doc.get("n", args.n))
    p_conn = doc.get("p_conn")
    rng = np.random.default_rng(args.seed)
    dag = random_dag(p, default_p_conn(p) if p_conn is None else float(p_conn), rng)
    spec = make_sem(
        dag, rng,
        doc.get("function_kind", "gp"),
        float(doc.get("gamma", 1.0)),
        float(doc.get("omega", 1.0)),
    )
    data = simulate_data(spec, n, rng)
    os.makedirs(args.output, exist_ok=True)
    write_csv(data, os.path.join(args.output, "data.csv"))
    _write_dag(args.output, dag, "truth")
    _write(os.path.join(args.output, "sem.json"), spec.to_json() + "\n")
    return EXIT_OK


def cmd_pns(args):
    _require(args, "output")
    data = _read_data(args.input)
    cfg = _cam_config(args)
    nbhd = pns(data, cfg, n_jobs=args.threads)
    doc = {"p": data.p, "max_size": nbhd.max_size, "sets": [sorted(s) for s in nbhd.sets]}
    _write(args.output, json.dumps(doc, sort_keys=True) + "\n")
    return EXIT_OK


def _read_neighborhoods(path):
    doc = _load_json(path)
    try:
        return Neighborhoods(tuple(doc["sets"]), int(doc["max_size"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_incedge(args):
    _require(args, "output")
    data = _read_data(args.input)
    cfg = _cam_config(args)
    if args.neighborhoods is not None:
        nbhd = _read_neighborhoods(args.neighborhoods)
    elif cfg.use_pns:
        nbhd = pns(data, cfg, n_jobs=args.threads)
    else:
        nbhd = None
    res = greedy_search(data, nbhd, cfg, n_jobs=args.threads)
    _write_dag(args.output, res.dag)
    return EXIT_OK


def cmd_prune(args):
    _require(args, "output", "dag")
    data = _read_data(args.input)
    cfg = _cam_config(args)
    dag, _ = _read_dag_file(args.dag)
    if dag.p != data.p:
        dag = Dag(data.p, dag.edges) if dag.p < data.p else None
        if dag is None:
            raise InputError("DAG has more nodes than the data has columns")
    _write_dag(args.output, prune(data, dag, cfg, n_jobs=args.threads))
    return EXIT_OK


def cmd_fit(args):
    _require(args, "output")
    data = _read_data(args.input)
    cfg = _cam_config(args)
    res = run_cam(data, cfg, n_jobs=args.threads)
    _write_dag(args.output, res.dag)
    manifest = {
        "artifact_version": __version__,
        "config": json.loads(cfg.to_json()),
        "seed": cfg.seed,
        "input": os.path.basename(args.input),
        "n": data.n,
        "p": data.p,
        "column_names": list(data.names),
        "score_trajectory": res.search.trajectory,
        "added_edges": [[k, j, g] for k, j, g in res.search.added],
        "unpruned_edges": [list(e) for e in res.unpruned.sorted_edges()],
        "edges": [list(e) for e in res.dag.sorted_edges()],
    }
    _write(os.path.join(args.output, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_eval(args):
    g, pg = _read_dag_file(args.true_dag)
    h, ph = _read_dag_file(args.est_dag)
    if pg is not None and ph is not None and pg != ph:
        raise InputError(f"dimension mismatch: p={pg} vs p={ph}")
    p = pg if pg is not None else ph if ph is not None else max(g.p, h.p)
    if args.nodes is not None:
        if (pg is not None and pg != args.nodes) or (ph is not None and ph != args.nodes):
            raise InputError("--nodes disagrees with a JSON DAG")
        p = args.nodes
    if g.p > p or h.p > p:
        raise InputError(f"dimension mismatch: edge index beyond p={p}")
    g, h = Dag(p, g.edges), Dag(p, h.edges)
    print(f"shd={shd(g, h)} sid={sid(g, h)}")
    return EXIT_OK


def cmd_bench(args):
    _require(args, "seed", "output")
    doc = _load_json(args.config)
    sweep = doc.pop("sweep", None)
    doc["seed"] = args.seed
    if args.no_pns or args.alpha is not None or args.basis is not None:
        cam = dict(doc.get("cam", {}))
        if args.no_pns:
            cam["use_pns"] = False
        if args.alpha is not None:
            cam["prune_alpha"] = args.alpha
        if args.basis is not None:
            cam["num_basis"] = args.basis
        doc["cam"] = cam
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None
    if sweep:
        summary, raw = misspecification_sweep(cfg, sweep.get("gamma", [cfg.gamma]), sweep.get("omega", [cfg.omega]), n_jobs=args.threads)
        _write(args.output, sweep_to_csv(summary))
        stem, _ = os.path.splitext(args.output)
        for (gamma, omega), rows in raw.items():
            _write(f"{stem}_gamma{gamma}_omega{omega}.csv", rows_to_csv(rows))
    else:
        _write(args.output, rows_to_csv(run_experiment(cfg, n_jobs=args.threads)))
    return EXIT_OK


def cmd_stability(args):
    _require(args, "seed", "output")
    data = _read_data(args.input)
    doc = _load_json(args.config)
    cfg = _cam_config(args)
    try:
        scfg = StabilityConfig(**doc.get("stability", {}))
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None
    counts = stability_counts(data, cfg, scfg, np.random.default_rng(args.seed), n_jobs=args.threads)
    selected = sorted(e for e, c in counts.items() if c >= scfg.threshold)
    out = {
        "selected": [list(e) for e in selected],
        "counts": [[k, j, c] for (k, j), c in sorted(counts.items())],
        "stability": scfg.__dict__,
        "seed": args.seed,
    }
    _write(args.output, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "pns": cmd_pns,
    "incedge": cmd_incedge,
    "prune": cmd_prune,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "stability": cmd_stability,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input")
    common.add_argument("--output")
    common.add_argument("--config")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--no-pns", action="store_true")
    common.add_argument("--alpha", type=float)
    common.add_argument("--basis", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="camdag", description="Causal additive model structure learning")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="simulate a random additive SEM")
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("--n", type=int, default=200)
    sub.add_parser("pns", parents=[common], help="preliminary neighborhood selection")
    inc = sub.add_parser("incedge", parents=[common], help="greedy order search")
    inc.add_argument("--neighborhoods", help="JSON written by 'pns'")
    pr = sub.add_parser("prune", parents=[common], help="prune a DAG by significance testing")
    pr.add_argument("--dag", help="DAG to prune (JSON or edge list)")
    sub.add_parser("fit", parents=[common], help="run the full pipeline")
    ev = sub.add_parser("eval", parents=[common], help="SHD and SID between two DAGs")
    ev.add_argument("true_dag")
    ev.add_argument("est_dag")
    ev.add_argument("--nodes", type=int, help="node count for edge-list inputs")
    sub.add_parser("bench", parents=[common], help="replicated simulation experiment")
    sub.add_parser("stability", parents=[common], help="stability selection over subsamples")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (InputError, InvalidData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CamError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
