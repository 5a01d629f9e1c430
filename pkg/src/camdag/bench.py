"""Replicated experiments, stability selection and edge rankings."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .cam import CamConfig, edge_pvalues, run_cam
from .data import Dataset
from .errors import CamError
from .graph import Dag, shd, sid
from .simulate import child_seed, default_p_conn, simulate

log = logging.getLogger(__name__)

METHODS = ("cam", "empty_baseline", "full_order_baseline")
RESULT_HEADER = ("replicate", "method", "shd", "sid", "wall_seconds", "seed")
SCORE_NOTE = (
    "edge scores are F-test p-values computed on a graph that was itself "
    "estimated from the same data; use them for ranking only"
)


@dataclass(frozen=True)
class ExperimentConfig:
    p: int = 10
    n: int = 200
    replicates: int = 10
    p_conn: float | None = None  # None: 2 / (p - 1)
    function_kind: str = "gp"
    gamma: float = 1.0
    omega: float = 1.0
    cam: CamConfig = field(default_factory=CamConfig)
    methods: tuple = METHODS
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.p < 2:
            raise ValueError("p must be >= 2")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "cam" in doc:
            doc["cam"] = CamConfig.from_dict(doc["cam"])
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        return cls(**doc)


@dataclass(frozen=True)
class ResultRow:
    replicate: int
    method: str
    shd: int | None
    sid: int | None
    wall_seconds: float
    seed: int
    error: str | None = None

    def __post_init__(self):
        if self.error is None and (self.shd < 0 or self.sid < 0):
            raise ValueError("shd and sid must be non-negative")


def _replicate(cfg: ExperimentConfig, r: int, n_jobs: int) -> list[ResultRow]:
    seed = child_seed(cfg.seed, r)
    try:
        spec, data = simulate(
            cfg.p, cfg.n, seed,
            p_conn=cfg.p_conn,
            function_kind=cfg.function_kind,
            noise_gamma=cfg.gamma,
            mixture_omega=cfg.omega,
        )
    except CamError as exc:
        return [ResultRow(r, m, None, None, 0.0, seed, f"simulate: {exc}") for m in cfg.methods]
    truth = spec.dag
    rows = []
    cam_result, cam_error, cam_seconds = None, None, 0.0
    if {"cam", "full_order_baseline"} & set(cfg.methods):
        t0 = time.perf_counter()
        try:
            cam_result = run_cam(data, cfg.cam, n_jobs=n_jobs)
        except CamError as exc:
            cam_error = str(exc)
        cam_seconds = time.perf_counter() - t0
    for method in cfg.methods:
        if method == "empty_baseline":
            t0 = time.perf_counter()
            est = Dag.empty(cfg.p)
            secs = time.perf_counter() - t0
        elif cam_error is not None:
            rows.append(ResultRow(r, method, None, None, cam_seconds, seed, cam_error))
            continue
        elif method == "cam":
            est, secs = cam_result.dag, cam_seconds
        else:
            est = cam_result.unpruned
            secs = cam_seconds - cam_result.timings.get("prune", 0.0)
        rows.append(ResultRow(r, method, shd(truth, est), sid(truth, est), secs, seed))
    return rows


def run_experiment(cfg: ExperimentConfig, *, n_jobs: int = 1) -> list[ResultRow]:
    """Simulate, learn and score every replicate; rows in (replicate, method) order."""
    rows = []
    for r in range(cfg.replicates):
        rows.extend(_replicate(cfg, r, n_jobs))
        log.info("replicate %d/%d done", r + 1, cfg.replicates)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for row in rows:
        w.writerow([
            row.replicate,
            row.method,
            "" if row.shd is None else row.shd,
            "" if row.sid is None else row.sid,
            f"{row.wall_seconds:.6f}",
            row.seed,
        ])
    return buf.getvalue()


def summarize(rows) -> dict:
    """Mean SHD/SID per method over successful rows."""
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        ok = [r for r in rows if r.method == method and r.error is None]
        out[method] = {
            "mean_shd": float(np.mean([r.shd for r in ok])) if ok else float("nan"),
            "mean_sid": float(np.mean([r.sid for r in ok])) if ok else float("nan"),
            "ok": len(ok),
            "failed": sum(1 for r in rows if r.method == method and r.error is not None),
        }
    return out


SWEEP_HEADER = ("gamma", "omega", "method", "mean_shd", "mean_sid", "replicates_ok", "replicates_failed")


def misspecification_sweep(base: ExperimentConfig, gammas, omegas, *, n_jobs: int = 1):
    """Run ``base`` at every (gamma, omega) grid point.

    Returns ``(summary_rows, raw_rows)`` where ``raw_rows`` maps each grid
    point to its per-replicate rows.
    """
    summary, raw = [], {}
    for gamma, omega in itertools.product(gammas, omegas):
        cfg = ExperimentConfig(**{**base.__dict__, "gamma": float(gamma), "omega": float(omega)})
        rows = run_experiment(cfg, n_jobs=n_jobs)
        raw[(gamma, omega)] = rows
        for method, s in summarize(rows).items():
            summary.append((gamma, omega, method, s["mean_shd"], s["mean_sid"], s["ok"], s["failed"]))
    return summary, raw


def sweep_to_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for g, o, m, a, b, ok, bad in summary:
        w.writerow([g, o, m, f"{a:.6f}", f"{b:.6f}", ok, bad])
    return buf.getvalue()


# -- edge ranking and stability selection ------------------------------------


@dataclass(frozen=True)
class RankedEdges:
    edges: list  # (k, j, score), best first
    note: str = SCORE_NOTE

    def to_json(self, names=None) -> str:
        items = []
        for k, j, s in self.edges:
            item = {"from": k, "to": j, "score": s}
            if names is not None:
                item["from_name"], item["to_name"] = names[k], names[j]
            items.append(item)
        return json.dumps({"edges": items, "note": self.note}, sort_keys=True)


def _rank_key(pvalues, gains):
    def key(edge):
        pv = pvalues.get(edge)
        return (1 if pv is None else 0, 1.0 if pv is None else pv, -gains.get(edge, 0.0), edge)
    return key


def top_scoring_edges(data: Dataset, dag: Dag, k: int, *, num_basis: int = 10, gains=None) -> RankedEdges:
    """Edges of ``dag`` ordered by p-value, smallest first; at most ``k``."""
    if k <= 0 or not dag.edges:
        return RankedEdges([])
    pv = edge_pvalues(data, dag, num_basis)
    ordered = sorted(dag.edges, key=_rank_key(pv, gains or {}))
    return RankedEdges([(e[0], e[1], pv.get(e)) for e in ordered[:k]])


@dataclass(frozen=True)
class StabilityConfig:
    subsamples: int = 100
    subsample_size: int = 59
    top_k: int = 20
    threshold: int = 57
    ranking: str = "pvalue"  # or "gain"

    def __post_init__(self):
        if self.threshold > self.subsamples + 1:
            raise ValueError("threshold cannot exceed subsamples + 1")
        if self.ranking not in ("pvalue", "gain"):
            raise ValueError("ranking must be 'pvalue' or 'gain'")


def stability_counts(data: Dataset, cfg: CamConfig, scfg: StabilityConfig, rng, *, n_jobs: int = 1) -> Counter:
    """How often each edge lands in a subsample's top-k list."""
    if scfg.subsample_size > data.n:
        raise ValueError(f"subsample_size {scfg.subsample_size} exceeds n={data.n}")
    counts: Counter = Counter()
    for b in range(scfg.subsamples):
        rows = np.sort(rng.choice(data.n, size=scfg.subsample_size, replace=False))
        sub = data.subsample(rows)
        try:
            res = run_cam(sub, cfg, n_jobs=n_jobs)
            gains = res.search.gains
            if scfg.ranking == "gain":
                ordered = sorted(res.dag.edges, key=lambda e: (-gains.get(e, 0.0), e))
                top = ordered[: scfg.top_k]
            else:
                top = [(k, j) for k, j, _ in top_scoring_edges(sub, res.dag, scfg.top_k, num_basis=cfg.num_basis, gains=gains).edges]
        except CamError as exc:
            log.warning("subsample %d failed: %s", b, exc)
            top = []
        counts.update(top)
    return counts


def stability_selection(data: Dataset, cfg: CamConfig, scfg: StabilityConfig, rng, *, n_jobs: int = 1) -> set:
    counts = stability_counts(data, cfg, scfg, rng, n_jobs=n_jobs)
    return {e for e, c in counts.items() if c >= scfg.threshold}
