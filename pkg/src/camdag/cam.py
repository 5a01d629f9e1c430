"""Causal additive model search: neighborhood screening, greedy edge
addition and significance-based pruning.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import CamError, DegenerateColumn, ExplicitRefusal, SingularFit, StageError
from .graph import Dag, EdgeCandidateMask, Ordering, full_dag_of_order
from .numerics import AdditiveDesign, BoostLearners, boost_select, fit_additive, term_significance

log = logging.getLogger(__name__)

PNS_STEP = 0.1
MAX_NODES_WITHOUT_PNS = 30
BRUTE_FORCE_MAX_P = 6


@dataclass(frozen=True)
class CamConfig:
    num_basis: int = 10
    prune_alpha: float = 0.001
    pns_iterations: int = 100
    pns_top: int = 10
    pns_min_picks: int = 3
    use_pns: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.prune_alpha < 1:
            raise ValueError("prune_alpha must lie in (0, 1)")
        if self.pns_top < 1 or self.pns_min_picks < 1:
            raise ValueError("pns_top and pns_min_picks must be >= 1")
        if self.num_basis < 4:
            raise ValueError("num_basis must be >= 4")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "CamConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown CamConfig fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "CamConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Neighborhoods:
    """Candidate parent sets, one per node."""

    sets: tuple
    max_size: int

    def __post_init__(self):
        sets = tuple(frozenset(s) for s in self.sets)
        for j, s in enumerate(sets):
            if j in s:
                raise ValueError(f"node {j} is in its own neighborhood")
            if len(s) > self.max_size:
                raise ValueError(f"neighborhood of {j} exceeds max_size={self.max_size}")
        object.__setattr__(self, "sets", sets)

    def mask(self) -> np.ndarray:
        p = len(self.sets)
        m = np.zeros((p, p), dtype=bool)
        for j, s in enumerate(self.sets):
            for k in s:
                m[k, j] = True
        return m


def _pmap(fn, items, n_jobs: int):
    """Order-preserving map, threaded when ``n_jobs > 1``."""
    items = list(items)
    if n_jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


# -- score -----------------------------------------------------------------


def neg_log_lik_score(data: Dataset, dag: Dag, num_basis: int = 10, *, design=None) -> float:
    """Sum over nodes of log residual standard deviation given the parents."""
    if dag.p != data.p:
        raise ValueError(f"dag has p={dag.p}, data has p={data.p}")
    design = design or AdditiveDesign.build(data, num_basis)
    total = 0.0
    for j, pa in enumerate(dag.parent_sets()):
        try:
            fit = fit_additive(None, data, pa, num_basis, design=design, target=j, penalized=False)
        except SingularFit as exc:
            raise SingularFit(f"node {j}: {exc}", node=j) from exc
        total += 0.5 * math.log(fit.sigma2_hat)
    return total


# -- PNS -------------------------------------------------------------------


def pns(data: Dataset, cfg: CamConfig, *, n_jobs: int = 1, design=None) -> Neighborhoods:
    """Screen candidate parents of every node with componentwise boosting."""
    p = data.p
    if p < 2:
        raise ValueError("neighborhood selection needs p >= 2")
    design = design or AdditiveDesign.build(data, cfg.num_basis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        learners = BoostLearners(design)

    def one(j):
        if design.blocks[j] is None and np.ptp(data.column(j)) == 0:
            warnings.warn(f"column {j} is constant; empty neighborhood")
            return frozenset()
        cands = [k for k in range(p) if k != j]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = boost_select(data.column(j), data, cands, cfg.pns_iterations, PNS_STEP, learners=learners)
        picked = [(c, k) for k, c in trace.selection_counts.items() if c >= cfg.pns_min_picks]
        picked.sort(key=lambda t: (-t[0], t[1]))
        return frozenset(k for _, k in picked[: cfg.pns_top])

    return Neighborhoods(tuple(_pmap(one, range(p), n_jobs)), cfg.pns_top)


# -- IncEdge ---------------------------------------------------------------


@dataclass
class SearchResult:
    dag: Dag
    trajectory: list  # score after 0, 1, 2, ... additions
    added: list  # (k, j, gain) in order of addition
    gains: dict = field(default_factory=dict)


def greedy_search(
    data: Dataset,
    nbhd: Neighborhoods | None,
    cfg: CamConfig,
    *,
    n_jobs: int = 1,
    design=None,
    max_p: int = MAX_NODES_WITHOUT_PNS,
) -> SearchResult:
    """Greedy edge addition maximizing the decrease of sum_j log sigma_j."""
    p = data.p
    if nbhd is None and p > max_p:
        raise ExplicitRefusal(f"p={p} exceeds {max_p} without neighborhood selection")
    design = design or AdditiveDesign.build(data, cfg.num_basis)
    restrict = nbhd.mask() if nbhd is not None else None
    mask = EdgeCandidateMask(p, restrict)
    for k in range(p):
        if design.blocks[k] is None:
            mask.allowed[k, :] = False

    parents: list[list[int]] = [[] for _ in range(p)]
    s2 = np.array([fit_additive(None, data, [], cfg.num_basis, design=design, target=j, penalized=False).sigma2_hat for j in range(p)])
    # candidate sigma^2 after adding k -> j
    cand_s2 = np.full((p, p), np.nan)

    def column_entries(j):
        out = []
        for k in np.flatnonzero(mask.allowed[:, j]):
            try:
                fit = fit_additive(
                    None, data, parents[j] + [int(k)], cfg.num_basis, design=design, target=j, penalized=False
                )
                # the current fit with a zero block is admissible for the larger set
                out.append((int(k), min(fit.sigma2_hat, s2[j])))
            except (SingularFit, DegenerateColumn):
                out.append((int(k), None))
        return out

    def refresh(cols):
        for j, entries in zip(cols, _pmap(column_entries, cols, n_jobs)):
            cand_s2[:, j] = np.nan
            for k, v in entries:
                if v is None:
                    mask.disable(k, j)
                else:
                    cand_s2[k, j] = v

    def score():
        return float(0.5 * np.log(s2).sum())

    refresh(range(p))
    trajectory = [score()]
    added = []
    while True:
        with np.errstate(invalid="ignore", divide="ignore"):
            gain = 0.5 * (np.log(s2)[None, :] - np.log(cand_s2))
        gain = np.where(mask.allowed & np.isfinite(gain), gain, -np.inf)
        if not np.isfinite(gain).any():
            break
        flat = int(np.argmax(gain))  # row-major: lowest (k, j) wins ties
        k, j = divmod(flat, p)
        mask.add_edge(k, j)
        parents[j] = sorted(parents[j] + [k])
        s2[j] = cand_s2[k, j]
        added.append((k, j, float(gain[k, j])))
        trajectory.append(score())
        if trajectory[-1] > trajectory[-2] + 1e-10:
            raise AssertionError("greedy score increased")
        refresh([j])

    dag = Dag(p, frozenset((k, j) for k, j, _ in added), data.names)
    return SearchResult(dag, trajectory, added, {(k, j): g for k, j, g in added})


def inc_edge(data: Dataset, nbhd: Neighborhoods | None, cfg: CamConfig, **kwargs) -> Dag:
    return greedy_search(data, nbhd, cfg, **kwargs).dag


# -- Prune -----------------------------------------------------------------


def edge_pvalues(data: Dataset, dag: Dag, num_basis: int = 10, *, design=None, n_jobs: int = 1) -> dict:
    """F-test p-value of every edge given the other parents of its head.

    Edges whose test fails numerically map to ``None``.
    """
    design = design or AdditiveDesign.build(data, num_basis)

    def node(j_pa):
        j, pa = j_pa
        if not pa:
            return {}
        try:
            fit = fit_additive(None, data, pa, num_basis, design=design, target=j)
        except (SingularFit, DegenerateColumn) as exc:
            warnings.warn(f"node {j}: {exc}; keeping all parents")
            return {(k, j): None for k in pa}
        out = {}
        for k in pa:
            try:
                out[(k, j)] = term_significance(fit, data, None, k)
            except SingularFit as exc:
                warnings.warn(f"edge {k}->{j}: {exc}; keeping it")
                out[(k, j)] = None
        return out

    result = {}
    for part in _pmap(node, enumerate(dag.parent_sets()), n_jobs):
        result.update(part)
    return result


def prune(data: Dataset, dag: Dag, cfg: CamConfig, *, design=None, n_jobs: int = 1) -> Dag:
    """Keep only parents whose term is significant at ``cfg.prune_alpha``."""
    pv = edge_pvalues(data, dag, cfg.num_basis, design=design, n_jobs=n_jobs)
    kept = {e for e, v in pv.items() if v is None or v <= cfg.prune_alpha}
    return dag.with_edges(kept)


# -- pipeline --------------------------------------------------------------


@dataclass
class CamResult:
    dag: Dag
    unpruned: Dag
    neighborhoods: Neighborhoods | None
    search: SearchResult
    timings: dict


def run_cam(data: Dataset, cfg: CamConfig, *, n_jobs: int = 1) -> CamResult:
    """PNS (optional), IncEdge and Prune with per-stage error labels."""
    timings = {}
    t0 = time.perf_counter()
    try:
        design = AdditiveDesign.build(data, cfg.num_basis)
    except CamError as exc:
        raise StageError("design", exc) from exc
    nbhd = None
    if cfg.use_pns:
        try:
            nbhd = pns(data, cfg, n_jobs=n_jobs, design=design)
        except CamError as exc:
            raise StageError("pns", exc) from exc
    timings["pns"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    try:
        search = greedy_search(data, nbhd, cfg, n_jobs=n_jobs, design=design)
    except CamError as exc:
        raise StageError("incedge", exc) from exc
    timings["incedge"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    try:
        pruned = prune(data, search.dag, cfg, design=design, n_jobs=n_jobs)
    except CamError as exc:
        raise StageError("prune", exc) from exc
    timings["prune"] = time.perf_counter() - t0
    log.debug("cam stages: %s", timings)
    return CamResult(pruned, search.dag, nbhd, search, timings)


def cam_pipeline(data: Dataset, cfg: CamConfig, *, n_jobs: int = 1) -> Dag:
    return run_cam(data, cfg, n_jobs=n_jobs).dag


# -- exhaustive oracle -----------------------------------------------------


def brute_force_order(data: Dataset, num_basis: int = 10) -> Ordering:
    """Permutation minimizing the score of its fully connected DAG."""
    p = data.p
    if p > BRUTE_FORCE_MAX_P:
        raise ExplicitRefusal(f"refusing to enumerate {p}! permutations (max p={BRUTE_FORCE_MAX_P})")
    if p <= 1:
        return Ordering(tuple(range(p)))
    design = AdditiveDesign.build(data, num_basis)
    cache: dict = {}

    def node_score(j, preds):
        key = (j, preds)
        if key not in cache:
            fit = fit_additive(None, data, sorted(preds), num_basis, design=design, target=j, penalized=False)
            cache[key] = 0.5 * math.log(fit.sigma2_hat)
        return cache[key]

    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(p)):  # lexicographic
        s = sum(node_score(v, frozenset(perm[:i])) for i, v in enumerate(perm))
        if s < best:
            best, best_perm = s, perm
    return Ordering(best_perm)


def order_score(data: Dataset, ord_, num_basis: int = 10) -> float:
    return neg_log_lik_score(data, full_dag_of_order(ord_), num_basis)
