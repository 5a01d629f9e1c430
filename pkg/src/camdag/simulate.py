"""Random DAGs and additive structural equation models.

Gaussian-process edge functions are realized pathwise: the function values
are drawn jointly at the parent values that actually occur in the sample.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import Dataset
from .errors import SimulationError
from .graph import Dag

GP_JITTER = 1e-8
JITTER_RETRIES = 3


def child_seed(seed: int, index: int) -> int:
    """Seed for replicate ``index`` derived from a master ``seed``.

    Uses ``numpy.random.SeedSequence([seed, index])`` and takes its first
    32-bit state word; stable across platforms and numpy versions.
    """
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class FunctionSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("gaussian_process", "sigmoid", "linear"):
            raise ValueError(f"unknown function kind {self.kind!r}")
        if self.kind == "gaussian_process" and self.params.get("bandwidth", 1.0) <= 0:
            raise ValueError("GP bandwidth must be positive")
        if self.kind == "sigmoid" and self.params["b"] == 0:
            raise ValueError("sigmoid b must be non-zero")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sigmoid":
            a, b, c = self.params["a"], self.params["b"], self.params["c"]
            u = b * (x + c)
            return a * u / (1.0 + np.abs(u))
        if self.kind == "linear":
            return self.params["slope"] * x
        raise TypeError("GP functions are realized by simulate_data, not evaluated directly")


def gp(bandwidth: float = 1.0) -> FunctionSpec:
    return FunctionSpec("gaussian_process", {"bandwidth": bandwidth})


@dataclass(frozen=True)
class SemSpec:
    dag: Dag
    edge_functions: dict  # (k, j) -> FunctionSpec
    noise_sd: tuple
    source_sd: dict  # source node -> sd
    noise_gamma: float = 1.0
    mixture_omega: float = 1.0
    joint_functions: dict | None = None  # j -> FunctionSpec over all parents

    def __post_init__(self):
        if any(s <= 0 for s in self.noise_sd) or any(s <= 0 for s in self.source_sd.values()):
            raise ValueError("noise standard deviations must be positive")
        if len(self.noise_sd) != self.dag.p:
            raise ValueError("noise_sd needs one entry per node")
        if not 0.0 <= self.mixture_omega <= 1.0:
            raise ValueError("mixture_omega must lie in [0, 1]")
        missing = set(self.dag.edges) - set(self.edge_functions)
        if missing:
            raise ValueError(f"edges without a function: {sorted(missing)}")
        pa = self.dag.parent_sets()
        for j in range(self.dag.p):
            if not pa[j] and j not in self.source_sd:
                raise ValueError(f"source node {j} has no source_sd")

    def node_sd(self, j: int) -> float:
        return self.source_sd.get(j, self.noise_sd[j])

    def to_json(self) -> str:
        doc = {
            "p": self.dag.p,
            "edges": [list(e) for e in self.dag.sorted_edges()],
            "edge_functions": [
                {"edge": list(e), "kind": f.kind, "params": f.params}
                for e, f in sorted(self.edge_functions.items())
            ],
            "noise_sd": list(self.noise_sd),
            "source_sd": {str(k): v for k, v in sorted(self.source_sd.items())},
            "noise_gamma": self.noise_gamma,
            "mixture_omega": self.mixture_omega,
            "joint_functions": None if self.joint_functions is None else {
                str(j): {"kind": f.kind, "params": f.params} for j, f in sorted(self.joint_functions.items())
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SemSpec":
        doc = json.loads(text)
        joint = doc.get("joint_functions")
        return cls(
            dag=Dag(doc["p"], frozenset(tuple(e) for e in doc["edges"])),
            edge_functions={tuple(d["edge"]): FunctionSpec(d["kind"], d["params"]) for d in doc["edge_functions"]},
            noise_sd=tuple(doc["noise_sd"]),
            source_sd={int(k): v for k, v in doc["source_sd"].items()},
            noise_gamma=doc.get("noise_gamma", 1.0),
            mixture_omega=doc.get("mixture_omega", 1.0),
            joint_functions=None if joint is None else {
                int(j): FunctionSpec(d["kind"], d["params"]) for j, d in joint.items()
            },
        )


def random_dag(p: int, p_conn: float, rng) -> Dag:
    """Random order, then each forward pair is an edge with probability ``p_conn``."""
    if not 0.0 <= p_conn <= 1.0:
        raise ValueError("p_conn must lie in [0, 1]")
    perm = rng.permutation(p)
    hits = rng.random((p, p)) < p_conn
    edges = {
        (int(perm[a]), int(perm[b]))
        for a in range(p)
        for b in range(a + 1, p)
        if hits[a, b]
    }
    return Dag(p, frozenset(edges))


def default_p_conn(p: int) -> float:
    """Connection probability giving ``p`` expected edges."""
    return min(1.0, 2.0 / (p - 1)) if p > 1 else 0.0


def sample_sigmoid(rng) -> FunctionSpec:
    a = rng.exponential(1.0 / 4.0) + 1.0  # Exp with rate 4
    b = rng.uniform(0.5, 2.0) * (1.0 if rng.random() < 0.5 else -1.0)
    c = rng.uniform(-2.0, 2.0)
    return FunctionSpec("sigmoid", {"a": float(a), "b": float(b), "c": float(c)})


def make_sem(
    dag: Dag,
    rng,
    function_kind: str = "gp",
    noise_gamma: float = 1.0,
    mixture_omega: float = 1.0,
) -> SemSpec:
    """Draw functions and noise scales for ``dag``.

    Non-source noise sd ~ U[1/5, sqrt(2)/5]; source sd ~ U[1, sqrt(2)].
    """
    if function_kind in ("gp", "gaussian_process"):
        funcs = {e: gp() for e in dag.sorted_edges()}
    elif function_kind == "sigmoid":
        funcs = {e: sample_sigmoid(rng) for e in dag.sorted_edges()}
    else:
        raise ValueError(f"unknown function kind {function_kind!r}")
    noise_sd = tuple(float(v) for v in rng.uniform(1 / 5, np.sqrt(2) / 5, dag.p))
    pa = dag.parent_sets()
    source_sd = {}
    for j in range(dag.p):
        if not pa[j]:
            source_sd[j] = float(rng.uniform(1.0, np.sqrt(2)))
    joint = None
    if mixture_omega < 1.0:
        joint = {j: gp() for j in range(dag.p) if pa[j]}
    return SemSpec(dag, funcs, noise_sd, source_sd, noise_gamma, mixture_omega, joint)


def rbf_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float = 1.0) -> np.ndarray:
    a = np.atleast_2d(a.T).T
    b = np.atleast_2d(b.T).T
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-sq / (2.0 * bandwidth**2))


def draw_gp(x, rng, bandwidth: float = 1.0) -> np.ndarray:
    """Centered GP sample path evaluated at the rows of ``x``.

    Duplicate inputs receive identical values.
    """
    x = np.asarray(x, dtype=float)
    x2 = x.reshape(len(x), -1)
    uniq, inverse = np.unique(x2, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    k = rbf_kernel(uniq, uniq, bandwidth)
    z = rng.standard_normal(len(uniq))
    jitter = GP_JITTER
    for _ in range(JITTER_RETRIES + 1):
        try:
            chol = linalg.cholesky(k + jitter * np.eye(len(uniq)), lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 10.0
    else:
        raise SimulationError(f"GP covariance not factorizable with jitter up to {jitter / 10:g}")
    values = (chol @ z)[inverse]
    return values - values.mean()


def transform_noise(noise: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 1.0:
        return noise
    return np.sign(noise) * np.abs(noise) ** gamma


def simulate_data(spec: SemSpec, n: int, rng) -> Dataset:
    """Ancestral sampling of ``n`` observations from ``spec``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    dag = spec.dag
    x = np.zeros((n, dag.p))
    pa = dag.parent_sets()
    omega = spec.mixture_omega
    for j in dag.topological_order():
        noise = transform_noise(rng.normal(0.0, spec.node_sd(j), n), spec.noise_gamma)
        if not pa[j]:
            x[:, j] = noise
            continue
        additive = np.zeros(n)
        for k in pa[j]:
            f = spec.edge_functions[(k, j)]
            if f.kind == "gaussian_process":
                additive += draw_gp(x[:, k], rng, f.params.get("bandwidth", 1.0))
            else:
                additive += f(x[:, k])
        signal = additive
        if omega < 1.0:
            fj = spec.joint_functions[j]
            joint = draw_gp(x[:, pa[j]], rng, fj.params.get("bandwidth", 1.0))
            signal = omega * additive + (1.0 - omega) * joint
        x[:, j] = signal + noise
    return Dataset(x, tuple(f"X{k}" for k in range(dag.p)))


def simulate(
    p: int,
    n: int,
    seed: int,
    *,
    p_conn: float | None = None,
    function_kind: str = "gp",
    noise_gamma: float = 1.0,
    mixture_omega: float = 1.0,
):
    """Draw a random DAG, its SEM and a dataset from one seed."""
    rng = np.random.default_rng(seed)
    dag = random_dag(p, default_p_conn(p) if p_conn is None else p_conn, rng)
    spec = make_sem(dag, rng, function_kind, noise_gamma, mixture_omega)
    return spec, simulate_data(spec, n, rng)
