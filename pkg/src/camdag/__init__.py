"""Structure learning for causal additive models."""

__version__ = "0.1.0"

from .data import Dataset, read_csv, write_csv
from .graph import Dag, Ordering, full_dag_of_order, shd, sid, topological_orders_contains
from .cam import CamConfig, brute_force_order, cam_pipeline, inc_edge, neg_log_lik_score, pns, prune

__all__ = [
    "CamConfig",
    "Dag",
    "Dataset",
    "Ordering",
    "brute_force_order",
    "cam_pipeline",
    "full_dag_of_order",
    "inc_edge",
    "neg_log_lik_score",
    "pns",
    "prune",
    "read_csv",
    "shd",
    "sid",
    "topological_orders_contains",
    "write_csv",
]
