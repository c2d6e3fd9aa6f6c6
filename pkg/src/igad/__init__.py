"""Anomaly detection on attributed graphs with missing features and edges.

Nodes are embedded into a latent space aligned (by debiased entropic optimal
transport) with a radius-truncated Gaussian ball; the anomaly score of a node
is its latent norm. Missing features are filled by a learned imputer, missing
structure by personalized-PageRank diffusion, and a pseudo-anomaly stage
sharpens the boundary of the normal region.
"""
from .errors import DataError, IgadError, NumericalError, UsageError
from .experiment import (ABLATION_VARIANTS, ReportTable, RunRecord,
                         gradcheck_pretrain, run_experiment, run_once,
                         sweep_variants)
from .graphs import (AttributedGraph, DatasetManifest, IncompleteGraph,
                     InjectionSpec, apply_masks, inject_anomalies, load_bundle,
                     load_graph, make_masks, read_manifest, save_bundle,
                     save_graph)
from .metrics import auroc, read_scores, write_scores
from .pipeline import (ModelBundle, TrainConfig, finetune, pretrain,
                       score_nodes)
from .synthdata import BLUEPRINTS, generate, generate_all

__version__ = "0.1.0"

__all__ = [
    "ABLATION_VARIANTS",
    "AttributedGraph",
    "BLUEPRINTS",
    "DataError",
    "DatasetManifest",
    "IgadError",
    "IncompleteGraph",
    "InjectionSpec",
    "ModelBundle",
    "NumericalError",
    "ReportTable",
    "RunRecord",
    "TrainConfig",
    "UsageError",
    "apply_masks",
    "auroc",
    "finetune",
    "generate",
    "generate_all",
    "gradcheck_pretrain",
    "inject_anomalies",
    "load_bundle",
    "load_graph",
    "make_masks",
    "pretrain",
    "read_manifest",
    "read_scores",
    "run_experiment",
    "run_once",
    "save_bundle",
    "save_graph",
    "score_nodes",
    "sweep_variants",
    "write_scores",
]
