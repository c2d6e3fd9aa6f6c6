"""Seeded synthetic benchmark graphs with fixed shape statistics.

Each blueprint pins node/edge/attribute/outlier counts so experiments and
regression baselines are comparable across machines without shipping data
files. Graphs are community-structured: a path backbone inside every
community plus single bridges between consecutive communities keeps them
connected, and the remaining edge budget is drawn with an intra-community
bias. Labeled blueprints get their anomalies planted at generation time
through the same clique/feature-swap protocol used for runtime injection;
the base edge budget is adjusted until the post-injection count matches the
blueprint exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .errors import DataError, UsageError
from .graphs import AttributedGraph, InjectionSpec, inject_anomalies, save_graph


@dataclass(frozen=True)
class Blueprint:
    name: str
    tag: int                      # stable stream tag; part of determinism
    nodes: int
    edges: int
    attributes: int
    communities: int
    feature_style: str            # "binary" bag-of-words | "dense" gaussian
    injection: InjectionSpec | None = None

    @property
    def outliers(self) -> int | None:
        return self.injection.total if self.injection is not None else None


BLUEPRINTS: dict[str, Blueprint] = {bp.name: bp for bp in (
    Blueprint("cora", 1, nodes=2708, edges=5803, attributes=1433,
              communities=7, feature_style="binary"),
    Blueprint("citeseer", 2, nodes=3327, edges=5137, attributes=3703,
              communities=6, feature_style="binary"),
    Blueprint("books", 3, nodes=1418, edges=1847, attributes=21,
              communities=8, feature_style="dense",
              injection=InjectionSpec(clique_size=7, clique_count=2,
                                      contextual_count=14, candidate_pool=30)),
    Blueprint("disney", 4, nodes=124, edges=167, attributes=28,
              communities=5, feature_style="dense",
              injection=InjectionSpec(clique_size=3, clique_count=1,
                                      contextual_count=3, candidate_pool=15)),
)}


def _sample_edges(r: np.random.Generator, comm: np.ndarray, target: int,
                  intra: float = 0.85) -> np.ndarray:
    """Connected community graph with exactly `target` unique edges."""
    n = comm.size
    k = int(comm.max()) + 1
    groups = [np.flatnonzero(comm == c) for c in range(k)]
    seen: set[tuple[int, int]] = set()
    rows: list[tuple[int, int]] = []

    def push(u: int, v: int) -> None:
        if u == v:
            return
        key = (u, v) if u < v else (v, u)
        if key not in seen:
            seen.add(key)
            rows.append(key)

    for g in groups:                            # intra-community backbone
        order = r.permutation(g)
        for a, b in zip(order[:-1], order[1:]):
            push(int(a), int(b))
    for c in range(k - 1):                      # bridges keep it connected
        push(int(groups[c][0]), int(groups[c + 1][0]))
    if len(rows) > target:
        raise DataError(f"edge budget {target} below backbone size {len(rows)}")

    while len(rows) < target:
        if r.random() < intra:
            g = groups[int(r.integers(k))]
            u, v = r.integers(g.size, size=2)
            push(int(g[u]), int(g[v]))
        else:
            u, v = r.integers(n, size=2)
            push(int(u), int(v))
    return np.array(rows, dtype=np.int64)


def _binary_features(r: np.random.Generator, comm: np.ndarray,
                     d: int) -> np.ndarray:
    """Bag-of-words rows: mostly community-topic terms, some global noise.

    Document lengths follow a clipped lognormal — most rows carry 10-25
    active terms but a heavy tail reaches severalfold that, matching the
    skewed length distributions of real text corpora.
    """
    n = comm.size
    k = int(comm.max()) + 1
    topic_size = max(6, d // (2 * k))
    topics = [r.choice(d, size=topic_size, replace=False) for _ in range(k)]
    X = np.zeros((n, d), dtype=np.float64)
    cap = max(12, min(150, d // 4))
    for i in range(n):
        active = 6 + int(r.lognormal(2.2, 0.9))
        active = min(active, cap)
        on_topic = int(round(active * 0.8))
        X[i, r.choice(topics[comm[i]], size=on_topic)] = 1.0
        X[i, r.choice(d, size=active - on_topic)] = 1.0
    return X


def _dense_features(r: np.random.Generator, comm: np.ndarray,
                    d: int) -> np.ndarray:
    """Gaussian rows around a per-community prototype."""
    k = int(comm.max()) + 1
    protos = 2.0 * r.normal(0.0, 1.0, size=(k, d))
    return protos[comm] + r.normal(0.0, 0.6, size=(comm.size, d))


def _build_clean(bp: Blueprint, seed: int, edge_target: int,
                 attempt: int) -> AttributedGraph:
    r = rng_mod.stream(seed, rng_mod.SYNTH, bp.tag, attempt)
    comm = r.permutation(np.arange(bp.nodes) % bp.communities)
    edges = _sample_edges(r, comm, edge_target)
    if bp.feature_style == "binary":
        X = _binary_features(r, comm, bp.attributes)
    elif bp.feature_style == "dense":
        X = _dense_features(r, comm, bp.attributes)
    else:
        raise UsageError(f"unknown feature style {bp.feature_style!r}")
    return AttributedGraph.build(X, edges)


def generate(name: str, seed: int = 0) -> AttributedGraph:
    """Build the named blueprint; labeled ones arrive with anomalies planted."""
    if name not in BLUEPRINTS:
        raise UsageError(
            f"unknown dataset {name!r}; choose from {sorted(BLUEPRINTS)}")
    bp = BLUEPRINTS[name]
    if bp.injection is None:
        return _build_clean(bp, seed, bp.edges, attempt=0)

    spec = bp.injection
    clique_edges = spec.clique_count * spec.clique_size * (spec.clique_size - 1) // 2
    guess = bp.edges - clique_edges
    for attempt in range(24):
        base = _build_clean(bp, seed, guess, attempt)
        g = inject_anomalies(base, spec, seed=seed + attempt)
        delta = g.num_edges - bp.edges
        if delta == 0:
            return g
        guess -= delta                        # collisions shrink the clique add
    raise DataError(
        f"could not hit {bp.edges} edges for {name!r} after 24 attempts")


def generate_all(out_root: str | Path, seed: int = 0,
                 names: tuple[str, ...] | None = None) -> list[Path]:
    """Write every (or the named) blueprint dataset under out_root/<name>/."""
    out_root = Path(out_root)
    paths = []
    for name in names if names is not None else sorted(BLUEPRINTS):
        g = generate(name, seed=seed)
        paths.append(save_graph(out_root / name, g, name))
    return paths
