"""Attributed graphs, anomaly injection, observation masks, and disk formats.

Edge lists are kept canonical everywhere: undirected edges stored once as
(u, v) with u < v, lexicographically sorted, no duplicates, no self loops.
Feature files are plain text (one node per line, %.17g values) so float64
round-trips exactly; the same holds for bundle directories, which is what
makes bit-identical reruns checkable at the file level.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .errors import DataError, UsageError

log = logging.getLogger("igad.graphs")

BUNDLE_VERSION = 1
_FLOAT_FMT = "%.17g"


def canonicalize_edges(edges: np.ndarray, n: int) -> tuple[np.ndarray, int, int]:
    """Return (canonical edges, dropped self loops, dropped duplicates)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise DataError(f"edge endpoint out of range [0, {n})")
    self_loops = int((e[:, 0] == e[:, 1]).sum())
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if len(e):
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        keep = np.ones(len(e), dtype=bool)
        keep[1:] = (e[1:] != e[:-1]).any(axis=1)
        dups = int((~keep).sum())
        e = e[keep]
    else:
        dups = 0
    return np.ascontiguousarray(e), self_loops, dups


@dataclass(frozen=True)
class AttributedGraph:
    """Dense node features plus a canonical undirected edge list."""

    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = self.features
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError(f"features must be (n, d) with n >= 1, got {X.shape}")
        if not np.isfinite(X).all():
            raise DataError("non-finite feature values")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise DataError(f"edges must be (E, 2), got {e.shape}")
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise DataError("edge endpoint out of range")
            if (e[:, 0] >= e[:, 1]).any():
                raise DataError("edges must be canonical (u < v)")
            order = np.lexsort((e[:, 1], e[:, 0]))
            if not np.array_equal(order, np.arange(len(e))):
                raise DataError("edges must be lexicographically sorted")
            if (np.diff(e, axis=0) == 0).all(axis=1).any():
                raise DataError("duplicate edges")
        if self.labels is not None:
            y = self.labels
            if y.shape != (self.n,):
                raise DataError(f"labels must be ({self.n},), got {y.shape}")
            if not np.isin(y, (0, 1)).all():
                raise DataError("labels must be 0/1")

    @classmethod
    def build(cls, features, edges, labels=None) -> "AttributedGraph":
        """Construct from raw inputs, cleaning the edge list with a warning."""
        X = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
        canon, loops, dups = canonicalize_edges(np.asarray(edges), X.shape[0])
        if loops or dups:
            log.warning("dropped %d self loops and %d duplicate edges", loops, dups)
        y = None if labels is None else np.asarray(labels, dtype=np.int8).ravel()
        return cls(features=X, edges=canon, labels=y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency with a zero diagonal."""
        A = np.zeros((self.n, self.n))
        if len(self.edges):
            u, v = self.edges[:, 0], self.edges[:, 1]
            A[u, v] = 1.0
            A[v, u] = 1.0
        return A

    def source_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.edges, dtype="<i8").tobytes())
        if self.labels is None:
            h.update(b"unlabeled")
        else:
            h.update(np.ascontiguousarray(self.labels, dtype="<i1").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class InjectionSpec:
    """Synthetic anomaly plan: dense cliques plus far-feature swaps."""

    clique_size: int = 15
    clique_count: int = 5
    contextual_count: int = 75
    candidate_pool: int = 50

    def __post_init__(self) -> None:
        if self.clique_size < 2 and self.clique_count > 0:
            raise UsageError("clique_size must be >= 2 when cliques are requested")
        if min(self.clique_count, self.contextual_count, self.candidate_pool) < 0:
            raise UsageError("injection counts must be non-negative")

    @property
    def total(self) -> int:
        return self.clique_size * self.clique_count + self.contextual_count


def inject_anomalies(g: AttributedGraph, spec: InjectionSpec,
                     seed: int) -> AttributedGraph:
    """Label a clean graph with planted structural and contextual anomalies.

    Structural: `clique_count` disjoint groups of `clique_size` nodes are
    fully interconnected. Contextual: each target's feature row is replaced
    by the most Euclidean-distant row among `candidate_pool` uniformly drawn
    other nodes (distances measured on the original features; ties break to
    the earliest candidate drawn). All targets are disjoint and labeled 1.
    """
    if g.labels is not None:
        raise DataError("graph already carries labels; refusing to re-inject")
    if spec.total > g.n:
        raise DataError(
            f"injection needs {spec.total} distinct nodes but the graph has {g.n}")
    if spec.contextual_count > 0 and spec.candidate_pool > g.n - 1:
        raise DataError("candidate_pool larger than the number of other nodes")

    r = rng_mod.stream(seed, rng_mod.INJECT)
    targets = r.choice(g.n, size=spec.total, replace=False)
    structural = targets[:spec.clique_size * spec.clique_count]
    contextual = targets[spec.clique_size * spec.clique_count:]

    new_edges = [g.edges]
    for c in range(spec.clique_count):
        group = structural[c * spec.clique_size:(c + 1) * spec.clique_size]
        gi, gj = np.triu_indices(spec.clique_size, k=1)
        new_edges.append(np.stack([group[gi], group[gj]], axis=1))
    edges = np.concatenate(new_edges, axis=0)

    X = g.features.copy()
    original = g.features
    for i in contextual:
        others = np.delete(np.arange(g.n), i)
        cand = r.choice(others, size=spec.candidate_pool, replace=False)
        dists = np.linalg.norm(original[cand] - original[i], axis=1)
        X[i] = original[cand[int(np.argmax(dists))]]

    labels = np.zeros(g.n, dtype=np.int8)
    labels[targets] = 1
    return AttributedGraph.build(X, edges, labels)


@dataclass(frozen=True)
class ObservationMask:
    """What the model is allowed to see: feature mask plus hidden edges."""

    feature_mask: np.ndarray  # (n, d) float 0/1
    hidden_edges: np.ndarray  # (K, 2) canonical
    mode: str
    node_rate: float
    edge_rate: float
    seed: int

    def __post_init__(self) -> None:
        m = self.feature_mask
        if m.ndim != 2 or not np.isin(m, (0.0, 1.0)).all():
            raise DataError("feature mask must be a 0/1 matrix")
        if self.mode not in ("row", "element"):
            raise DataError(f"unknown mask mode {self.mode!r}")


def make_masks(g: AttributedGraph, node_rate: float, edge_rate: float,
               mode: str = "row", seed: int = 0) -> ObservationMask:
    """Draw a deterministic observation pattern for a graph.

    Row mode hides floor(node_rate * n) whole feature rows; element mode
    hides floor(node_rate * n * d) individual entries. Edge hiding removes
    floor(edge_rate * E) undirected edges (both directions at once).
    """
    if not (0.0 <= node_rate <= 1.0 and 0.0 <= edge_rate <= 1.0):
        raise UsageError(
            f"mask rates must lie in [0, 1], got node={node_rate}, edge={edge_rate}")
    if mode not in ("row", "element"):
        raise UsageError(f"unknown mask mode {mode!r}")
    r = rng_mod.stream(seed, rng_mod.MASKS)
    mask = np.ones((g.n, g.d))
    if mode == "row":
        k = int(np.floor(node_rate * g.n))
        if k:
            rows = r.choice(g.n, size=k, replace=False)
            mask[rows] = 0.0
    else:
        k = int(np.floor(node_rate * g.n * g.d))
        if k:
            flat = r.choice(g.n * g.d, size=k, replace=False)
            mask.reshape(-1)[flat] = 0.0
    ke = int(np.floor(edge_rate * g.num_edges))
    if ke:
        idx = np.sort(r.choice(g.num_edges, size=ke, replace=False))
        hidden = g.edges[idx]
    else:
        hidden = np.zeros((0, 2), dtype=np.int64)
    return ObservationMask(feature_mask=mask, hidden_edges=hidden, mode=mode,
                           node_rate=float(node_rate), edge_rate=float(edge_rate),
                           seed=int(seed))


@dataclass(frozen=True)
class IncompleteGraph:
    """The observed view of a masked graph. Labels never travel with it."""

    features_obs: np.ndarray
    edges_obs: np.ndarray
    mask: ObservationMask
    source_hash: str

    @property
    def n(self) -> int:
        return self.features_obs.shape[0]

    @property
    def d(self) -> int:
        return self.features_obs.shape[1]

    def adjacency_obs(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        if len(self.edges_obs):
            u, v = self.edges_obs[:, 0], self.edges_obs[:, 1]
            A[u, v] = 1.0
            A[v, u] = 1.0
        return A


def _edge_rows_to_keys(e: np.ndarray) -> np.ndarray:
    return e[:, 0].astype(np.int64) << 32 | e[:, 1].astype(np.int64)


def apply_masks(g: AttributedGraph, mask: ObservationMask) -> IncompleteGraph:
    """Project a graph to its observed part under a mask."""
    if mask.feature_mask.shape != g.features.shape:
        raise DataError(
            f"mask shape {mask.feature_mask.shape} does not match graph "
            f"{g.features.shape}")
    X_obs = g.features * mask.feature_mask
    if len(mask.hidden_edges):
        keys = _edge_rows_to_keys(g.edges)
        hidden_keys = _edge_rows_to_keys(mask.hidden_edges)
        missing = ~np.isin(hidden_keys, keys)
        if missing.any():
            raise DataError(f"{int(missing.sum())} hidden edges absent from graph")
        keep = ~np.isin(keys, hidden_keys)
        edges_obs = g.edges[keep]
    else:
        edges_obs = g.edges.copy()
    return IncompleteGraph(features_obs=X_obs, edges_obs=edges_obs, mask=mask,
                           source_hash=g.source_hash())


@dataclass(frozen=True)
class DatasetManifest:
    """Where a dataset lives on disk and what it must contain."""

    name: str
    features_path: str
    edges_path: str
    labels_path: str | None
    num_nodes: int
    num_edges: int
    num_features: int
    num_outliers: int | None


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    kv: dict[str, str] = {}
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{ln}: expected key = value")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    try:
        base = path.parent

        def resolve(p: str) -> str:
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        return DatasetManifest(
            name=kv["name"],
            features_path=resolve(kv["features"]),
            edges_path=resolve(kv["edges"]),
            labels_path=resolve(kv["labels"]) if "labels" in kv else None,
            num_nodes=int(kv["nodes"]),
            num_edges=int(kv["edges_count"]),
            num_features=int(kv["attributes"]),
            num_outliers=int(kv["outliers"]) if "outliers" in kv else None,
        )
    except KeyError as e:
        raise DataError(f"manifest {path} missing key {e.args[0]!r}") from e
    except ValueError as e:
        raise DataError(f"manifest {path}: {e}") from e


def write_manifest(path: str | Path, m: DatasetManifest) -> None:
    path = Path(path)
    lines = [f"name = {m.name}",
             f"features = {Path(m.features_path).name}",
             f"edges = {Path(m.edges_path).name}",
             f"nodes = {m.num_nodes}",
             f"edges_count = {m.num_edges}",
             f"attributes = {m.num_features}"]
    if m.labels_path is not None:
        lines.insert(3, f"labels = {Path(m.labels_path).name}")
    if m.num_outliers is not None:
        lines.append(f"outliers = {m.num_outliers}")
    path.write_text("\n".join(lines) + "\n")


def _load_matrix(path: str, expect_cols: int | None = None) -> np.ndarray:
    try:
        arr = np.loadtxt(path, ndmin=2, dtype=np.float64)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"malformed numeric data in {path}: {e}") from e
    if arr.size == 0:
        arr = arr.reshape(0, expect_cols or 0)
    if expect_cols is not None and arr.shape[1] != expect_cols:
        raise DataError(f"{path}: expected {expect_cols} columns, got {arr.shape[1]}")
    return arr


def load_graph(manifest: DatasetManifest) -> AttributedGraph:
    """Load and validate a dataset against its manifest."""
    X = _load_matrix(manifest.features_path)
    if not np.isfinite(X).all():
        raise DataError(f"{manifest.features_path}: non-finite feature values")
    raw_e = _load_matrix(manifest.edges_path, expect_cols=2)
    if raw_e.size and not np.array_equal(raw_e, np.round(raw_e)):
        raise DataError(f"{manifest.edges_path}: non-integer edge endpoints")
    labels = None
    if manifest.labels_path is not None:
        lab = _load_matrix(manifest.labels_path, expect_cols=1).ravel()
        if not np.isin(lab, (0.0, 1.0)).all():
            raise DataError(f"{manifest.labels_path}: labels must be 0/1")
        labels = lab.astype(np.int8)
    g = AttributedGraph.build(X, raw_e.astype(np.int64), labels)
    if g.n != manifest.num_nodes:
        raise DataError(f"{manifest.name}: expected {manifest.num_nodes} nodes, "
                        f"got {g.n}")
    if g.d != manifest.num_features:
        raise DataError(f"{manifest.name}: expected {manifest.num_features} "
                        f"attributes, got {g.d}")
    if g.num_edges != manifest.num_edges:
        raise DataError(f"{manifest.name}: expected {manifest.num_edges} edges, "
                        f"got {g.num_edges}")
    if manifest.num_outliers is not None and labels is not None:
        if int(labels.sum()) != manifest.num_outliers:
            raise DataError(f"{manifest.name}: expected {manifest.num_outliers} "
                            f"outliers, got {int(labels.sum())}")
    return g


def save_graph(directory: str | Path, g: AttributedGraph, name: str) -> Path:
    """Write a dataset directory (features/edges[/labels] plus manifest)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "features.txt", g.features, fmt=_FLOAT_FMT)
    np.savetxt(directory / "edges.txt", g.edges, fmt="%d")
    labels_path = None
    if g.labels is not None:
        np.savetxt(directory / "labels.txt", g.labels, fmt="%d")
        labels_path = str(directory / "labels.txt")
    m = DatasetManifest(
        name=name, features_path=str(directory / "features.txt"),
        edges_path=str(directory / "edges.txt"), labels_path=labels_path,
        num_nodes=g.n, num_edges=g.num_edges, num_features=g.d,
        num_outliers=None if g.labels is None else int(g.labels.sum()))
    write_manifest(directory / "manifest.txt", m)
    return directory / "manifest.txt"


def save_bundle(directory: str | Path, inc: IncompleteGraph,
                labels: np.ndarray | None = None) -> None:
    """Persist an observed graph (and optionally held-out labels) to disk."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "features_obs.txt", inc.features_obs, fmt=_FLOAT_FMT)
    np.savetxt(directory / "edges_obs.txt", inc.edges_obs, fmt="%d")
    np.savetxt(directory / "hidden_edges.txt", inc.mask.hidden_edges, fmt="%d")
    m = inc.mask
    if m.mode == "row":
        hidden = np.flatnonzero((m.feature_mask == 0.0).all(axis=1))
    else:
        hidden = np.flatnonzero(m.feature_mask.reshape(-1) == 0.0)
    np.savetxt(directory / "hidden_features.txt", hidden, fmt="%d")
    if labels is not None:
        np.savetxt(directory / "labels.txt", labels, fmt="%d")
    meta = [f"version = {BUNDLE_VERSION}",
            f"nodes = {inc.n}",
            f"attributes = {inc.d}",
            f"mode = {m.mode}",
            f"node_rate = {m.node_rate!r}",
            f"edge_rate = {m.edge_rate!r}",
            f"seed = {m.seed}",
            f"edges_obs = {len(inc.edges_obs)}",
            f"hidden_edges = {len(m.hidden_edges)}",
            f"hidden_features = {len(hidden)}",
            f"has_labels = {int(labels is not None)}",
            f"source_hash = {inc.source_hash}"]
    (directory / "meta.txt").write_text("\n".join(meta) + "\n")


def load_bundle(directory: str | Path,
                expect_source: AttributedGraph | None = None):
    """Load a bundle directory; returns (IncompleteGraph, labels or None).

    If expect_source is given its hash is compared with the stored one and a
    mismatch is surfaced as a warning (the bundle still loads).
    """
    directory = Path(directory)
    meta_path = directory / "meta.txt"
    kv: dict[str, str] = {}
    try:
        for line in meta_path.read_text().splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
    except OSError as e:
        raise DataError(f"cannot read bundle meta {meta_path}: {e}") from e
    try:
        version = int(kv["version"])
        n, d = int(kv["nodes"]), int(kv["attributes"])
        mode = kv["mode"]
        node_rate, edge_rate = float(kv["node_rate"]), float(kv["edge_rate"])
        seed = int(kv["seed"])
        counts = {k: int(kv[k]) for k in ("edges_obs", "hidden_edges",
                                          "hidden_features")}
        has_labels = bool(int(kv["has_labels"]))
        source_hash = kv["source_hash"]
    except KeyError as e:
        raise DataError(f"bundle meta missing key {e.args[0]!r}") from e
    except ValueError as e:
        raise DataError(f"bundle meta: {e}") from e
    if version != BUNDLE_VERSION:
        raise DataError(f"unsupported bundle version {version}")

    X_obs = _load_matrix(str(directory / "features_obs.txt"), expect_cols=d)
    if X_obs.shape[0] != n:
        raise DataError(f"bundle features have {X_obs.shape[0]} rows, meta says {n}")
    edges_obs = _load_matrix(str(directory / "edges_obs.txt"),
                             expect_cols=2).astype(np.int64)
    hidden_edges = _load_matrix(str(directory / "hidden_edges.txt"),
                                expect_cols=2).astype(np.int64)
    hidden_feat = _load_matrix(str(directory / "hidden_features.txt"),
                               expect_cols=1).astype(np.int64).ravel()
    for key, arr in (("edges_obs", edges_obs), ("hidden_edges", hidden_edges),
                     ("hidden_features", hidden_feat)):
        if len(arr) != counts[key]:
            raise DataError(f"bundle {key} count {len(arr)} != meta {counts[key]}")

    mask_mat = np.ones((n, d))
    if mode == "row":
        if hidden_feat.size and (hidden_feat.min() < 0 or hidden_feat.max() >= n):
            raise DataError("hidden feature row index out of range")
        mask_mat[hidden_feat] = 0.0
    elif mode == "element":
        if hidden_feat.size and (hidden_feat.min() < 0 or hidden_feat.max() >= n * d):
            raise DataError("hidden feature cell index out of range")
        mask_mat.reshape(-1)[hidden_feat] = 0.0
    else:
        raise DataError(f"unknown mask mode {mode!r} in bundle")

    labels = None
    if has_labels:
        lab = _load_matrix(str(directory / "labels.txt"), expect_cols=1).ravel()
        if lab.shape[0] != n or not np.isin(lab, (0.0, 1.0)).all():
            raise DataError("bundle labels malformed")
        labels = lab.astype(np.int8)

    mask = ObservationMask(feature_mask=mask_mat, hidden_edges=hidden_edges,
                           mode=mode, node_rate=node_rate, edge_rate=edge_rate,
                           seed=seed)
    inc = IncompleteGraph(features_obs=X_obs, edges_obs=edges_obs, mask=mask,
                          source_hash=source_hash)
    if expect_source is not None and expect_source.source_hash() != source_hash:
        log.warning("bundle source hash %s does not match the provided graph %s",
                    source_hash[:12], expect_source.source_hash()[:12])
    return inc, labels
