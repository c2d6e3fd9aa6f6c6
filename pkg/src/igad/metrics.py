"""Ranking metrics and score file IO."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the midrank (Mann-Whitney) identity.

    Ties contribute half weight through midranks. Undefined when either
    class is absent (DataError).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DataError(f"scores/labels length mismatch {s.shape} vs {y.shape}")
    if not np.isfinite(s).all():
        raise DataError("non-finite scores in AUROC")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0/1")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC undefined: both classes must be present")
    ranks = rankdata(s)  # midranks, ascending
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def write_scores(path: str | Path, scores: np.ndarray) -> None:
    """node_id<TAB>score, one line per node, descending by score.

    Ties are broken by node id (ascending) so the file is deterministic.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    order = np.lexsort((np.arange(len(s)), -s))
    lines = [f"{int(i)}\t{s[i]:.17g}" for i in order]
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path: str | Path) -> np.ndarray:
    """Inverse of write_scores: dense score vector indexed by node id."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read scores {path}: {e}") from e
    pairs: dict[int, float] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{ln}: expected node<TAB>score")
        try:
            i, v = int(parts[0]), float(parts[1])
        except ValueError as e:
            raise DataError(f"{path}:{ln}: {e}") from e
        if i in pairs:
            raise DataError(f"{path}:{ln}: duplicate node id {i}")
        pairs[i] = v
    n = len(pairs)
    if n == 0:
        raise DataError(f"{path}: empty score file")
    if set(pairs) != set(range(n)):
        raise DataError(f"{path}: node ids must cover 0..{n - 1}")
    out = np.empty(n)
    for i, v in pairs.items():
        out[i] = v
    return out
