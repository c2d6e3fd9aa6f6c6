"""Pseudo-anomaly generation and block-diagonal graph augmentation.

Pseudo nodes are decoded from latent codes drawn uniformly (by volume) from
the spherical shell just outside the inlier ball. Their adjacency is derived
from pairwise cosine similarity of the decoded features, min-max normalized
per row over off-diagonal entries, thresholded, and OR-symmetrized. The
augmented graph keeps real and pseudo blocks disconnected, so diffusion and
convolution act on them independently.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError
from .impute import DiffusionConfig, ppr_diffuse
from .priors import PriorSpec, sample_shell_uniform


def pseudo_count(n: int, pseudo_frac: float) -> int:
    """floor(pseudo_frac * n); validates the fraction."""
    if not 0.0 <= pseudo_frac <= 1.0:
        raise UsageError(f"pseudo_frac must be in [0, 1], got {pseudo_frac}")
    return int(np.floor(pseudo_frac * n))


def sample_pseudo_codes(spec: PriorSpec, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Latent codes for pseudo anomalies: uniform over the open shell."""
    return sample_shell_uniform(spec, count, rng)


def build_pseudo_adjacency(X_a: np.ndarray, threshold: float) -> np.ndarray:
    """Similarity-derived 0/1 adjacency among pseudo nodes.

    Cosine similarities are min-max rescaled within each row over the
    off-diagonal entries; entries at or above `threshold` become edges, the
    result is OR-symmetrized and the diagonal stays zero. Rows whose
    similarities are all equal (max = min), and zero-feature rows, emit no
    edges of their own.
    """
    X_a = np.asarray(X_a, dtype=np.float64)
    if X_a.ndim != 2:
        raise UsageError("pseudo features must be a matrix")
    if not 0.0 <= threshold <= 1.0:
        raise UsageError(f"cosine threshold must be in [0, 1], got {threshold}")
    m = X_a.shape[0]
    if m <= 1:
        return np.zeros((m, m))
    norms = np.linalg.norm(X_a, axis=1, keepdims=True)
    unit = np.divide(X_a, norms, out=np.zeros_like(X_a), where=norms > 0)
    S = unit @ unit.T
    off = ~np.eye(m, dtype=bool)
    S_off = np.where(off, S, np.nan)
    row_min = np.nanmin(S_off, axis=1, keepdims=True)
    row_max = np.nanmax(S_off, axis=1, keepdims=True)
    span = row_max - row_min
    ok = (span > 0.0).ravel()
    A = np.zeros((m, m))
    if ok.any():
        scaled = np.zeros_like(S)
        scaled[ok] = (S[ok] - row_min[ok]) / span[ok]
        A[ok] = (scaled[ok] >= threshold) & off[ok]
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0.0)
    return A


def augment_features(X_obs: np.ndarray, feature_mask: np.ndarray,
                     X_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack pseudo rows under the observed matrix; pseudo rows count as
    fully observed in the augmented mask."""
    if X_obs.shape[1] != X_a.shape[1]:
        raise UsageError("pseudo feature width differs from the graph")
    X_aug = np.concatenate([X_obs, X_a], axis=0)
    M_aug = np.concatenate([feature_mask, np.ones_like(X_a)], axis=0)
    return X_aug, M_aug


def block_diagonal(A_real: np.ndarray, A_pseudo: np.ndarray) -> np.ndarray:
    """Adjacency of the augmented graph: no edges cross the block boundary."""
    n, m = A_real.shape[0], A_pseudo.shape[0]
    out = np.zeros((n + m, n + m))
    out[:n, :n] = A_real
    out[n:, n:] = A_pseudo
    return out


def diffuse_augmented(P_real: np.ndarray, A_pseudo: np.ndarray,
                      cfg: DiffusionConfig) -> np.ndarray:
    """Diffusion of the block-diagonal augmented graph.

    Row normalization and the restart iteration both preserve block
    structure, so the result equals diffusing the whole augmented adjacency
    at once; the real block's diffusion is reused as-is and only the pseudo
    block is recomputed.
    """
    P_pseudo = ppr_diffuse(A_pseudo, cfg)
    return block_diagonal(P_real, P_pseudo)
