"""The two imputation pathways: feature MLP and structural diffusion.

Features are repaired by a row-wise MLP on the observed matrix; structure is
repaired by deterministic personalized-PageRank diffusion of the observed
adjacency, added on top of the observed edges (densify). Neither pathway
looks at labels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .errors import UsageError
from .optim import ParamStore
from .tape import Tensor


@dataclass(frozen=True)
class DiffusionConfig:
    """Personalized-PageRank power iteration settings.

    beta is the restart-complement (neighbor-following) probability. With
    normalize="row" the smoothing operator is the row-stochastic random-walk
    matrix of the self-looped graph and the iteration provably converges at
    rate beta; normalize="none" iterates on the raw self-looped adjacency,
    which can diverge on dense graphs (caller's choice).
    """

    beta: float = 0.85
    max_iters: int = 50
    tol: float = 1e-6
    normalize: str = "row"

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise UsageError(f"diffusion beta must be in (0, 1), got {self.beta}")
        if self.max_iters < 1:
            raise UsageError("diffusion max_iters must be >= 1")
        if self.tol < 0.0:
            raise UsageError("diffusion tol must be >= 0")
        if self.normalize not in ("row", "none"):
            raise UsageError(f"unknown diffusion normalize {self.normalize!r}")


def ppr_diffuse(A: np.ndarray, cfg: DiffusionConfig) -> np.ndarray:
    """Iterate P <- beta * T @ P + (1-beta) * I from P = I.

    T is the (optionally row-normalized) self-looped adjacency. Stops early
    once the max-abs update falls at or below cfg.tol. The fixed point is
    (1-beta) * (I - beta*T)^(-1).
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise UsageError(f"adjacency must be square, got {A.shape}")
    T = A + np.eye(n)
    if cfg.normalize == "row":
        T = T / T.sum(axis=1, keepdims=True)
    restart = (1.0 - cfg.beta) * np.eye(n)
    P = np.eye(n)
    for _ in range(cfg.max_iters):
        P_next = cfg.beta * (T @ P) + restart
        delta = np.abs(P_next - P).max()
        P = P_next
        if delta <= cfg.tol:
            break
    return P


def densify(A_obs: np.ndarray, diffusion: np.ndarray) -> np.ndarray:
    """Overlay diffusion weights on the observed adjacency."""
    A_obs = np.asarray(A_obs, dtype=np.float64)
    if A_obs.shape != diffusion.shape:
        raise UsageError(
            f"shape mismatch {A_obs.shape} vs {diffusion.shape} in densify")
    return A_obs + diffusion


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_imputer(store: ParamStore, prefix: str, d: int, hidden: int,
                 rng: np.random.Generator) -> None:
    """Create the feature-repair MLP parameters (d -> hidden -> d)."""
    store.create(f"{prefix}.w1", glorot(rng, d, hidden))
    store.create(f"{prefix}.b1", np.zeros((1, hidden)))
    store.create(f"{prefix}.w2", glorot(rng, hidden, d))
    store.create(f"{prefix}.b2", np.zeros((1, d)))


def imputer_forward(store: ParamStore, prefix: str, X_obs: Tensor) -> Tensor:
    """Row-wise MLP with one ReLU hidden layer and a linear output."""
    h = tape.relu(tape.add(tape.matmul(X_obs, store[f"{prefix}.w1"]),
                           store[f"{prefix}.b1"]))
    return tape.add(tape.matmul(h, store[f"{prefix}.w2"]), store[f"{prefix}.b2"])


def feature_loss(X_hat: Tensor, X_obs: Tensor, mask: Tensor) -> Tensor:
    """Imputation fidelity on observed entries only."""
    return tape.masked_mse(X_hat, X_obs, mask)


def mean_fill_baseline(X_obs: np.ndarray, feature_mask: np.ndarray) -> np.ndarray:
    """Replace hidden entries with per-column observed means (0 if a column
    is entirely hidden)."""
    X_obs = np.asarray(X_obs, dtype=np.float64)
    M = np.asarray(feature_mask, dtype=np.float64)
    if X_obs.shape != M.shape:
        raise UsageError("mean_fill_baseline shape mismatch")
    counts = M.sum(axis=0)
    sums = (X_obs * M).sum(axis=0)
    means = np.divide(sums, counts, out=np.zeros_like(sums),
                      where=counts > 0)
    return np.where(M == 1.0, X_obs, means[None, :])
