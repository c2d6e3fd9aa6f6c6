"""Joint latent space: graph-convolutional projector and recovery decoder."""
from __future__ import annotations

import numpy as np

from . import tape
from .errors import UsageError
from .impute import glorot
from .optim import ParamStore
from .tape import Tensor


def normalize_adjacency(A_hat: np.ndarray, mode: str = "sym") -> np.ndarray:
    """Prepare the (possibly weighted, possibly asymmetric) repaired
    adjacency for convolution.

    mode="sym": symmetrize by averaging with the transpose, then apply the
    symmetric degree normalization D^(-1/2) A D^(-1/2) (zero-degree rows stay
    zero). mode="none": use the matrix as given.
    """
    A_hat = np.asarray(A_hat, dtype=np.float64)
    n = A_hat.shape[0]
    if A_hat.shape != (n, n):
        raise UsageError(f"adjacency must be square, got {A_hat.shape}")
    if mode == "none":
        return A_hat
    if mode != "sym":
        raise UsageError(f"unknown adjacency normalization {mode!r}")
    S = 0.5 * (A_hat + A_hat.T)
    deg = S.sum(axis=1)
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg),
                         where=deg > 0)
    return S * inv_sqrt[:, None] * inv_sqrt[None, :]


def init_projector(store: ParamStore, prefix: str, d: int, latent_dim: int,
                   rng: np.random.Generator) -> None:
    """Two bias-free graph convolution layers: d -> latent -> latent."""
    store.create(f"{prefix}.w1", glorot(rng, d, latent_dim))
    store.create(f"{prefix}.w2", glorot(rng, latent_dim, latent_dim))


def project(store: ParamStore, prefix: str, X_hat: Tensor,
            A_norm: np.ndarray) -> Tensor:
    """Z = A (relu(A X W1)) W2 with A a fixed normalized adjacency.

    The output layer is linear on purpose: the latent prior is a Gaussian
    ball spanning every orthant, and a rectified (nonnegative) cloud can
    never match it — the transport cost of such a cloud is minimized by
    collapsing onto the origin, which destroys the norm-based score. A
    sign-free final layer makes the prior reachable and keeps gradients
    alive on both sides of zero.
    """
    A = Tensor(A_norm)
    h = tape.relu(tape.matmul(A, tape.matmul(X_hat, store[f"{prefix}.w1"])))
    return tape.matmul(A, tape.matmul(h, store[f"{prefix}.w2"]))


def init_decoder(store: ParamStore, prefix: str, latent_dim: int, hidden: int,
                 d: int, rng: np.random.Generator) -> None:
    """Recovery MLP from the latent space back to features."""
    store.create(f"{prefix}.w1", glorot(rng, latent_dim, hidden))
    store.create(f"{prefix}.b1", np.zeros((1, hidden)))
    store.create(f"{prefix}.w2", glorot(rng, hidden, d))
    store.create(f"{prefix}.b2", np.zeros((1, d)))


def decoder_forward(store: ParamStore, prefix: str, Z: Tensor) -> Tensor:
    h = tape.relu(tape.add(tape.matmul(Z, store[f"{prefix}.w1"]),
                           store[f"{prefix}.b1"]))
    return tape.add(tape.matmul(h, store[f"{prefix}.w2"]), store[f"{prefix}.b2"])


def decoder_forward_np(store: ParamStore, prefix: str,
                       Z: np.ndarray) -> np.ndarray:
    """Gradient-free decoder evaluation on raw arrays (for generation)."""
    h = np.maximum(Z @ store[f"{prefix}.w1"].value + store[f"{prefix}.b1"].value,
                   0.0)
    return h @ store[f"{prefix}.w2"].value + store[f"{prefix}.b2"].value
