"""Entropic optimal transport and the debiased Sinkhorn divergence.

Everything runs in the log domain on scaled potentials (phi = f/eps,
psi = g/eps), so no kernel matrix is ever exponentiated in the forward pass.
Gradients are exact backpropagation through the fixed number of iterations:
the reverse sweep replays the stored per-iteration potentials and rebuilds
each softmax matrix on the fly. Each softmax exponent is bounded above by 0
by construction (the potential being differentiated is itself the negative
log-sum-exp of the same terms), so the reverse pass cannot overflow.

Empirical measures are uniform; the cost is squared Euclidean distance.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericalError
from .tape import Tensor


def _sq_dists(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    pn = (P * P).sum(axis=1)[:, None]
    qn = (Q * Q).sum(axis=1)[None, :]
    C = pn + qn - 2.0 * (P @ Q.T)
    np.maximum(C, 0.0, out=C)
    return C


def _lse_rows(W: np.ndarray, out_max: np.ndarray, out_sum: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of W, destroying W; returns a fresh vector."""
    W.max(axis=1, out=out_max)
    W -= out_max[:, None]
    np.exp(W, out=W)
    W.sum(axis=1, out=out_sum)
    return np.log(out_sum) + out_max


def ot_entropic(P: np.ndarray, Q: np.ndarray, eps: float, iters: int,
                grad_p: bool = False, grad_q: bool = False):
    """Entropic OT value between uniform measures on the rows of P and Q.

    Returns (value, dP, dQ); the gradient slots are None unless requested.
    Non-finite potentials abort with NumericalError.
    """
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    m, k = P.shape[0], Q.shape[0]
    if m == 0 or k == 0:
        raise ValueError("optimal transport needs at least one atom per side")
    if P.shape[1] != Q.shape[1]:
        raise ValueError(f"atom dimension mismatch {P.shape} vs {Q.shape}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    S = _sq_dists(P, Q) / eps
    la = -np.log(m)  # log of uniform weight on P side
    lb = -np.log(k)
    need_grad = grad_p or grad_q
    Phi = np.empty((iters, m)) if need_grad else None
    Psi = np.empty((iters, k)) if need_grad else None

    W = np.empty((m, k))
    Wt = np.empty((k, m))
    mx_r, sm_r = np.empty(m), np.empty(m)
    mx_c, sm_c = np.empty(k), np.empty(k)
    psi = np.zeros(k)
    phi = np.empty(m)
    for t in range(iters):
        np.subtract(psi[None, :], S, out=W)
        phi = -(lb + _lse_rows(W, mx_r, sm_r))
        np.subtract(phi[:, None], S, out=W)
        np.copyto(Wt, W.T)
        psi = -(la + _lse_rows(Wt, mx_c, sm_c))
        if need_grad:
            Phi[t] = phi
            Psi[t] = psi

    if not (np.isfinite(phi).all() and np.isfinite(psi).all()):
        raise NumericalError("Sinkhorn potentials diverged (non-finite)")
    value = eps * (phi.mean() + psi.mean())

    if not need_grad:
        return value, None, None

    # Reverse sweep. d_phi / d_psi are adjoints of the scaled potentials.
    dS = np.zeros((m, k))
    d_psi = np.full(k, eps / k)
    base_phi = np.full(m, eps / m)
    for t in range(iters - 1, -1, -1):
        phi_t = Phi[t]
        psi_t = Psi[t]
        psi_prev = Psi[t - 1] if t > 0 else np.zeros(k)
        # sigma_ij = exp(phi_t_i - S_ij + la + psi_t_j): weights of the psi update
        np.subtract(phi_t[:, None], S, out=W)
        W += psi_t[None, :]
        W += la
        np.exp(W, out=W)
        d_phi = -(W @ d_psi)
        if t == iters - 1:
            d_phi += base_phi
        W *= d_psi[None, :]
        dS += W
        # tau_ij = exp(psi_prev_j - S_ij + lb + phi_t_i): weights of the phi update
        np.subtract(psi_prev[None, :], S, out=W)
        W += phi_t[:, None]
        W += lb
        np.exp(W, out=W)
        if t > 0:
            d_psi = -(W.T @ d_phi)
        W *= d_phi[:, None]
        dS += W

    dC = dS / eps
    dP = dQ = None
    if grad_p:
        dP = 2.0 * dC.sum(axis=1)[:, None] * P - 2.0 * (dC @ Q)
    if grad_q:
        dQ = 2.0 * dC.sum(axis=0)[:, None] * Q - 2.0 * (dC.T @ P)
    return value, dP, dQ


def sinkhorn_divergence_value(P: np.ndarray, Q: np.ndarray, eps: float,
                              iters: int, grad_p: bool = False,
                              grad_q: bool = False):
    """Debiased divergence OT(P,Q) - (OT(P,P) + OT(Q,Q))/2, with gradients.

    The self-transport terms see their argument through both slots, so their
    gradient is the sum of both slot gradients.
    """
    v_pq, dP_pq, dQ_pq = ot_entropic(P, Q, eps, iters, grad_p, grad_q)
    v_pp, dPa, dPb = ot_entropic(P, P, eps, iters, grad_p, grad_p)
    v_qq, dQa, dQb = ot_entropic(Q, Q, eps, iters, grad_q, grad_q)
    value = v_pq - 0.5 * (v_pp + v_qq)
    dP = dQ = None
    if grad_p:
        dP = dP_pq - 0.5 * (dPa + dPb)
    if grad_q:
        dQ = dQ_pq - 0.5 * (dQa + dQb)
    return value, dP, dQ


def sinkhorn_divergence(P: Tensor, Q: Tensor, eps: float, iters: int,
                        q_self: float | None = None) -> Tensor:
    """Tape primitive: debiased Sinkhorn divergence as a (1,1) tensor node.

    `q_self` optionally supplies a precomputed OT(Q,Q): that term depends
    only on Q, so when Q is a fixed atom set reused across many loss
    evaluations the caller can pay its (quadratic in len(Q)) cost once.
    Only valid while Q does not require gradients.
    """
    grad_p, grad_q = P.requires_grad, Q.requires_grad
    if q_self is not None and not grad_q:
        v_pq, dP_pq, _ = ot_entropic(P.value, Q.value, eps, iters, grad_p)
        v_pp, dPa, dPb = ot_entropic(P.value, P.value, eps, iters,
                                     grad_p, grad_p)
        value = v_pq - 0.5 * (v_pp + float(q_self))
        dP = dP_pq - 0.5 * (dPa + dPb) if grad_p else None
        dQ = None
    else:
        value, dP, dQ = sinkhorn_divergence_value(P.value, Q.value, eps, iters,
                                                  grad_p=grad_p, grad_q=grad_q)
    out_val = np.array([[value]], dtype=np.float64)

    def bwd(g: np.ndarray) -> None:
        s = g[0, 0]
        if grad_p:
            P._accum(s * dP)
        if grad_q:
            Q._accum(s * dQ)

    return Tensor._from_op(out_val, (P, Q), bwd)
