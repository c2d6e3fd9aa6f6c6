import numpy as np
import pytest

from igad.errors import UsageError
from igad.latent import (decoder_forward, decoder_forward_np, init_decoder,
                         init_projector, normalize_adjacency, project)
from igad.optim import ParamStore, grad_check
from igad import tape
from igad.tape import Tensor


def test_normalize_adjacency_symmetric_unit_rows():
    rng = np.random.default_rng(0)
    A = rng.random((6, 6)) * 2  # asymmetric weighted
    N = normalize_adjacency(A, "sym")
    assert np.allclose(N, N.T)
    # oracle: explicit D^-1/2 (A+A')/2 D^-1/2
    S = 0.5 * (A + A.T)
    d = S.sum(axis=1)
    R = np.diag(d ** -0.5) @ S @ np.diag(d ** -0.5)
    assert np.allclose(N, R)


def test_normalize_adjacency_zero_degree_row_stays_zero():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    N = normalize_adjacency(A, "sym")
    assert not N[2].any() and not N[:, 2].any()
    assert np.isfinite(N).all()


def test_normalize_adjacency_none_passthrough():
    A = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert np.array_equal(normalize_adjacency(A, "none"), A)
    with pytest.raises(UsageError):
        normalize_adjacency(A, "rows")
    with pytest.raises(UsageError):
        normalize_adjacency(np.zeros((2, 3)))


def test_projector_forward_matches_manual():
    rng = np.random.default_rng(1)
    store = ParamStore()
    init_projector(store, "proj", d=4, latent_dim=3, rng=rng)
    X = rng.standard_normal((5, 4))
    A = normalize_adjacency(rng.random((5, 5)), "sym")
    Z = project(store, "proj", Tensor(X), A)
    W1, W2 = store["proj.w1"].value, store["proj.w2"].value
    manual = A @ np.maximum(A @ X @ W1, 0) @ W2
    assert np.allclose(Z.value, manual)
    # the output layer is linear so the latent cloud spans both signs
    assert (Z.value < 0).any() and (Z.value > 0).any()


def test_projector_gradients_check_out():
    rng = np.random.default_rng(2)
    store = ParamStore()
    init_projector(store, "proj", d=3, latent_dim=4, rng=rng)
    X = Tensor(rng.standard_normal((6, 3)))
    A = normalize_adjacency(np.abs(rng.random((6, 6))), "sym")

    def loss_fn():
        Z = project(store, "proj", X, A)
        return tape.masked_mse(Z, Tensor(np.zeros((6, 4))),
                               Tensor(np.ones((6, 4))))

    rep = grad_check(loss_fn, store, probes=10, seed=3)
    assert rep.passed, rep.max_rel_err


def test_decoder_roundtrip_and_np_equivalence():
    rng = np.random.default_rng(4)
    store = ParamStore()
    init_decoder(store, "dec", latent_dim=3, hidden=8, d=5, rng=rng)
    Z = rng.standard_normal((7, 3))
    t = decoder_forward(store, "dec", Tensor(Z))
    n = decoder_forward_np(store, "dec", Z)
    assert t.shape == (7, 5)
    assert np.allclose(t.value, n)


def test_decoder_gradients_check_out():
    rng = np.random.default_rng(5)
    store = ParamStore()
    init_decoder(store, "dec", latent_dim=2, hidden=6, d=3, rng=rng)
    Z = Tensor(rng.standard_normal((5, 2)))
    target = Tensor(rng.standard_normal((5, 3)))

    def loss_fn():
        return tape.masked_mse(decoder_forward(store, "dec", Z), target,
                               Tensor(np.ones((5, 3))))

    rep = grad_check(loss_fn, store, probes=12, seed=6)
    assert rep.passed, rep.max_rel_err
