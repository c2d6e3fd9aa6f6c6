"""Parameter store, Adam, and finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import NumericalError
from .tape import Tensor


class ParamStore:
    """Named trainable tensors with a stable iteration order."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self._params.items()}


@dataclass
class AdamState:
    """Optimizer state; one (m, v) pair per parameter, plus the step count."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    st = AdamState(lr=float(lr), beta1=beta1, beta2=beta2, eps=eps)
    for name, t in params.items():
        st.m[name] = np.zeros_like(t.value)
        st.v[name] = np.zeros_like(t.value)
    return st


def adam_step(params: ParamStore, st: AdamState) -> None:
    """Apply one bias-corrected Adam update; missing grads count as zero.

    Non-finite gradients are fatal (NumericalError). Gradients are cleared
    after the update.
    """
    st.step_count += 1
    t = st.step_count
    c1 = 1.0 - st.beta1 ** t
    c2 = 1.0 - st.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.value)
        elif not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        m = st.m[name]
        v = st.v[name]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        if st.lr != 0.0:
            p.value -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
    params.zero_grads()


@dataclass
class GradCheckReport:
    max_rel_err: float
    probes: list[tuple[str, int, float, float, float]]  # (name, flat idx, analytic, numeric, rel err)
    passed: bool
    tol: float


def grad_check(loss_fn: Callable[[], Tensor], params: ParamStore,
               probes: int = 32, h: float = 1e-5, tol: float = 1e-4,
               seed: int = 0, abs_floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    loss_fn must rebuild the loss graph from the current parameter values on
    every call and be deterministic. `probes` scalar entries are chosen at
    random across all parameters; each is perturbed by +/- h and the centered
    difference (f(x+h) - f(x-h)) / 2h is compared to the tape gradient. The
    relative error divides by max(|analytic|, |numeric|); when both
    magnitudes sit at or below abs_floor the probe counts as exact agreement.
    """
    params.zero_grads()
    loss = loss_fn()
    loss.backward()
    grads = {name: (np.zeros_like(t.value) if t.grad is None else t.grad.copy())
             for name, t in params.items()}
    params.zero_grads()

    names = params.names()
    sizes = np.array([params[n].value.size for n in names])
    total = int(sizes.sum())
    if total == 0:
        raise ValueError("grad_check on an empty parameter store")
    rng = np.random.default_rng(seed)
    flat_choices = rng.choice(total, size=min(probes, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    rows: list[tuple[str, int, float, float, float]] = []
    max_rel = 0.0
    for flat in sorted(int(c) for c in flat_choices):
        pi = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[pi]
        local = flat - int(offsets[pi])
        vec = params[name].value.reshape(-1)
        orig = float(vec[local])
        vec[local] = orig + h
        f_plus = loss_fn().item()
        vec[local] = orig - h
        f_minus = loss_fn().item()
        vec[local] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        analytic = float(grads[name].reshape(-1)[local])
        denom = max(abs(analytic), abs(numeric))
        rel = 0.0 if denom <= abs_floor else abs(analytic - numeric) / denom
        rows.append((name, local, analytic, numeric, rel))
        max_rel = max(max_rel, rel)
    return GradCheckReport(max_rel_err=max_rel, probes=rows,
                           passed=max_rel <= tol, tol=tol)
