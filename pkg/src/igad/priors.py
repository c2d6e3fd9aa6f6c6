"""Radially truncated Gaussian priors and the uniform shell sampler.

All three target measures factorize into an isotropic direction and a radial
law. Directions come from normalized Gaussian draws. Gaussian radii are drawn
by inverting the chi radial CDF, which in terms of y = rho^2 / 2 is the
regularized lower incomplete gamma P(dim/2, y); the inverse is a vectorized
bisection to 1e-12 interval width. Uniform (by volume) shell radii invert
rho^d in the log domain so large dimensions cannot overflow.

Samples are clamped onto their support at the final-ulp level so the strict
inequalities hold for every draw even after float rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .errors import UsageError

_BISECT_TOL = 1e-12
_U_CLAMP = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """Geometry of the latent targets: ball radius and shell radii."""

    dim: int
    radius: float
    shell_inner: float
    shell_outer: float

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise UsageError(f"prior dim must be >= 1, got {self.dim}")
        if not (0.0 < self.radius <= self.shell_inner < self.shell_outer):
            raise UsageError(
                "prior radii must satisfy 0 < radius <= shell_inner < shell_outer, "
                f"got r={self.radius}, r_a={self.shell_inner}, r_b={self.shell_outer}")


def _directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    norms = np.linalg.norm(v, axis=1)
    while (bad := norms == 0.0).any():  # pragma: no cover - measure-zero event
        v[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def _gaussian_radii(rng: np.random.Generator, count: int, dim: int,
                    lo: float, hi: float) -> np.ndarray:
    """Chi-law radii conditioned on lo <= rho <= hi, by bisecting the CDF."""
    a = dim / 2.0
    y_lo = lo * lo / 2.0
    y_hi = hi * hi / 2.0
    p_lo = float(gammainc(a, y_lo))
    p_hi = float(gammainc(a, y_hi))
    if not p_hi > p_lo:
        raise UsageError(
            f"truncation window [{lo}, {hi}] carries no radial mass at dim {dim}")
    target = p_lo + rng.random(count) * (p_hi - p_lo)
    lo_v = np.full(count, y_lo)
    hi_v = np.full(count, y_hi)
    while (hi_v - lo_v).max() > _BISECT_TOL:
        mid = 0.5 * (lo_v + hi_v)
        below = gammainc(a, mid) < target
        lo_v = np.where(below, mid, lo_v)
        hi_v = np.where(below, hi_v, mid)
    return np.sqrt(lo_v + hi_v)  # sqrt(2 * midpoint)


def sample_ball_gaussian(spec: PriorSpec, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Standard Gaussian conditioned on the closed ball of spec.radius."""
    if count < 1:
        raise UsageError("sample count must be >= 1")
    radii = _gaussian_radii(rng, count, spec.dim, 0.0, spec.radius)
    np.clip(radii, 0.0, spec.radius, out=radii)
    return radii[:, None] * _directions(rng, count, spec.dim)


def sample_shell_gaussian(spec: PriorSpec, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Standard Gaussian conditioned on the shell (shell_inner, shell_outer]."""
    if count < 1:
        raise UsageError("sample count must be >= 1")
    radii = _gaussian_radii(rng, count, spec.dim, spec.shell_inner,
                            spec.shell_outer)
    np.clip(radii, np.nextafter(spec.shell_inner, np.inf), spec.shell_outer,
            out=radii)
    return radii[:, None] * _directions(rng, count, spec.dim)


def sample_shell_uniform(spec: PriorSpec, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Volume-uniform draw from the open shell (shell_inner, shell_outer).

    Radial inverse CDF: rho = (r_a^d + u (r_b^d - r_a^d))^(1/d), evaluated as
    exp((L_b + log(u + (1-u) exp(L_a - L_b))) / d) with L = d log r, so no
    intermediate power overflows at large d.
    """
    if count < 1:
        raise UsageError("sample count must be >= 1")
    d = float(spec.dim)
    log_a = d * np.log(spec.shell_inner)
    log_b = d * np.log(spec.shell_outer)
    u = np.clip(rng.random(count), _U_CLAMP, 1.0 - _U_CLAMP)
    log_v = log_b + np.log(u + (1.0 - u) * np.exp(log_a - log_b))
    radii = np.exp(log_v / d)
    np.clip(radii, np.nextafter(spec.shell_inner, np.inf),
            np.nextafter(spec.shell_outer, 0.0), out=radii)
    return radii[:, None] * _directions(rng, count, spec.dim)
