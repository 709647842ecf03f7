"""Separable exact solutions u = G(t) Phi(x) and their forcing terms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernel import VariableOrder
from .special import gamma


def caputo_power(p: float, beta, t):
    """Caputo derivative of order beta in (1, 2) of t^p, for p > 1.

    Gamma(p+1) / Gamma(p+1-beta) * t^(p-beta); ``beta`` may be an array
    (a variable order sampled at ``t``).
    """
    if p <= 1.0:
        raise ValueError("caputo_power needs p > 1 so that the second derivative is integrable")
    beta = np.asarray(beta, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    coef = gamma(p + 1.0) / gamma(p + 1.0 - beta)
    positive = t > 0
    safe_t = np.where(positive, t, 1.0)
    # at t = 0 the power vanishes for p > beta and blows up for p < beta
    at_zero = np.where(p > beta, 0.0, np.where(p == beta, coef, np.inf))
    out = np.where(positive, coef * safe_t ** (p - beta), at_zero)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PowerSeries:
    """G(t) = sum_k coef_k t^{power_k}."""

    coefs: tuple
    powers: tuple

    def __call__(self, t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c, p in zip(self.coefs, self.powers):
            k = c
            for j in range(deriv):
                k *= p - j
            if k != 0.0:
                out = out + k * t ** (p - deriv)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpatialProfile:
    dim: int
    value: Callable
    grad: Callable
    laplacian: Callable


@dataclass(frozen=True)
class SolutionBundle:
    name: str
    profile: SpatialProfile
    G: PowerSeries
    bounds: tuple

    @property
    def dim(self) -> int:
        return self.profile.dim

    @property
    def is_zero(self) -> bool:
        return len(self.G.coefs) == 0

    def u(self, x, t):
        return self.G(t) * self.profile.value(x)

    def v(self, x, t):
        return self.G(t, 1) * self.profile.value(x)

    def grad_u(self, x, t):
        return self.G(t) * self.profile.grad(x)

    def lap_u(self, x, t):
        return self.G(t) * self.profile.laplacian(x)

    def u_tt(self, x, t):
        return self.G(t, 2) * self.profile.value(x)

    def fractional_term(self, order: VariableOrder, t):
        """Caputo derivative of order 1 + alpha(t) applied to G."""
        beta = 1.0 + order(t)
        return sum(c * caputo_power(p, beta, t) for c, p in zip(self.G.coefs, self.G.powers))

    def source(self, order: VariableOrder, x, t):
        """f = u_tt + D^{1+alpha(t)} u - Laplace(u) for this exact solution."""
        if self.is_zero:
            return np.zeros(np.shape(x)[:-1])
        phi = self.profile.value(x)
        lap = self.profile.laplacian(x)
        return (self.G(t, 2) + self.fractional_term(order, t)) * phi - self.G(t) * lap


def _x(x):
    return np.asarray(x, dtype=float)[..., 0]


# Phi(x) = (1 + cos x / 4 + sin 2x / 5) sin x
#        = sin x + sin 2x / 8 + (cos x - cos 3x) / 10
def _phi1(x):
    x = _x(x)
    return np.sin(x) + np.sin(2 * x) / 8 + (np.cos(x) - np.cos(3 * x)) / 10


def _phi1_grad(x):
    x = _x(x)
    return (np.cos(x) + np.cos(2 * x) / 4 + (3 * np.sin(3 * x) - np.sin(x)) / 10)[..., None]


def _phi1_lap(x):
    x = _x(x)
    return -np.sin(x) - np.sin(2 * x) / 2 + (9 * np.cos(3 * x) - np.cos(x)) / 10


# Phi2(x, y) = (1 + cos(2 pi x) / 4 + sin(2 pi y) / 5) sin(2 pi x) sin(2 pi y)
def _ab(x):
    x = np.asarray(x, dtype=float)
    return 2 * np.pi * x[..., 0], 2 * np.pi * x[..., 1]


def _phi2(x):
    a, b = _ab(x)
    return (1 + np.cos(a) / 4 + np.sin(b) / 5) * np.sin(a) * np.sin(b)


def _phi2_grad(x):
    a, b = _ab(x)
    k = 2 * np.pi
    gx = k * (np.cos(a) * np.sin(b) + np.cos(2 * a) * np.sin(b) / 4 + np.cos(a) * np.sin(b) ** 2 / 5)
    gy = k * (np.sin(a) * np.cos(b) + np.sin(2 * a) * np.cos(b) / 8 + np.sin(a) * np.sin(2 * b) / 5)
    return np.stack([gx, gy], axis=-1)


def _phi2_lap(x):
    a, b = _ab(x)
    k2 = (2 * np.pi) ** 2
    return k2 * (
        -2 * np.sin(a) * np.sin(b)
        - 5 * np.sin(2 * a) * np.sin(b) / 8
        - np.sin(a) / 10
        + np.sin(a) * np.cos(2 * b) / 2
    )


PROFILE_1D = SpatialProfile(1, _phi1, _phi1_grad, _phi1_lap)
PROFILE_2D = SpatialProfile(2, _phi2, _phi2_grad, _phi2_lap)


def _zero_profile(dim):
    z = lambda x: np.zeros(np.shape(x)[:-1])  # noqa: E731
    return SpatialProfile(dim, z, lambda x: np.zeros(np.shape(x)), z)


SMOOTH_G = PowerSeries((1.0, 1.0, 0.5), (2.0, 3.5, 4.0))
SINGULAR_G = PowerSeries((1.0,), (1.5,))

TWO_PI = (0.0, 2.0 * np.pi)
UNIT = (0.0, 1.0)


def preset_solutions() -> dict:
    return {
        "smooth1d": SolutionBundle("smooth1d", PROFILE_1D, SMOOTH_G, TWO_PI),
        "singular1d": SolutionBundle("singular1d", PROFILE_1D, SINGULAR_G, TWO_PI),
        "smooth2d": SolutionBundle("smooth2d", PROFILE_2D, SMOOTH_G, UNIT),
        "zero": SolutionBundle("zero", _zero_profile(1), PowerSeries((), ()), TWO_PI),
    }


def get_solution(name: str, dim: int | None = None) -> SolutionBundle:
    presets = preset_solutions()
    if name not in presets:
        raise ValueError(f"unknown solution preset {name!r}; choose from {sorted(presets)}")
    bundle = presets[name]
    if name == "zero" and dim == 2:
        bundle = SolutionBundle("zero", _zero_profile(2), bundle.G, UNIT)
    return bundle
