"""Gauss-Legendre rules and the orthonormal Legendre modal basis.

The reference element is [-1, 1] in 1D and [-1, 1]^2 in 2D. Two-dimensional
rules and bases are tensor products of the 1D ones, with the second
coordinate running fastest in every flattened index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 100


def legendre_table(degree: int, x):
    """Values and derivatives of P_0..P_degree at ``x`` via the three-term recurrence.

    Returns two arrays of shape ``(degree + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    p = np.zeros((degree + 1,) + x.shape)
    dp = np.zeros_like(p)
    p[0] = 1.0
    if degree >= 1:
        p[1] = x
        dp[1] = 1.0
    for k in range(1, degree):
        p[k + 1] = ((2 * k + 1) * x * p[k] - k * p[k - 1]) / (k + 1)
        # P'_{k+1} = P'_{k-1} + (2k+1) P_k holds everywhere, including x = +-1.
        dp[k + 1] = dp[k - 1] + (2 * k + 1) * p[k]
    return p, dp


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    dim: int = 1

    @property
    def npoints(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def _gauss_nodes(n: int):
    # asymptotic (Tricomi) initial guesses, ascending after the flip
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(NEWTON_MAXITER):
        p, dp = legendre_table(n, x)
        dx = p[n] / dp[n]
        x = x - dx
        if np.max(np.abs(dx)) <= NEWTON_TOL:
            break
    _, dp = legendre_table(n, x)
    w = 2.0 / ((1.0 - x * x) * dp[n] ** 2)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2 == 1:
        x[n // 2] = 0.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(n: int, dim: int = 1) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1] (or the n x n tensor rule in 2D)."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"gauss_rule needs a positive number of points, got {n!r}")
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    x, w = _gauss_nodes(int(n))
    if dim == 1:
        return QuadratureRule(x, w, 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    return QuadratureRule(nodes, np.outer(w, w).ravel(), 2)


def modal_values(degree: int, x):
    """Orthonormal Legendre modes sqrt((2k+1)/2) P_k and their derivatives."""
    p, dp = legendre_table(degree, x)
    scale = np.sqrt((2 * np.arange(degree + 1) + 1) / 2.0)
    shape = (degree + 1,) + (1,) * np.ndim(x)
    scale = scale.reshape(shape)
    return scale * p, scale * dp


@dataclass(frozen=True)
class BasisSpec:
    """Modal basis of degree ``degree`` on the reference element.

    Evaluation tables at the nodes of ``rule`` are built on construction:
    ``values[k, j]`` is mode k at node j and ``grads[a, k, j]`` its derivative
    along reference axis a.
    """

    degree: int
    dim: int = 1
    rule: QuadratureRule | None = None
    values: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be nonnegative")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        rule = self.rule if self.rule is not None else gauss_rule(self.degree + 1, self.dim)
        object.__setattr__(self, "rule", rule)
        vals, grads = self.tabulate(rule.nodes)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "grads", grads)

    @property
    def size(self) -> int:
        return (self.degree + 1) ** self.dim

    def tabulate(self, points):
        """Mode values ``(size, npts)`` and gradients ``(dim, size, npts)`` at ``points``."""
        pts = np.asarray(points, dtype=float)
        if self.dim == 1:
            pts = pts.reshape(-1)
            v, d = modal_values(self.degree, pts)
            return v, d[None]
        pts = pts.reshape(-1, 2)
        vx, dx = modal_values(self.degree, pts[:, 0])
        vy, dy = modal_values(self.degree, pts[:, 1])
        n = self.degree + 1
        vals = (vx[:, None, :] * vy[None, :, :]).reshape(n * n, -1)
        gx = (dx[:, None, :] * vy[None, :, :]).reshape(n * n, -1)
        gy = (vx[:, None, :] * dy[None, :, :]).reshape(n * n, -1)
        return vals, np.stack([gx, gy])


def eval_basis(spec: BasisSpec, point):
    """Values and reference gradients of every mode at a single point.

    Returns ``(values, gradients)`` with shapes ``(size,)`` and ``(size, dim)``.
    """
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    if pt.shape != (spec.dim,):
        raise ValueError(f"expected a point with {spec.dim} coordinate(s)")
    if np.any(np.abs(pt) > 1.0 + 1e-12):
        raise ValueError("point lies outside the reference element")
    vals, grads = spec.tabulate(pt[None, :] if spec.dim == 2 else pt)
    return vals[:, 0], grads[:, :, 0].T
