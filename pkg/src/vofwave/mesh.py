"""Uniform periodic meshes on intervals and rectangles."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Faces:
    """Face table for one coordinate axis.

    ``left[f]`` is the element on the low side of face f (outward normal
    +e_axis), ``right[f]`` the element on the high side (normal -e_axis).
    """

    axis: int
    left: np.ndarray
    right: np.ndarray
    measure: float

    def __len__(self):
        return len(self.left)


@dataclass(frozen=True)
class PeriodicMesh:
    dim: int
    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        for lo, hi, n in zip(self.lower, self.upper, self.cells):
            if n < 1:
                raise ValueError(f"cells per axis must be positive, got {n}")
            if not lo < hi:
                raise ValueError(f"bounds must satisfy lower < upper, got ({lo}, {hi})")

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def num_elements(self) -> int:
        return int(np.prod(self.cells))

    @property
    def element_measure(self) -> float:
        return float(np.prod(self.h))

    @property
    def jacobian(self) -> float:
        """det of the affine map from the reference element."""
        return float(np.prod([hh / 2.0 for hh in self.h]))

    @property
    def domain_measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in zip(self.lower, self.upper)]))

    def element_index(self, *ijk):
        """Row-major element number; the last axis runs fastest."""
        if self.dim == 1:
            return np.mod(ijk[0], self.cells[0])
        i, j = ijk
        return np.mod(i, self.cells[0]) * self.cells[1] + np.mod(j, self.cells[1])

    def element_multi_index(self, e):
        e = np.asarray(e)
        if self.dim == 1:
            return (e,)
        return (e // self.cells[1], e % self.cells[1])

    def lower_corners(self) -> np.ndarray:
        """Lower-left corner of every element, shape ``(num_elements, dim)``."""
        idx = self.element_multi_index(np.arange(self.num_elements))
        return np.stack([lo + hh * i for lo, hh, i in zip(self.lower, self.h, idx)], axis=1)

    def centers(self) -> np.ndarray:
        return self.lower_corners() + 0.5 * np.asarray(self.h)

    def map_points(self, ref_points) -> np.ndarray:
        """Physical coordinates of reference points in every element.

        Returns shape ``(num_elements, npts, dim)``.
        """
        ref = np.asarray(ref_points, dtype=float).reshape(-1, self.dim)
        c = self.centers()
        return c[:, None, :] + 0.5 * np.asarray(self.h)[None, None, :] * ref[None, :, :]

    def faces(self, axis: int) -> Faces:
        n = self.cells
        if self.dim == 1:
            left = np.arange(n[0])
            right = self.element_index(left + 1)
            return Faces(0, left, right, 1.0)
        I, J = np.meshgrid(np.arange(n[0]), np.arange(n[1]), indexing="ij")
        I, J = I.ravel(), J.ravel()
        left = self.element_index(I, J)
        if axis == 0:
            right = self.element_index(I + 1, J)
            measure = self.h[1]
        else:
            right = self.element_index(I, J + 1)
            measure = self.h[0]
        return Faces(axis, left, right, measure)

    def all_faces(self) -> list:
        return [self.faces(a) for a in range(self.dim)]

    @property
    def num_faces(self) -> int:
        return self.dim * self.num_elements

    def neighbors(self, e: int) -> set:
        out = set()
        for fc in self.all_faces():
            out.update(int(r) for r in fc.right[fc.left == e])
            out.update(int(l) for l in fc.left[fc.right == e])
        return out


def build_mesh(dim: int, bounds, cells_per_axis) -> PeriodicMesh:
    """Uniform periodic mesh; ``bounds`` is ``(lo, hi)`` or one pair per axis."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = np.tile(b, (dim, 1))
    cells = np.broadcast_to(np.asarray(cells_per_axis), (dim,))
    if np.any(cells < 1):
        raise ValueError(f"cells_per_axis must be >= 1, got {cells_per_axis}")
    if np.any(cells < 2):
        warnings.warn("a single cell along an axis couples the element to itself through the periodic face")
    return PeriodicMesh(
        dim,
        tuple(float(x) for x in b[:, 0]),
        tuple(float(x) for x in b[:, 1]),
        tuple(int(c) for c in cells),
    )
