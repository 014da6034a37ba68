"""Cell-centered tensor-product grids with homogeneous Neumann structure.

Fields live at cell centers x_j = (j + 1/2) h and are stored as C-ordered
arrays (axis 0 slowest). Boundary conditions enter through mirrored ghost
cells: the ghost value equals the first interior value, which is the same
as imposing zero flux through every boundary face. All difference operators
below are built from that single convention, so

* ``laplacian_neumann`` is exactly the divergence of the face-centered
  differences of the field (assembled that way, not merely equal to it),
* ``divergence_of_flux`` telescopes: its integral vanishes whenever the
  boundary faces carry zero flux,
* ``integrate`` is the midpoint rule, exact for per-cell affine integrands.

Sampled at cell centers, cos(pi x / L) is an exact eigenvector of the
discrete Neumann Laplacian with eigenvalue -(2/h^2)(1 - cos(pi h / L)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DIM = 4
MIN_CELLS = 3

__all__ = [
    "TensorGrid",
    "ScalarField",
    "integrate",
    "laplacian_neumann",
    "gradient_centered",
    "divergence_of_flux",
    "face_differences",
]


@dataclass(frozen=True)
class TensorGrid:
    """Uniform tensor-product grid on a box [0, L_1] x ... x [0, L_d].

    Parameters
    ----------
    cells : tuple of int
        Cell count per axis, at least ``MIN_CELLS`` each, dimension 1..4.
    lengths : tuple of float
        Physical edge lengths, strictly positive.
    """

    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        lengths = tuple(float(L) for L in self.lengths)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)
        if not 1 <= len(cells) <= MAX_DIM:
            raise ValueError(f"dimension must be 1..{MAX_DIM}, got {len(cells)}")
        if len(lengths) != len(cells):
            raise ValueError("cells and lengths must have equal dimension")
        if any(c < MIN_CELLS for c in cells):
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {cells}")
        if any(not np.isfinite(L) or L <= 0.0 for L in lengths):
            raise ValueError(f"lengths must be positive and finite, got {lengths}")

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / c for L, c in zip(self.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for h in self.spacing:
            vol *= h
        return vol

    @property
    def total_cells(self) -> int:
        n = 1
        for c in self.cells:
            n *= c
        return n

    def axis_centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def center_mesh(self) -> list[np.ndarray]:
        """Cell-center coordinates as broadcastable open mesh arrays."""
        axes = [self.axis_centers(i) for i in range(self.dim)]
        return list(np.ix_(*axes))


@dataclass
class ScalarField:
    """One floating value per cell, shaped like ``grid.cells`` in C order."""

    grid: TensorGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.cells:
            raise ValueError(
                f"field shape {vals.shape} does not match grid cells {self.grid.cells}"
            )
        self.values = vals

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


def integrate(f: ScalarField) -> float:
    """Midpoint-rule integral over the whole box."""
    return float(np.sum(f.values)) * f.grid.cell_volume


# -- array-level kernels ----------------------------------------------------
# dynamics and weakform call these directly in hot loops; the public
# ScalarField wrappers below delegate to them.


def _face_differences(grid: TensorGrid, a: np.ndarray) -> list[np.ndarray]:
    out = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        shape = list(grid.cells)
        shape[axis] += 1
        flux = np.zeros(shape)
        interior = [slice(None)] * grid.dim
        interior[axis] = slice(1, -1)
        flux[tuple(interior)] = np.diff(a, axis=axis) / h
        out.append(flux)
    return out


def _divergence(grid: TensorGrid, fluxes: Sequence[np.ndarray]) -> np.ndarray:
    if len(fluxes) != grid.dim:
        raise ValueError(f"expected {grid.dim} flux components, got {len(fluxes)}")
    div = np.zeros(grid.cells)
    for axis, flux in enumerate(fluxes):
        expected = list(grid.cells)
        expected[axis] += 1
        if flux.shape != tuple(expected):
            raise ValueError(
                f"flux component {axis} has shape {flux.shape}, "
                f"expected {tuple(expected)}"
            )
        div += np.diff(flux, axis=axis) / grid.spacing[axis]
    return div


def _laplacian(grid: TensorGrid, a: np.ndarray) -> np.ndarray:
    # literally the divergence of the face differences, so the two public
    # operators agree bitwise and mass bookkeeping telescopes the same way
    return _divergence(grid, _face_differences(grid, a))


def _gradient(grid: TensorGrid, a: np.ndarray) -> list[np.ndarray]:
    comps = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        padded = _mirror_pad(a, axis)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        comps.append((padded[tuple(hi)] - padded[tuple(lo)]) / (2.0 * h))
    return comps


def _mirror_pad(a: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * a.ndim
    width[axis] = (1, 1)
    return np.pad(a, width, mode="edge")


# -- public operators -------------------------------------------------------


def face_differences(f: ScalarField) -> list[np.ndarray]:
    """Per-axis face arrays of (f[j+1] - f[j]) / h; boundary faces are zero.

    Axis ``i`` has shape ``cells`` with ``cells[i] + 1`` along ``i``.
    """
    return _face_differences(f.grid, f.values)


def laplacian_neumann(f: ScalarField) -> ScalarField:
    """Discrete Laplacian with mirrored ghost cells (zero-flux walls)."""
    return ScalarField(f.grid, _laplacian(f.grid, f.values))


def gradient_centered(f: ScalarField) -> list[np.ndarray]:
    """Centered gradient with mirrored ghosts, one array per axis.

    At boundary cells the mirrored ghost reduces the stencil to
    (f[1] - f[0]) / (2h), so the normal component vanishes through the wall
    itself; for Neumann-compatible fields this keeps second-order accuracy.
    """
    return _gradient(f.grid, f.values)


def divergence_of_flux(grid: TensorGrid, fluxes: Sequence[np.ndarray]) -> ScalarField:
    """Conservative divergence of per-axis face fluxes.

    With zero boundary faces the per-axis sums telescope, so the integral of
    the result is zero to round-off regardless of the interior values.
    """
    return ScalarField(grid, _divergence(grid, fluxes))
