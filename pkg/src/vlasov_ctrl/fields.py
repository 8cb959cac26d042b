"""Charge assembly and the 1D electric-field quadrature.

The field solve is the symmetrized cumulative rule

    E_i = (E+_i - E-_i) / 2,   E+_i = sum_{j<=i} rho_j dx,
                               E-_i = sum_{j>=i} rho_j dx,

whose two one-sided sums cancel asymmetry errors; under exact neutrality it
equals the one-sided cumulative integral. The same quadrature kernel is
reused by the adjoint reaction term, which is "of the same type as the
electric field" but has no vanishing total, so only the field solve checks
neutrality.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import OccupationTensor, PhaseGrid, SpeciesParticles, cell_indices
from .errors import GridMismatch, NeutralityViolated

DEFAULT_NEUTRAL_TOL = 1e-10


@dataclass
class SpatialField:
    """Values at the n_x cell centers of a PhaseGrid."""

    grid: PhaseGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (self.grid.n_x,):
            raise ValueError(f"values shape {self.values.shape} != ({self.grid.n_x},)")


def _chunk_slices(n: int, chunks: int):
    step = -(-n // chunks) if n else 0
    return [slice(i, min(i + step, n)) for i in range(0, n, step)] if step else []


def _bincount_chunked(idx: np.ndarray, minlength: int, threads: int):
    """Deterministic (fixed merge order) possibly-threaded bincount."""
    if threads <= 1 or idx.size < 1 << 16:
        return np.bincount(idx, minlength=minlength)
    slices = _chunk_slices(idx.size, threads)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda s: np.bincount(idx[s], minlength=minlength), slices))
    out = parts[0]
    for p in parts[1:]:
        out += p
    return out


def assemble_occupation(parts: SpeciesParticles, grid: PhaseGrid, threads: int = 1):
    """Bin a particle list into per-cell counts.

    Returns (OccupationTensor, escaped_count); particles with a velocity
    component outside (-v_max, v_max) are excluded from the tensor and
    tallied as escaped.
    """
    if parts.n == 0:
        return OccupationTensor(grid, np.zeros((grid.n_x, grid.n_v, grid.n_v))), 0
    i, l, m, inside = cell_indices(parts.x, parts.v1, parts.v2, grid)
    nv = grid.n_v
    flat = ((i[inside] - 1) * nv + (l[inside] - 1)) * nv + (m[inside] - 1)
    counts = _bincount_chunked(flat, grid.n_x * nv * nv, threads)
    tensor = counts.astype(np.float64).reshape(grid.n_x, nv, nv)
    escaped = int(parts.n - inside.sum())
    return OccupationTensor(grid, tensor), escaped


def position_counts(x: np.ndarray, grid: PhaseGrid, threads: int = 1) -> np.ndarray:
    """Per-x-cell counts of all particles regardless of velocity."""
    ix = np.minimum(np.floor(x / grid.dx).astype(np.int64), grid.n_x - 1)
    return _bincount_chunked(ix, grid.n_x, threads).astype(np.float64)


def charge_density(f_plus: OccupationTensor, f_minus: OccupationTensor,
                   w_plus: float, w_minus: float) -> SpatialField:
    """Continuum charge density from per-species occupation tensors.

    rho_i = dv^2 * (w+ * sum_lm counts+ - w- * sum_lm counts-); the dv^2
    converts the velocity sum into the velocity integral, the weights
    convert counts into densities, so rho is independent of N_f.
    """
    if f_plus.grid != f_minus.grid:
        raise GridMismatch("occupation tensors on different grids")
    grid = f_plus.grid
    dv2 = grid.dv * grid.dv
    col_p = f_plus.counts.sum(axis=(1, 2))
    col_m = f_minus.counts.sum(axis=(1, 2))
    return SpatialField(grid, dv2 * (w_plus * col_p - w_minus * col_m))


def charge_density_from_positions(ions: SpeciesParticles, electrons: SpeciesParticles,
                                  grid: PhaseGrid, threads: int = 1) -> SpatialField:
    """Charge density binned from raw positions of *all* particles.

    Unlike the tensor route this keeps the charge of velocity-escaped
    particles, so exact neutrality (equal counts and weights per species)
    survives escapes. The forward solver uses this path.
    """
    col_p = position_counts(ions.x, grid, threads)
    col_m = position_counts(electrons.x, grid, threads)
    dv2 = grid.dv * grid.dv
    return SpatialField(grid, dv2 * (ions.weight * col_p - electrons.weight * col_m))


def symmetrized_cumulative(values: np.ndarray, dx: float) -> np.ndarray:
    """(left cumulative - right cumulative)/2 of values*dx, fixed order.

    Ascending scan for the left sum, descending for the right, so results
    are bit-reproducible.
    """
    left = np.cumsum(values) * dx
    right = np.cumsum(values[::-1])[::-1] * dx
    return 0.5 * (left - right)


def electric_field(rho: SpatialField, tol_neutral: float = DEFAULT_NEUTRAL_TOL) -> SpatialField:
    """Electric field by the symmetrized cumulative quadrature.

    Precondition: |sum rho dx| <= tol_neutral relative to sum |rho| dx;
    a violation signals corrupted particle bookkeeping and raises
    NeutralityViolated.
    """
    grid = rho.grid
    total = float(rho.values.sum() * grid.dx)
    scale = float(np.abs(rho.values).sum() * grid.dx)
    if scale > 0.0 and abs(total) > tol_neutral * scale:
        raise NeutralityViolated(
            f"total charge {total:.3e} exceeds {tol_neutral:.1e} * {scale:.3e}")
    return SpatialField(grid, symmetrized_cumulative(rho.values, grid.dx))


def interpolate_periodic(values: np.ndarray, x, grid: PhaseGrid):
    """Linear interpolation of cell-centered values at positions x.

    Periodic closure: the segment between the last and first cell centers
    wraps across the x = 0 seam.
    """
    s = np.asarray(x) / grid.dx - 0.5
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    i0 = np.mod(i0, grid.n_x)
    i1 = np.mod(i0 + 1, grid.n_x)
    return (1.0 - frac) * values[i0] + frac * values[i1]


def electric_energy(e_values: np.ndarray, grid: PhaseGrid) -> float:
    """Integral of |E|^2 over the spatial domain (rectangle rule)."""
    return float(np.sum(e_values * e_values) * grid.dx)
