"""
Ball, annulus and sphere quadrature on uniform grids.

Volume rules weight each node by the mean of a radial profile over s^n
subsample points of its cell. Sphere rules are a trapezoid rule in 2D and
Gauss-Legendre x trapezoid in 3D.
"""

import math
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import ndimage

from src.lab.errors import AdmissibilityError
from src.lab.field_core import Grid

MIN_RADIUS_CELLS = 4
BOUNDARY_MARGIN_CELLS = 2


def admissible_range(grid: Grid, x) -> Tuple[float, float]:
    """(smallest, largest) radius usable at x"""
    h = grid.spacing
    return MIN_RADIUS_CELLS * h, grid.distance_to_boundary(x) - BOUNDARY_MARGIN_CELLS * h


def require_admissible(grid: Grid, x, r: float):
    low, high = admissible_range(grid, x)
    if r < low * (1 - 1e-9):
        raise AdmissibilityError(f'radius {r:g} below the resolution floor {low:g}')
    if r > high:
        raise AdmissibilityError(f'ball B_{r:g}({np.round(x, 6).tolist()}) leaves the domain '
                                 f'(largest admissible radius {high:g})')


def cutoff(t: np.ndarray) -> np.ndarray:
    """phi: 1 on [0, 1/2], 2 - 2t on [1/2, 1], 0 beyond"""
    return np.clip(2.0 - 2.0 * t, 0.0, 1.0)


def cutoff_derivative(t: np.ndarray) -> np.ndarray:
    return np.where((t > 0.5) & (t < 1.0), -2.0, 0.0)


class BallQuadrature:
    """Nodal weights for radial profiles around a center, restricted to the enclosing block"""

    def __init__(self, grid: Grid, center, radius: float, subsamples: int = 3):
        self.grid = grid
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        h = grid.spacing
        lo = np.floor(grid.index_of(self.center - radius) - 1).astype(int)
        hi = np.ceil(grid.index_of(self.center + radius) + 1).astype(int) + 1
        lo = np.clip(lo, 0, None)
        hi = np.minimum(hi, grid.shape)
        self.slices = tuple(slice(a, b) for a, b in zip(lo, hi))
        axes = [grid.axes[i][self.slices[i]] - self.center[i] for i in range(grid.dim)]
        self.offsets = np.stack(np.meshgrid(*axes, indexing='ij'), axis=0)
        self.distance = np.sqrt((self.offsets ** 2).sum(axis=0))
        sub = ((np.arange(subsamples) + 0.5) / subsamples - 0.5) * h
        shifts = np.stack(np.meshgrid(*([sub] * grid.dim), indexing='ij'), axis=-1).reshape(-1, grid.dim)
        self._sub_distance = np.stack([
            np.sqrt(sum((self.offsets[i] + s[i]) ** 2 for i in range(grid.dim))) for s in shifts
        ], axis=0)

    @property
    def unit_radial(self) -> np.ndarray:
        with np.errstate(invalid='ignore', divide='ignore'):
            nu = self.offsets / self.distance
        return np.nan_to_num(nu)

    def weights(self, profile: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return self.grid.cell_volume * profile(self._sub_distance).mean(axis=0)

    def integrate(self, values: np.ndarray, profile: Callable[[np.ndarray], np.ndarray]) -> float:
        """int values(y) profile(|y - x|) dy with values given on the full grid"""
        return float((self.block(values) * self.weights(profile)).sum())

    def block(self, values: np.ndarray) -> np.ndarray:
        """Restriction to the enclosing block; leading axes (components, gradient directions) are kept"""
        return values[(Ellipsis,) + self.slices]

    # Standard profiles

    def inside(self) -> Callable:
        r = self.radius
        return lambda d: (d < r).astype(float)

    def annulus(self, inner: float, outer: float) -> Callable:
        return lambda d: ((d >= inner) & (d < outer)).astype(float)

    def smoothed(self) -> Callable:
        r = self.radius
        return lambda d: cutoff(d / r)


class SphereQuadrature:
    """Points, outward normals and weights on the sphere of radius r about x"""

    def __init__(self, center, radius: float, dim: int, spacing: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if dim == 2:
            count = max(64, int(math.ceil(8 * math.pi * radius / spacing)))
            theta = 2 * math.pi * np.arange(count) / count
            normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
            weights = np.full(count, 2 * math.pi * radius / count)
        else:
            polar = max(16, int(math.ceil(math.pi * radius / spacing)))
            azimuth = 2 * polar
            nodes, gl = leggauss(polar)
            phi = 2 * math.pi * np.arange(azimuth) / azimuth
            z = np.repeat(nodes, azimuth)
            ring = np.sqrt(1 - z ** 2)
            ph = np.tile(phi, polar)
            normals = np.stack([z, ring * np.cos(ph), ring * np.sin(ph)], axis=1)
            weights = np.repeat(gl, azimuth) * (2 * math.pi / azimuth) * radius ** 2
        self.normals = normals
        self.points = self.center + radius * normals
        self.weights = weights

    def integrate(self, values: np.ndarray) -> float:
        return float((values * self.weights).sum())


def interpolate(grid: Grid, values: np.ndarray, points: np.ndarray, order: int = 1,
                prefiltered: bool = False) -> np.ndarray:
    """Values of a nodal array (or its spline coefficients) at arbitrary points"""
    coords = grid.index_of(points).T
    # spline_filter's default boundary mode is 'mirror'; evaluation must match it
    mode = 'nearest' if order == 1 else 'mirror'
    return ndimage.map_coordinates(values, coords, order=order, mode=mode,
                                   prefilter=(order > 1 and not prefiltered))
