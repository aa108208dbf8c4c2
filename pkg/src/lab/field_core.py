"""
Grids, segregated fields and the homogeneous oracle maps.

A SegregatedField stores N nonnegative components on a uniform Cartesian
grid. At each node at most one component is positive, so the field is a
discrete map into the tree Sigma_N (N half-axes glued at the origin).
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, optimize
from scipy.spatial import cKDTree

from src.lab.errors import AdmissibilityError, ConfigError

logger = logging.getLogger(__name__)

GRID_KINDS = ('rectangle', 'box', 'disk', 'ball', 'annulus')


def project_to_sigma(values) -> np.ndarray:
    """Nearest point of Sigma_N: clip negatives, keep the largest entry (lowest index on ties)"""
    y = np.clip(np.asarray(values, dtype=float), 0.0, None)
    out = np.zeros_like(y)
    if y.size == 0:
        return out
    k = int(np.argmax(y))
    out[k] = y[k]
    return out


def project_components(components: np.ndarray) -> np.ndarray:
    """Vectorized project_to_sigma over the leading (component) axis"""
    y = np.clip(components, 0.0, None)
    winner = np.argmax(y, axis=0)
    keep = np.arange(y.shape[0]).reshape((-1,) + (1,) * (y.ndim - 1)) == winner
    return np.where(keep, y, 0.0)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid with a domain mask; boundary nodes are derived from the mask"""
    dim: int
    shape: Tuple[int, ...]
    spacing: float
    origin: Tuple[float, ...]
    domain_mask: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError('grid.dim', f'must be 2 or 3, got {self.dim}')
        if not self.spacing > 0:
            raise ConfigError('grid.spacing', 'must be positive')
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != self.dim or len(self.origin) != self.dim:
            raise ConfigError('grid.shape', 'shape and origin must have dim entries')
        mask = np.asarray(self.domain_mask, dtype=bool)
        if mask.shape != shape:
            raise ConfigError('grid.domain_mask', f'shape {mask.shape} does not match {shape}')
        if not mask.any():
            raise ConfigError('grid.domain_mask', 'domain is empty')
        _, pieces = ndimage.label(mask)
        if pieces != 1:
            raise ConfigError('grid.domain_mask', f'domain must be connected, found {pieces} components')
        mask.setflags(write=False)
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'origin', tuple(float(o) for o in self.origin))
        object.__setattr__(self, 'domain_mask', mask)

    # Constructors

    @classmethod
    def rectangle(cls, lower: Sequence[float], upper: Sequence[float], spacing: float) -> 'Grid':
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ConfigError('grid.upper', 'upper corner must exceed lower corner on every axis')
        shape = tuple(int(round(span / spacing)) + 1 for span in upper - lower)
        return cls(len(shape), shape, spacing, tuple(lower), np.ones(shape, dtype=bool))

    @classmethod
    def disk(cls, center: Sequence[float], radius: float, spacing: float,
             inner_radius: float = 0.0) -> 'Grid':
        """Disk (2D) or ball (3D), optionally with a hole of inner_radius"""
        center = np.asarray(center, dtype=float)
        if radius <= 0 or inner_radius < 0 or inner_radius >= radius:
            raise ConfigError('grid.radius', 'need 0 <= inner_radius < radius')
        cells = int(math.ceil(radius / spacing)) + 1
        origin = center - cells * spacing
        shape = (2 * cells + 1,) * center.size
        axes = [origin[i] + spacing * np.arange(shape[i]) for i in range(center.size)]
        mesh = np.meshgrid(*axes, indexing='ij')
        dist = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
        eps = 1e-9 * spacing
        mask = dist <= radius + eps
        if inner_radius > 0:
            mask &= dist >= inner_radius - eps
        return cls(center.size, shape, spacing, tuple(origin), mask)

    @classmethod
    def from_spec(cls, spec: Dict) -> 'Grid':
        """Build a grid from a JSON grid spec ({'kind': ..., 'spacing': ...})"""
        kind = spec.get('kind')
        if kind not in GRID_KINDS:
            raise ConfigError('grid.kind', f'expected one of {GRID_KINDS}, got {kind!r}')
        if 'spacing' not in spec:
            raise ConfigError('grid.spacing', 'missing')
        h = float(spec['spacing'])
        if kind in ('rectangle', 'box'):
            if 'lower' not in spec or 'upper' not in spec:
                raise ConfigError('grid.lower', 'rectangle grids need lower and upper corners')
            return cls.rectangle(spec['lower'], spec['upper'], h)
        center = spec.get('center', [0.0, 0.0, 0.0] if kind == 'ball' else [0.0, 0.0])
        if kind == 'annulus':
            return cls.disk(center, float(spec.get('radius', 1.0)), h, float(spec.get('inner_radius', 0.5)))
        return cls.disk(center, float(spec.get('radius', 1.0)), h)

    # Derived geometry

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def axes(self) -> List[np.ndarray]:
        return [self.origin[i] + self.spacing * np.arange(self.shape[i]) for i in range(self.dim)]

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing='ij'))

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([ax[-1] for ax in self.axes])

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """Domain nodes whose axis neighbours all lie in the domain (the unknowns)"""
        structure = ndimage.generate_binary_structure(self.dim, 1)
        interior = ndimage.binary_erosion(self.domain_mask, structure=structure, border_value=0)
        interior.setflags(write=False)
        return interior

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        boundary = self.domain_mask & ~self.interior_mask
        boundary.setflags(write=False)
        return boundary

    @cached_property
    def _wall_tree(self) -> cKDTree:
        walls = np.argwhere(~self.interior_mask)
        return cKDTree(np.asarray(self.origin) + self.spacing * walls)

    def points_of(self, mask: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.argwhere(mask)

    def index_of(self, x) -> np.ndarray:
        """Fractional node index of a point"""
        return (np.asarray(x, dtype=float) - np.asarray(self.origin)) / self.spacing

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.origin)) and np.all(x <= self.upper))

    def distance_to_boundary(self, x) -> float:
        """Distance from x to the discrete boundary (nearest non-interior node)"""
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            return 0.0
        return float(self._wall_tree.query(x)[0])

    def nearest_node(self, x) -> Tuple[int, ...]:
        idx = np.rint(self.index_of(x)).astype(int)
        return tuple(np.clip(idx, 0, np.asarray(self.shape) - 1))

    def describe(self) -> Dict:
        return {
            'dim': self.dim,
            'shape': list(self.shape),
            'spacing': self.spacing,
            'origin': list(self.origin),
            'domain_nodes': int(self.domain_mask.sum()),
            'interior_nodes': int(self.interior_mask.sum()),
        }


@dataclass(frozen=True, eq=False)
class SegregatedField:
    """
    N components over a grid plus their eigenvalue estimates.

    Values outside the interior mask are forced to zero (Dirichlet data).
    The Sigma_N constraint is not enforced here so that raw iterates can be
    inspected; use sigma_violations() or project() for that.
    """
    grid: Grid
    components: np.ndarray
    eigenvalues: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        comps = np.array(self.components, dtype=float)
        if comps.ndim == self.grid.dim:
            comps = comps[np.newaxis]
        if comps.shape[1:] != self.grid.shape:
            raise ConfigError('components', f'shape {comps.shape[1:]} does not match grid {self.grid.shape}')
        comps[:, ~self.grid.interior_mask] = 0.0
        eig = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if eig.size != comps.shape[0]:
            raise ConfigError('eigenvalues', f'expected {comps.shape[0]} values, got {eig.size}')
        comps.setflags(write=False)
        eig.setflags(write=False)
        object.__setattr__(self, 'components', comps)
        object.__setattr__(self, 'eigenvalues', eig)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues.max())

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues.min())

    def project(self) -> 'SegregatedField':
        return SegregatedField(self.grid, project_components(self.components), self.eigenvalues, False)

    def with_eigenvalues(self, eigenvalues, normalized: Optional[bool] = None) -> 'SegregatedField':
        flag = self.normalized if normalized is None else normalized
        return SegregatedField(self.grid, self.components, eigenvalues, flag)

    def sigma_violations(self) -> int:
        """Number of nodes with a negative entry or more than one positive entry"""
        negative = (self.components < 0).any(axis=0)
        crowded = (self.components > 0).sum(axis=0) > 1
        return int((negative | crowded).sum())

    # Cached derived arrays

    @cached_property
    def labels(self) -> np.ndarray:
        """1 + index of the positive component at each node, 0 where all vanish"""
        positive = self.components > 0
        labels = np.where(positive.any(axis=0), np.argmax(positive, axis=0) + 1, 0)
        labels.setflags(write=False)
        return labels

    @cached_property
    def magnitude(self) -> np.ndarray:
        return self.components.sum(axis=0) if self.sigma_violations() == 0 else \
            np.sqrt((self.components ** 2).sum(axis=0))

    @cached_property
    def magnitude_sq(self) -> np.ndarray:
        return (self.components ** 2).sum(axis=0)

    @cached_property
    def magnitude_sq_spline(self) -> np.ndarray:
        """Cubic spline coefficients of |u|^2 for off-node evaluation"""
        return ndimage.spline_filter(self.magnitude_sq, order=3)

    @cached_property
    def magnitude_sq_gradient(self) -> np.ndarray:
        return np.stack(np.gradient(self.magnitude_sq, self.grid.spacing), axis=0)

    @cached_property
    def eigen_mass_density(self) -> np.ndarray:
        """sum_k lambda_k u_k^2"""
        return np.tensordot(self.eigenvalues, self.components ** 2, axes=1)

    def _axis_neighbours(self, values: np.ndarray, axis: int, shift: int) -> np.ndarray:
        # Neighbour value along an axis; nodes past the grid edge read as zero.
        out = np.zeros_like(values)
        src = [slice(None)] * values.ndim
        dst = [slice(None)] * values.ndim
        if shift > 0:
            src[axis], dst[axis] = slice(1, None), slice(None, -1)
        else:
            src[axis], dst[axis] = slice(None, -1), slice(1, None)
        out[tuple(dst)] = values[tuple(src)]
        return out

    @cached_property
    def energy_density(self) -> np.ndarray:
        """
        Nodal |grad u|^2 from squared edge differences of the signed extension.

        Across an edge joining two different positive labels the magnitudes add,
        as if one side carried the opposite sign. Each axis contributes the mean
        of its two adjacent edges.
        """
        h = self.grid.spacing
        mag = self.magnitude
        lab = self.labels
        density = np.zeros_like(mag)
        for axis in range(self.dim):
            edge_shape = list(mag.shape)
            edge_shape[axis] -= 1
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[axis], hi[axis] = slice(None, -1), slice(1, None)
            a, b = mag[tuple(lo)], mag[tuple(hi)]
            la, lb = lab[tuple(lo)], lab[tuple(hi)]
            opposite = (la > 0) & (lb > 0) & (la != lb)
            diff = np.where(opposite, a + b, b - a) / h
            sq = diff ** 2
            fwd = np.zeros_like(mag)
            bwd = np.zeros_like(mag)
            count = np.zeros_like(mag)
            fwd[tuple(lo)] = sq
            bwd[tuple(hi)] = sq
            count[tuple(lo)] += 1
            count[tuple(hi)] += 1
            density += (fwd + bwd) / np.maximum(count, 1)
        return density

    @cached_property
    def signed_gradient(self) -> np.ndarray:
        """
        Centered-difference gradient of |u| where neighbours carrying another
        positive label count as -|u|. Zero nodes adopt the label of the larger
        neighbour along the axis.
        """
        h = self.grid.spacing
        mag = self.magnitude
        lab = self.labels
        grads = []
        for axis in range(self.dim):
            right_mag = self._axis_neighbours(mag, axis, +1)
            left_mag = self._axis_neighbours(mag, axis, -1)
            right_lab = self._axis_neighbours(lab, axis, +1)
            left_lab = self._axis_neighbours(lab, axis, -1)
            ref = np.where(lab > 0, lab, np.where(right_mag >= left_mag, right_lab, left_lab))
            right = np.where((right_lab > 0) & (right_lab != ref), -right_mag, right_mag)
            left = np.where((left_lab > 0) & (left_lab != ref), -left_mag, left_mag)
            grads.append((right - left) / (2 * h))
        return np.stack(grads, axis=0)

    def l2_norms(self) -> List[float]:
        return l2_norms(self)


def l2_norms(u: SegregatedField) -> List[float]:
    """Discrete L2 norm of each component, cell-volume weighted"""
    sq = (u.components ** 2).reshape(u.n_components, -1).sum(axis=1) * u.grid.cell_volume
    return [float(v) for v in np.sqrt(sq)]


def normalize_components(components: np.ndarray, cell_volume: float) -> np.ndarray:
    norms = np.sqrt((components ** 2).reshape(components.shape[0], -1).sum(axis=1) * cell_volume)
    norms = np.where(norms > 0, norms, 1.0)
    return components / norms.reshape((-1,) + (1,) * (components.ndim - 1))


# Oracles

@dataclass(frozen=True)
class OracleSpec:
    """Homogeneous map r^{m/2}|cos(m theta/2)| split into its m nodal sectors"""
    m: int
    rotation: float = 0.0
    center: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ConfigError('oracle.m', f'must be an integer >= 2, got {self.m}')

    @classmethod
    def from_dict(cls, data: Dict) -> 'OracleSpec':
        if 'm' not in data:
            raise ConfigError('oracle.m', 'missing')
        center = data.get('center')
        return cls(int(data['m']), float(data.get('rotation', 0.0)),
                   tuple(float(c) for c in center) if center is not None else None)

    def to_dict(self) -> Dict:
        return {'m': self.m, 'rotation': self.rotation,
                'center': list(self.center) if self.center is not None else None}


def _polar(points_last_two: Tuple[np.ndarray, np.ndarray], rotation: float):
    a, b = points_last_two
    radius = np.hypot(a, b)
    theta = np.mod(np.arctan2(b, a) - rotation, 2 * np.pi)
    return radius, theta


def oracle_sectors(a: np.ndarray, b: np.ndarray, m: int, rotation: float = 0.0):
    """(sector index, value) of the homogeneous map at offsets (a, b) from its center"""
    radius, theta = _polar((a, b), rotation)
    sector = np.mod(np.rint(theta * m / (2 * np.pi)).astype(int), m)
    value = radius ** (m / 2.0) * np.abs(np.cos(m * theta / 2.0))
    return sector, value


def make_oracle(grid: Grid, spec: OracleSpec) -> SegregatedField:
    """Sector decomposition of the homogeneous map; eigenvalues are all zero"""
    center = np.asarray(spec.center if spec.center is not None else _domain_center(grid), dtype=float)
    if center.size != grid.dim:
        raise ConfigError('oracle.center', f'needs {grid.dim} coordinates')
    node = grid.nearest_node(center)
    if not grid.contains(center) or not grid.domain_mask[node]:
        raise AdmissibilityError('oracle center lies outside the domain')
    mesh = grid.mesh
    a = mesh[-2] - center[-2]
    b = mesh[-1] - center[-1]
    sector, value = oracle_sectors(a, b, spec.m, spec.rotation)
    components = np.stack([np.where(sector == k, value, 0.0) for k in range(spec.m)], axis=0)
    return SegregatedField(grid, components, np.zeros(spec.m), normalized=False)


def _domain_center(grid: Grid) -> np.ndarray:
    return grid.points_of(grid.domain_mask).mean(axis=0)


# Sampling

def sample_field(u: SegregatedField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of every component at points (M, dim), projected onto Sigma_N"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lower = np.asarray(u.grid.origin)
    slack = 1e-9 * u.grid.spacing
    if np.any(points < lower - slack) or np.any(points > u.grid.upper + slack):
        raise AdmissibilityError('point outside the grid bounding box')
    coords = u.grid.index_of(points).T
    values = np.stack([
        ndimage.map_coordinates(c, coords, order=1, mode='nearest') for c in u.components
    ], axis=1)
    return project_components(values.T).T


def eval_field(u: SegregatedField, x) -> np.ndarray:
    return sample_field(u, np.asarray(x, dtype=float)[np.newaxis])[0]


# Blowups

def blowup_rescale(u: SegregatedField, x, rho: float, resolution: int = 64) -> SegregatedField:
    """
    Field y -> c u(x + rho y) on a unit disk/ball grid with `resolution` cells
    per unit length, where c gives unit average L2 mass over B_1.
    """
    x = np.asarray(x, dtype=float)
    h = u.grid.spacing
    if rho < 4 * h:
        raise AdmissibilityError(f'blowup radius {rho:g} below the resolution floor 4h = {4 * h:g}')
    if u.grid.distance_to_boundary(x) < rho:
        raise AdmissibilityError(f'ball of radius {rho:g} at {x.tolist()} leaves the domain')
    unit = Grid.disk(np.zeros(u.dim), 1.0, 1.0 / resolution)
    inside = unit.interior_mask
    targets = x + rho * unit.points_of(inside)
    samples = sample_field(u, targets)
    components = np.zeros((u.n_components,) + unit.shape)
    components[:, inside] = samples.T
    mass = (components ** 2).sum() * unit.cell_volume
    ball_volume = math.pi ** (u.dim / 2) / math.gamma(u.dim / 2 + 1)
    if mass > 0:
        components *= math.sqrt(ball_volume / mass)
    return SegregatedField(unit, components, u.eigenvalues * rho ** 2, normalized=False)


def best_fit_oracle(v: SegregatedField, m: int, samples: int = 64) -> Tuple[float, float]:
    """
    Rotation of the degree-m/2 oracle closest to v in magnitude.

    Returns (rotation, distance), the distance being the L2 gap between unit-mass
    magnitudes over the domain.
    """
    grid = v.grid
    mask = grid.interior_mask
    center = _domain_center(grid)
    a = grid.mesh[-2][mask] - center[-2]
    b = grid.mesh[-1][mask] - center[-1]
    target = v.magnitude[mask]
    target = target / max(np.sqrt((target ** 2).sum()), 1e-300)

    def gap(rotation: float) -> float:
        _, ref = oracle_sectors(a, b, m, rotation)
        ref = ref / max(np.sqrt((ref ** 2).sum()), 1e-300)
        return float(np.sqrt(((target - ref) ** 2).sum()))

    period = 2 * np.pi / m
    grid_angles = np.linspace(0.0, period, samples, endpoint=False)
    coarse = [gap(t) for t in grid_angles]
    best = grid_angles[int(np.argmin(coarse))]
    step = period / samples
    res = optimize.minimize_scalar(gap, bounds=(best - step, best + step), method='bounded',
                                   options={'xatol': 1e-6})
    rotation = float(np.mod(res.x, period))
    return rotation, float(res.fun)
