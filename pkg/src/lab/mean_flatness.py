"""
Mean flatness of weighted point measures.

For a measure mu, a ball B_r(x) and 0 <= k < n,

    D^k(x, r) = r^(-k-2) inf_L int_{B_r(x)} dist(y, L)^2 dmu(y)

over affine k-planes L. The infimum is attained by the plane through the
barycenter spanned by the top k eigenvectors of the second-moment matrix, so
D^k = r^(-k-2) times the sum of the n - k smallest moment eigenvalues.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from src.lab.errors import (AdmissibilityError, ConfigError, EmptyMeasureError,
                            InstanceTooLargeError)
from src.lab.field_core import SegregatedField
from src.lab.frequency import smoothed_at
from src.lab.quadrature import require_admissible
from src.lab.singular_set import JUNCTION, detect

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_ATOMS = 30


@dataclass
class PointMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise ConfigError('measure.weights', f'{len(self.weights)} weights for {len(self.points)} atoms')
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ConfigError('measure.weights', 'weights must be finite and nonnegative')

    @classmethod
    def from_points(cls, points, weights=None) -> 'PointMeasure':
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.size == 0:
            raise ConfigError('measure.points', 'no atoms given')
        if weights is None:
            weights = np.ones(len(points))
        return cls(points, weights)

    @classmethod
    def from_dict(cls, data: Dict) -> 'PointMeasure':
        """Accepts {'atoms': [{'point': [...], 'weight': w}, ...]} or {'points': [...], 'weights': [...]}"""
        if 'atoms' in data:
            atoms = data['atoms']
            if not atoms:
                raise ConfigError('measure.atoms', 'no atoms given')
            points = [a['point'] for a in atoms]
            weights = [a.get('weight', 1.0) for a in atoms]
            return cls(points, weights)
        if 'points' not in data:
            raise ConfigError('measure', "expected 'atoms' or 'points'")
        return cls.from_points(data['points'], data.get('weights'))

    def to_dict(self) -> Dict:
        return {'atoms': [{'point': p.tolist(), 'weight': float(w)} for p, w in zip(self.points, self.weights)]}

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def in_ball(self, x, r: float) -> np.ndarray:
        """Mask of atoms strictly inside B_r(x)"""
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(self.points - x, axis=1) < r

    def restrict(self, x, r: float) -> 'PointMeasure':
        mask = self.in_ball(x, r)
        return PointMeasure(self.points[mask], self.weights[mask])

    def scaled(self, factor) -> 'PointMeasure':
        return PointMeasure(self.points, self.weights * np.asarray(factor, dtype=float))


@dataclass
class AffinePlane:
    point: np.ndarray
    directions: np.ndarray  # (k, n), orthonormal rows

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, len(self.point))

    @property
    def dimension(self) -> int:
        return len(self.directions)

    def distance(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float)) - self.point
        along = y @ self.directions.T if self.dimension else np.zeros((len(y), 0))
        residual = y - along @ self.directions if self.dimension else y
        return np.linalg.norm(residual, axis=1)

    def to_dict(self) -> Dict:
        return {'point': self.point.tolist(), 'directions': self.directions.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> 'AffinePlane':
        directions = np.asarray(data.get('directions', []), dtype=float)
        if directions.size:
            q, _ = np.linalg.qr(directions.T)
            directions = q.T
        return cls(data['point'], directions.reshape(-1, len(data['point'])))


@dataclass
class FlatnessRecord:
    center: Tuple[float, ...]
    radius: float
    k: int
    mass: float
    barycenter: Tuple[float, ...]
    eigenvalues: List[float]
    eigenvectors: List[List[float]]
    value: float
    plane: AffinePlane

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'radius': self.radius,
            'k': self.k,
            'mass': self.mass,
            'barycenter': list(self.barycenter),
            'eigenvalues': self.eigenvalues,
            'eigenvectors': self.eigenvectors,
            'value': self.value,
            'plane': self.plane.to_dict(),
        }

    def to_row(self) -> Dict:
        row = {'radius': self.radius, 'k': self.k, 'mass': self.mass, 'value': self.value}
        for i, c in enumerate(self.center):
            row[f'x{i}'] = c
        for i, v in enumerate(self.eigenvalues):
            row[f'xi{i + 1}'] = v
        return row


def barycenter_moments(mu: PointMeasure, x, r: float) -> Tuple[np.ndarray, np.ndarray]:
    inside = mu.restrict(x, r)
    if inside.mass <= 0:
        raise EmptyMeasureError(f'no mass in B_{r:g}({np.asarray(x).tolist()})')
    bar = (inside.points * inside.weights[:, None]).sum(axis=0) / inside.mass
    centered = inside.points - bar
    moments = (centered * inside.weights[:, None]).T @ centered
    return bar, 0.5 * (moments + moments.T)


def mean_flatness(mu: PointMeasure, x, r: float, k: int) -> FlatnessRecord:
    n = mu.dim
    if not 0 <= k < n:
        raise ConfigError('flatness.k', f'k must satisfy 0 <= k < {n}, got {k}')
    x = np.asarray(x, dtype=float)
    inside = mu.restrict(x, r)
    if inside.mass <= 0:
        return FlatnessRecord(tuple(x.tolist()), float(r), k, 0.0, tuple(x.tolist()), [0.0] * n,
                              np.eye(n).tolist(), 0.0, AffinePlane(x, np.eye(n)[:k]))

    bar, moments = barycenter_moments(mu, x, r)
    values, vectors = np.linalg.eigh(moments)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]
    value = float(values[k:].sum() / r ** (k + 2))
    return FlatnessRecord(tuple(x.tolist()), float(r), k, inside.mass, tuple(bar.tolist()),
                          values.tolist(), vectors.T.tolist(), value, AffinePlane(bar, vectors[:, :k].T))


def _direction(angles: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit direction and an orthonormal basis of its complement, smooth in the angles"""
    if n == 2:
        (t,) = angles
        d = np.array([math.cos(t), math.sin(t)])
        return d, np.array([[-math.sin(t), math.cos(t)]])
    t, p = angles
    d = np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])
    e1 = np.array([math.cos(t) * math.cos(p), math.cos(t) * math.sin(p), -math.sin(t)])
    e2 = np.array([-math.sin(p), math.cos(p), 0.0])
    return d, np.stack([e1, e2])


def brute_force_flatness(mu: PointMeasure, x, r: float, k: int, restarts: int = 4) -> float:
    """
    Direct minimization of r^(-k-2) sum w dist(y, L)^2 over points (k = 0) or
    lines (k = 1): a parameter grid followed by Nelder-Mead from the best starts.
    """
    inside = mu.restrict(x, r)
    n = mu.dim
    if n not in (2, 3) or k not in (0, 1):
        raise ConfigError('flatness.k', f'brute force handles n in (2, 3) and k in (0, 1), got n={n}, k={k}')
    if len(inside.points) > BRUTE_FORCE_MAX_ATOMS:
        raise InstanceTooLargeError(f'{len(inside.points)} atoms in the ball, limit {BRUTE_FORCE_MAX_ATOMS}')
    if inside.mass <= 0 or len(inside.points) == 1:
        return 0.0

    pts, w = inside.points, inside.weights
    scale = r ** (k + 2)
    x = np.asarray(x, dtype=float)

    if k == 0:
        def objective(p):
            return float((w * ((pts - p) ** 2).sum(axis=1)).sum())

        axes = [np.linspace(c - r, c + r, 9) for c in x]
        starts = [np.array(c) for c in itertools.product(*axes)]
    else:
        angle_dims = n - 1

        def objective(p):
            d, complement = _direction(p[:angle_dims], n)
            base = p[angle_dims:] @ complement
            rel = pts - base
            return float((w * ((rel ** 2).sum(axis=1) - (rel @ d) ** 2)).sum())

        if n == 2:
            angle_grid = [(t,) for t in np.linspace(0, math.pi, 72, endpoint=False)]
        else:
            angle_grid = list(itertools.product(np.linspace(0, math.pi, 24), np.linspace(0, 2 * math.pi, 48, endpoint=False)))
        starts = []
        for angles in angle_grid:
            _, complement = _direction(np.array(angles), n)
            # offset grid centred on the projection of the ball center
            centre = complement @ x
            offsets = itertools.product(*[np.linspace(c - r, c + r, 7 if n == 2 else 5) for c in centre])
            starts.extend(np.concatenate([angles, off]) for off in offsets)

    values = np.array([objective(p) for p in starts])
    best = np.argsort(values)[:restarts]
    result = min(
        (minimize(objective, starts[i], method='Nelder-Mead',
                  options={'xatol': 1e-12, 'fatol': 1e-16, 'maxiter': 20000, 'maxfev': 40000})
         for i in best),
        key=lambda res: res.fun,
    )
    return float(max(result.fun, 0.0) / scale)


@dataclass
class SpanResult:
    spans: bool
    plane: AffinePlane
    chosen: List[int]
    distances: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {'spans': self.spans, 'plane': self.plane.to_dict(), 'chosen': self.chosen,
                'distances': self.distances}


def rho_span_check(points: Sequence, x, r: float, rho: float, k: Optional[int] = None) -> SpanResult:
    """
    Greedy search for k + 1 points (default k = n - 2) each at distance >= rho*r
    from the affine span of the previous ones. On success the plane is their
    k-dimensional span; on failure it is the span reached, which every point
    lies within rho*r of.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ConfigError('points', 'need at least one point')
    if not 0 < rho < 1:
        raise ConfigError('rho', f'rho must lie in (0, 1), got {rho:g}')
    n = pts.shape[1]
    k = n - 2 if k is None else k
    if not 0 <= k < n:
        raise ConfigError('k', f'k must satisfy 0 <= k < {n}, got {k}')
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(pts - x, axis=1) > r * (1 + 1e-12)):
        raise AdmissibilityError(f'points leave B_{r:g}({x.tolist()})')

    threshold = rho * r
    chosen = [0]
    directions = np.zeros((0, n))
    distances = []
    while len(chosen) < k + 1:
        plane = AffinePlane(pts[chosen[0]], directions)
        dist = plane.distance(pts)
        far = int(np.argmax(dist))
        if dist[far] < threshold:
            return SpanResult(False, plane, chosen, distances)
        step = pts[far] - pts[chosen[0]]
        if len(directions):
            step = step - (step @ directions.T) @ directions
        directions = np.vstack([directions, step / np.linalg.norm(step)])
        chosen.append(far)
        distances.append(float(dist[far]))
    return SpanResult(True, AffinePlane(pts[chosen[0]], directions), chosen, distances)


@dataclass
class SpineTubeReport:
    center: Tuple[float, ...]
    radius: float
    rho_bar: float
    checked: int
    violators: List[Tuple[float, ...]]
    max_distance: float

    @property
    def holds(self) -> bool:
        return not self.violators

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'radius': self.radius,
            'rho_bar': self.rho_bar,
            'checked': self.checked,
            'violators': [list(v) for v in self.violators],
            'max_distance': self.max_distance,
            'holds': self.holds,
        }


def spine_tube_check(u: SegregatedField, spine: AffinePlane, center, radius: float, rho_bar: float,
                     samples: Optional[Sequence] = None) -> SpineTubeReport:
    """Every junction sample inside B_radius(center) must lie within rho_bar of the spine"""
    if spine.dimension != u.dim - 2:
        raise ConfigError('spine', f'spine must be a {u.dim - 2}-plane, got dimension {spine.dimension}')
    center = np.asarray(center, dtype=float)
    require_admissible(u.grid, center, radius)
    if samples is None:
        samples = detect(u).junctions
    locations = [np.asarray(s.location) for s in samples if s.classification == JUNCTION]
    locations = [p for p in locations if np.linalg.norm(p - center) < radius]
    distances = spine.distance(np.array(locations)) if locations else np.zeros(0)
    violators = [tuple(p.tolist()) for p, d in zip(locations, distances) if d > rho_bar]
    if violators:
        logger.warning(f"{len(violators)} junction samples outside the {rho_bar:g}-tube of the spine")
    return SpineTubeReport(tuple(center.tolist()), float(radius), float(rho_bar), len(locations), violators,
                           float(distances.max()) if len(distances) else 0.0)


@dataclass
class SpineOscillation:
    value: float
    evaluated: int
    skipped: int
    low: float
    high: float

    def to_dict(self) -> Dict:
        return {'value': self.value, 'evaluated': self.evaluated, 'skipped': self.skipped,
                'low': self.low, 'high': self.high}


def spine_points(spine: AffinePlane, center, radius: float, per_direction: int = 5) -> np.ndarray:
    """Grid of spine points within radius of the projection of center"""
    center = np.asarray(center, dtype=float)
    base = spine.point
    if spine.dimension:
        base = base + ((center - spine.point) @ spine.directions.T) @ spine.directions
    if spine.dimension == 0:
        return base[None, :]
    ticks = np.linspace(-radius, radius, per_direction)
    coeffs = np.array(list(itertools.product(ticks, repeat=spine.dimension)))
    coeffs = coeffs[np.linalg.norm(coeffs, axis=1) <= radius + 1e-12]
    return base + coeffs @ spine.directions


def spine_oscillation(u: SegregatedField, spine: AffinePlane, center, radius: float,
                      scales: Sequence[float], per_direction: int = 5) -> SpineOscillation:
    """sup - inf of I_phi(y, s) over spine points y in the region and the given scales"""
    values = []
    skipped = 0
    for y in spine_points(spine, center, radius, per_direction):
        for s in scales:
            try:
                freq = smoothed_at(u, y, s).I_phi
            except AdmissibilityError:
                skipped += 1
                continue
            if not math.isnan(freq):
                values.append(freq)
    if not values:
        raise AdmissibilityError('no admissible (point, scale) pair on the spine')
    return SpineOscillation(float(max(values) - min(values)), len(values), skipped,
                            float(min(values)), float(max(values)))
