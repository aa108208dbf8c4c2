"""
Tube volumes, the frequency-drop covering and flatness integrals.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.spatial import cKDTree
from scipy.special import gamma

from src.lab.errors import AdmissibilityError, ConfigError, EmptyMeasureError, ScalingFitError
from src.lab.field_core import Grid, SegregatedField
from src.lab.frequency import pinching, smoothed_at
from src.lab.mean_flatness import PointMeasure, mean_flatness

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 5
RADIUS = 'radius'
DROP = 'drop'
BUDGET = 'budget'


def additive_constant(A: float) -> float:
    """c(A) for the additively corrected frequency used by the covering"""
    return 2.0 + A + A ** 2


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / gamma(k / 2 + 1)


@dataclass
class MinkowskiCurve:
    rhos: List[float]
    volumes: List[float]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    confidence: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'rhos': self.rhos,
            'volumes': self.volumes,
            'slope': self.slope,
            'intercept': self.intercept,
            'confidence': self.confidence,
        }

    def to_rows(self) -> List[Dict]:
        return [{'rho': r, 'volume': v} for r, v in zip(self.rhos, self.volumes)]


def fit_scaling_exponent(curve: MinkowskiCurve) -> Tuple[float, float]:
    """(slope, half-width of the 95% interval) of log V against log rho"""
    rhos = np.asarray(curve.rhos, dtype=float)
    volumes = np.asarray(curve.volumes, dtype=float)
    keep = (volumes > 0) & (rhos > 0)
    if keep.sum() < MIN_FIT_SAMPLES:
        raise ScalingFitError(f'need {MIN_FIT_SAMPLES} samples with positive volume, got {int(keep.sum())}')
    lx, ly = np.log(rhos[keep]), np.log(volumes[keep])
    if np.ptp(lx) == 0 or np.ptp(ly) == 0:
        raise ScalingFitError('degenerate data: constant scale or volume')
    fit = stats.linregress(lx, ly)
    width = float(stats.t.ppf(0.975, len(lx) - 2) * fit.stderr)
    curve.slope, curve.intercept, curve.confidence = float(fit.slope), float(fit.intercept), width
    return float(fit.slope), width


def tube_volume_curve(S: Sequence, grid: Grid, rhos: Sequence[float],
                      region_mask: Optional[np.ndarray] = None) -> MinkowskiCurve:
    """Cell volume of the nodes of the region within distance rho of S, per rho"""
    points = np.atleast_2d(np.asarray(S, dtype=float))
    if points.size == 0:
        raise EmptyMeasureError('tube volume of an empty set')
    rhos = sorted(float(r) for r in rhos)
    if rhos[0] < grid.spacing * (1 - 1e-9):
        raise AdmissibilityError(f'tube radius {rhos[0]:g} below h = {grid.spacing:g}')
    mask = grid.domain_mask if region_mask is None else region_mask & grid.domain_mask
    nodes = grid.points_of(mask)
    dist, _ = cKDTree(points).query(nodes, distance_upper_bound=rhos[-1] * (1 + 1e-9))
    volumes = [float((dist <= r).sum() * grid.cell_volume) for r in rhos]
    curve = MinkowskiCurve(rhos, volumes)
    try:
        fit_scaling_exponent(curve)
    except ScalingFitError as e:
        logger.warning(f"No scaling fit for the tube curve: {e}")
    return curve


def minkowski_content(curve: MinkowskiCurve, codim: int) -> float:
    """max over rho of V / (omega_codim rho^codim)"""
    omega = unit_ball_volume(codim)
    return float(max(v / (omega * r ** codim) for r, v in zip(curve.rhos, curve.volumes)))


def local_minkowski_constant(curve: MinkowskiCurve, r: float, n: int) -> float:
    """sup over rho of V / (r^(n-2) rho^2)"""
    return float(max(v / (r ** (n - 2) * rho ** 2) for rho, v in zip(curve.rhos, curve.volumes)))


@dataclass
class CoverBall:
    center: Tuple[float, ...]
    radius: float
    flag: str
    generation: int
    frequency: float

    def to_dict(self) -> Dict:
        return {'center': list(self.center), 'radius': self.radius, 'flag': self.flag,
                'generation': self.generation, 'frequency': self.frequency}


@dataclass
class Covering:
    balls: List[CoverBall]
    U: float
    delta: float
    rho: float
    terminal_scale: float
    dim: int
    budget_exceeded: bool = False
    flags: List[str] = field(default_factory=list)

    @property
    def packing_sum(self) -> float:
        return float(sum(b.radius ** (self.dim - 2) for b in self.balls))

    @property
    def degenerate(self) -> bool:
        """No ball stopped by a frequency drop"""
        return bool(self.balls) and all(b.flag == RADIUS for b in self.balls)

    def covers(self, points) -> bool:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        centers = np.array([b.center for b in self.balls])
        radii = np.array([b.radius for b in self.balls])
        dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        return bool(np.all((dist <= radii[None, :] * (1 + 1e-12)).any(axis=1)))

    def vitali_disjoint(self) -> bool:
        """Balls shrunk by 1/5 are pairwise disjoint"""
        centers = np.array([b.center for b in self.balls])
        radii = np.array([b.radius for b in self.balls]) / 5.0
        for i in range(len(self.balls)):
            gaps = np.linalg.norm(centers[i + 1:] - centers[i], axis=1) - radii[i + 1:] - radii[i]
            if np.any(gaps < 0):
                return False
        return True

    def to_dict(self) -> Dict:
        return {
            'balls': [b.to_dict() for b in self.balls],
            'U': self.U,
            'delta': self.delta,
            'rho': self.rho,
            'terminal_scale': self.terminal_scale,
            'packing_sum': self.packing_sum,
            'ball_count': len(self.balls),
            'degenerate': self.degenerate,
            'budget_exceeded': self.budget_exceeded,
            'flags': self.flags,
        }


def _greedy_cover(points: np.ndarray, radius: float) -> List[Tuple[int, np.ndarray]]:
    """(center index, member indices) pairs; centers taken in lexicographic order"""
    order = np.lexsort(points.T[::-1])
    tree = cKDTree(points)
    assigned = np.zeros(len(points), dtype=bool)
    balls = []
    for i in order:
        if assigned[i]:
            continue
        members = np.array([j for j in tree.query_ball_point(points[i], radius * (1 + 1e-12))
                            if not assigned[j]], dtype=int)
        assigned[members] = True
        balls.append((int(i), members))
    return balls


def inductive_cover(u: SegregatedField, D: Sequence, r: float, s: float, delta: float, A: float = 0.0,
                    rho: float = 0.25, budget: int = 500) -> Covering:
    """
    Cover D by balls that either reach the terminal scale s or see the
    corrected smoothed frequency drop to U - delta, where U is its sup over D
    at scale r. Radii go r, max(rho r, s), ..., s.
    """
    points = np.atleast_2d(np.asarray(D, dtype=float))
    if points.size == 0:
        raise EmptyMeasureError('nothing to cover')
    if not 0 < s < r:
        raise ConfigError('covering.terminal_scale', f'need 0 < s < r, got s={s:g}, r={r:g}')
    if delta <= 0:
        raise ConfigError('covering.delta', f'delta must be positive, got {delta:g}')
    if not 0 < rho < 1:
        raise ConfigError('covering.rho', f'rho must lie in (0, 1), got {rho:g}')

    c = additive_constant(A)
    cache: Dict[Tuple[int, float], float] = {}

    def frequency(i: int, t: float) -> float:
        key = (i, t)
        if key not in cache:
            try:
                cache[key] = smoothed_at(u, points[i], t, c).I_phi_A
            except AdmissibilityError:
                cache[key] = float('nan')
        return cache[key]

    top = [frequency(i, r) for i in range(len(points))]
    U = float(np.nanmax(top)) if not np.all(np.isnan(top)) else float('nan')
    if math.isnan(U):
        logger.warning("No admissible frequency at the top scale; the covering can only stop by radius")

    balls: List[CoverBall] = []
    active = np.arange(len(points))
    t = float(r)
    generation = 0
    budget_exceeded = False
    while len(active):
        groups = _greedy_cover(points[active], t)
        terminal_now = []
        refine = []
        for center_local, members_local in groups:
            center = active[center_local]
            members = active[members_local]
            sup = np.nanmax([frequency(i, t) for i in members]) if len(members) else float('nan')
            if t <= s:
                flag = RADIUS
            elif not math.isnan(U) and not math.isnan(sup) and sup <= U - delta:
                flag = DROP
            else:
                flag = None
            ball = CoverBall(tuple(points[center].tolist()), t, flag or '', generation, float(sup))
            (terminal_now if flag else refine).append((ball, members))

        if len(balls) + len(terminal_now) + len(refine) > budget:
            budget_exceeded = True
            for ball, _ in refine:
                ball.flag = BUDGET
            balls.extend(b for b, _ in terminal_now + refine)
            logger.warning(f"Covering budget of {budget} balls exceeded at radius {t:g}; returning a partial covering")
            break

        balls.extend(b for b, _ in terminal_now)
        pending = np.concatenate([m for _, m in refine]) if refine else np.zeros(0, dtype=int)
        if terminal_now and len(pending):
            centers = np.array([b.center for b, _ in terminal_now])
            radii = np.array([b.radius for b, _ in terminal_now])
            dist = np.linalg.norm(points[pending][:, None, :] - centers[None, :, :], axis=2)
            pending = pending[~(dist <= radii[None, :] * (1 + 1e-12)).any(axis=1)]
        active = np.sort(pending)
        t = max(rho * t, s)
        generation += 1

    covering = Covering(balls, U, float(delta), float(rho), float(s), u.dim, budget_exceeded)
    if budget_exceeded:
        covering.flags.append('budget')
    if covering.degenerate and len(points) > 1:
        covering.flags.append('degenerate')
        logger.warning("Every covering ball stopped at the terminal scale; no frequency drop was seen")
    logger.info(f"Covering with {len(balls)} balls over {generation + 1} generations, U={U:.4f}")
    return covering


def _flatness_breakpoints(mu: PointMeasure, z: np.ndarray, t: float) -> List[float]:
    dist = np.linalg.norm(mu.points - z, axis=1)
    inner = np.unique(dist[(dist > 0) & (dist < t)])
    return inner.tolist()


def reifenberg_integral(mu: PointMeasure, x, t: float, k: int, nodes: int = 20,
                        method: str = 'quadrature') -> float:
    """
    int_{B_t(x)} int_0^t D^k(z, s) ds/s dmu(z).

    D^k(z, .) of a discrete measure vanishes below the distance from z to its
    nearest other atom and is s^(-k-2) times a constant between consecutive
    atom distances, so the scale integral runs piecewise over those intervals,
    either by Gauss-Legendre in log s or in closed form.
    """
    if not 0 <= k < mu.dim:
        raise ConfigError('flatness.k', f'k must satisfy 0 <= k < {mu.dim}, got {k}')
    if method not in ('quadrature', 'exact'):
        raise ConfigError('method', f"unknown method {method!r}")
    if t <= 0:
        raise ConfigError('t', f't must be positive, got {t:g}')
    x = np.asarray(x, dtype=float)
    inside = mu.in_ball(x, t)
    if mu.weights[inside].sum() <= 0:
        return 0.0
    gl_nodes, gl_weights = leggauss(nodes)

    total = 0.0
    for z, w in zip(mu.points[inside], mu.weights[inside]):
        if w == 0:
            continue
        edges = _flatness_breakpoints(mu, z, t) + [float(t)]
        inner = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid = math.sqrt(a * b)
            level = mean_flatness(mu, z, mid, k).value * mid ** (k + 2)
            if level <= 0:
                continue
            if method == 'exact':
                inner += level * (a ** -(k + 2) - b ** -(k + 2)) / (k + 2)
            else:
                la, lb = math.log(a), math.log(b)
                sigma = 0.5 * (lb - la) * gl_nodes + 0.5 * (lb + la)
                values = [mean_flatness(mu, z, math.exp(v), k).value for v in sigma]
                inner += 0.5 * (lb - la) * float(np.dot(gl_weights, values))
        total += w * inner
    return float(total)


@dataclass
class JonesBoundReport:
    center: Tuple[float, ...]
    radius: float
    k: int
    left: float
    right: float
    ratio: Optional[float]
    pinchings: List[float]
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'radius': self.radius,
            'k': self.k,
            'left': self.left,
            'right': self.right,
            'ratio': self.ratio,
            'pinchings': self.pinchings,
            'flags': self.flags,
        }


def jones_bound_report(u: SegregatedField, mu: PointMeasure, x, r: float, A: float = 0.0,
                       outer_factor: float = 32.0) -> JonesBoundReport:
    """
    D^{n-2}(x, r) against r^(2-n) int_{B_r(x)} W^{3+A+A^2}_{r, 32r}(z) dmu(z),
    with the empirical ratio of the two.
    """
    n = u.dim
    k = n - 2
    x = np.asarray(x, dtype=float)
    left = mean_flatness(mu, x, r, k).value
    c = 3.0 + A + A ** 2
    inside = mu.in_ball(x, r)
    pinchings = []
    right = 0.0
    for z, w in zip(mu.points[inside], mu.weights[inside]):
        value = pinching(u, z, r, outer_factor * r, c)
        pinchings.append(float(value))
        right += w * value
    right *= r ** (2 - n)
    flags = []
    if left == 0:
        flags.append('zero_left')
    if right > 0:
        ratio = left / right
    else:
        ratio = None
        flags.append('zero_right')
    return JonesBoundReport(tuple(x.tolist()), float(r), k, float(left), float(right), ratio, pinchings, flags)
