"""
Interface extraction, junction detection and point classification.

Labels are 1 + the index of the positive component at a node. Interior nodes
where every component vanishes take the label of the nearest positive node,
so the interface is the set of grid cells whose corners carry at least two
labels. A junction is a point where three or more labels meet.
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from src.lab.errors import AdmissibilityError, ZeroHeightError
from src.lab.field_core import SegregatedField
from src.lab.frequency import calibrate_multiplicative, frequency_record, smoothed_at

logger = logging.getLogger(__name__)

# Frequency gap in dimensions 2 and 3; classification splits it in half.
FREQUENCY_GAP = 0.5
JUNCTION_THRESHOLD = 1.0 + FREQUENCY_GAP / 2
LABEL_RADIUS_CELLS = 8
CLUSTER_RADIUS_CELLS = 3
CLUSTER_EXTENT_CELLS = 12
ORDER_FIT_CELLS = (4, 6, 8)
ORDER_CALIBRATION_CELLS = (4, 6, 8, 10, 12)
MARGIN_CELLS = 16

WALL = 'Wall'
JUNCTION = 'Junction'


@dataclass
class InterfaceCell:
    index: Tuple[int, ...]
    center: Tuple[float, ...]
    labels: Tuple[int, ...]

    def to_dict(self) -> Dict:
        return {'index': list(self.index), 'center': list(self.center), 'labels': list(self.labels)}


@dataclass
class SingularSample:
    location: Tuple[float, ...]
    classification: str
    order: float
    labels: Tuple[int, ...]
    radius: float
    label_signal: bool = False
    frequency_signal: bool = False

    def to_dict(self) -> Dict:
        out = asdict(self)
        out['location'] = list(self.location)
        out['labels'] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> 'SingularSample':
        return cls(tuple(data['location']), data['classification'], float(data['order']),
                   tuple(data['labels']), float(data['radius']),
                   bool(data.get('label_signal', False)), bool(data.get('frequency_signal', False)))


def filled_labels(u: SegregatedField) -> np.ndarray:
    """Labels on interior nodes with zeros filled from the nearest positive node; -1 elsewhere"""
    labels = u.labels
    interior = u.grid.interior_mask
    positive = labels > 0
    out = np.full(labels.shape, -1, dtype=int)
    if not positive.any():
        return out
    _, nearest = ndimage.distance_transform_edt(~positive, return_indices=True)
    filled = labels[tuple(nearest)]
    out[interior] = filled[interior]
    return out


def _cell_corners(values: np.ndarray) -> List[np.ndarray]:
    """Arrays of corner values for every grid cell (one array per corner)"""
    dim = values.ndim
    corners = []
    for offset in itertools.product((0, 1), repeat=dim):
        sl = tuple(slice(o, values.shape[i] - 1 + o) for i, o in enumerate(offset))
        corners.append(values[sl])
    return corners


def _interface_cells_mask(u: SegregatedField) -> Tuple[np.ndarray, List[np.ndarray]]:
    filled = filled_labels(u)
    corners = _cell_corners(filled)
    valid = np.logical_and.reduce([c > 0 for c in corners])
    stacked = np.stack(corners, axis=0)
    mixed = (stacked != stacked[0]).any(axis=0)
    return valid & mixed, corners


def extract_interface(u: SegregatedField) -> List[InterfaceCell]:
    mask, corners = _interface_cells_mask(u)
    h = u.grid.spacing
    origin = np.asarray(u.grid.origin)
    cells = []
    for idx in np.argwhere(mask):
        labels = tuple(sorted({int(c[tuple(idx)]) for c in corners}))
        center = origin + h * (idx + 0.5)
        cells.append(InterfaceCell(tuple(int(i) for i in idx), tuple(float(c) for c in center), labels))
    return cells


def _label_distances(u: SegregatedField) -> Dict[int, np.ndarray]:
    filled = filled_labels(u)
    h = u.grid.spacing
    out = {}
    for k in range(1, u.n_components + 1):
        target = filled == k
        if target.any():
            out[k] = ndimage.distance_transform_edt(~target, sampling=h)
    return out


def _cluster(points: np.ndarray, weights: np.ndarray, h: float) -> List[np.ndarray]:
    """One weighted centroid per compact cluster; elongated clusters are split every 3h"""
    if len(points) == 0:
        return []
    tree = cKDTree(points)
    pairs = tree.query_pairs(np.sqrt(points.shape[1]) * h * 1.01, output_type='ndarray')
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(points))])

    centroids = []
    for root in np.unique(roots):
        members = np.flatnonzero(roots == root)
        pts, w = points[members], weights[members]
        extent = np.ptp(pts, axis=0).max() if len(pts) > 1 else 0.0
        center = (pts * w[:, None]).sum(axis=0) / w.sum()
        if extent <= CLUSTER_EXTENT_CELLS * h:
            centroids.append(center)
            continue
        # elongated: slabs of width 3h across the principal axis
        centered = pts - center
        _, vectors = np.linalg.eigh((centered * w[:, None]).T @ centered)
        t = centered @ vectors[:, -1]
        slab = np.floor((t - t.min()) / (CLUSTER_RADIUS_CELLS * h)).astype(int)
        for s in np.unique(slab):
            near = slab == s
            centroids.append((pts[near] * w[near, None]).sum(axis=0) / w[near].sum())
    return centroids


def junction_candidates(u: SegregatedField, r: float) -> List[Tuple[float, ...]]:
    """Clustered centers of interface cells whose r-neighbourhood meets three or more labels"""
    h = u.grid.spacing
    if r < 2 * h * (1 - 1e-9):
        raise AdmissibilityError(f'detection radius {r:g} below 2h = {2 * h:g}')
    mask, _ = _interface_cells_mask(u)
    if not mask.any():
        return []
    distances = _label_distances(u)
    counts = np.zeros(mask.shape, dtype=int)
    for dist in distances.values():
        near = np.logical_or.reduce([c <= r for c in _cell_corners(dist)])
        counts += near
    hits = mask & (counts >= 3)
    idx = np.argwhere(hits)
    points = np.asarray(u.grid.origin) + h * (idx + 0.5)
    weights = counts[hits].astype(float)
    return [tuple(float(c) for c in p) for p in _cluster(points, weights, h)]


def local_labels(u: SegregatedField, x, radius: float) -> Tuple[int, ...]:
    """Distinct positive labels on nodes within radius of x"""
    grid = u.grid
    x = np.asarray(x, dtype=float)
    lo = np.clip(np.floor(grid.index_of(x - radius)).astype(int), 0, None)
    hi = np.minimum(np.ceil(grid.index_of(x + radius)).astype(int) + 1, grid.shape)
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    offsets = [grid.axes[i][sl[i]] - x[i] for i in range(grid.dim)]
    dist = np.sqrt(sum(m ** 2 for m in np.meshgrid(*offsets, indexing='ij')))
    labels = u.labels[sl][dist <= radius]
    return tuple(sorted(int(v) for v in np.unique(labels) if v > 0))


def vanishing_order(u: SegregatedField, x) -> float:
    """
    Extrapolated I(x, 0+): exp(L r^2) I_b(x, r) at r = 4h, 6h, 8h fitted
    linearly in r^2, with L calibrated on 4h..12h.
    """
    x = np.asarray(x, dtype=float)
    h = u.grid.spacing
    margin = u.grid.distance_to_boundary(x)
    if margin < MARGIN_CELLS * h:
        raise AdmissibilityError(f'margin {margin:g} at {x.tolist()} below {MARGIN_CELLS}h')
    radii = [c * h for c in ORDER_CALIBRATION_CELLS]
    records = [frequency_record(u, x, r) for r in radii]
    if all(not rec.H > 1e-300 for rec in records[:len(ORDER_FIT_CELLS)]):
        raise ZeroHeightError(f'field vanishes near {x.tolist()}: no interface point')
    boundary = [rec.boundary_I for rec in records]
    lam = calibrate_multiplicative(radii, boundary)
    fit_radii = np.array(radii[:len(ORDER_FIT_CELLS)])
    values = np.exp(lam * fit_radii ** 2) * np.array(boundary[:len(ORDER_FIT_CELLS)])
    usable = ~np.isnan(values)
    if usable.sum() < 2:
        raise ZeroHeightError(f'height vanishes at the fit radii around {x.tolist()}')
    slope, intercept = np.polyfit(fit_radii[usable] ** 2, values[usable], 1)
    return float(intercept)


def classify_point(u: SegregatedField, x) -> SingularSample:
    x = np.asarray(x, dtype=float)
    h = u.grid.spacing
    radius = LABEL_RADIUS_CELLS * h
    labels = local_labels(u, x, radius)
    if len(labels) < 2:
        raise AdmissibilityError(f'{x.tolist()} is not on the interface (labels {list(labels)})')
    order = vanishing_order(u, x)
    by_frequency = order >= JUNCTION_THRESHOLD
    by_labels = len(labels) >= 3
    kind = JUNCTION if (by_frequency or by_labels) else WALL
    return SingularSample(tuple(x.tolist()), kind, order, labels, radius, by_labels, by_frequency)


@dataclass
class ClearingReport:
    center: Tuple[float, ...]
    radius: float
    eps: float
    frequency: float
    interface_hit: bool
    applicable: bool
    holds: bool

    def to_dict(self) -> Dict:
        out = asdict(self)
        out['center'] = list(self.center)
        return out


def _interface_tree(u: SegregatedField) -> Optional[cKDTree]:
    mask, _ = _interface_cells_mask(u)
    if not mask.any():
        return None
    return cKDTree(np.asarray(u.grid.origin) + u.grid.spacing * (np.argwhere(mask) + 0.5))


def clearing_check(u: SegregatedField, x, r: float, eps: float,
                   interface: Optional[cKDTree] = None) -> ClearingReport:
    """If I_phi(x, r) < eps the interface must miss B_{r/16}(x)"""
    x = np.asarray(x, dtype=float)
    freq = smoothed_at(u, x, r).I_phi
    tree = interface if interface is not None else _interface_tree(u)
    hit = False
    if tree is not None:
        hit = bool(tree.query_ball_point(x, r / 16.0))
    applicable = bool(freq < eps)
    holds = (not hit) if applicable else True
    return ClearingReport(tuple(x.tolist()), float(r), float(eps), float(freq), hit, applicable, holds)


@dataclass
class ClearingSweep:
    reports: List[ClearingReport]
    violations: int
    threshold_estimate: float

    def to_dict(self) -> Dict:
        return {
            'reports': [rep.to_dict() for rep in self.reports],
            'violations': self.violations,
            'threshold_estimate': self.threshold_estimate,
        }


def clearing_sweep(u: SegregatedField, points: Sequence, r: float, eps: float) -> ClearingSweep:
    """
    clearing_check over many points. threshold_estimate is the smallest I_phi
    seen at a point whose B_{r/16} meets the interface, i.e. the largest eps
    for which the sweep has no violations.
    """
    tree = _interface_tree(u)
    reports = []
    for p in points:
        try:
            reports.append(clearing_check(u, p, r, eps, tree))
        except AdmissibilityError:
            continue
    violations = sum(1 for rep in reports if not rep.holds)
    hit_freqs = [rep.frequency for rep in reports if rep.interface_hit and not np.isnan(rep.frequency)]
    threshold = float(min(hit_freqs)) if hit_freqs else float('inf')
    return ClearingSweep(reports, violations, threshold)


@dataclass
class DetectionResult:
    samples: List[SingularSample]
    interface_cells: int
    excluded: int
    candidates: List[Tuple[float, ...]] = field(default_factory=list)

    @property
    def junctions(self) -> List[SingularSample]:
        return [s for s in self.samples if s.classification == JUNCTION]

    @property
    def walls(self) -> List[SingularSample]:
        return [s for s in self.samples if s.classification == WALL]

    def to_dict(self) -> Dict:
        return {
            'samples': [s.to_dict() for s in self.samples],
            'interface_cells': self.interface_cells,
            'excluded': self.excluded,
            'junction_count': len(self.junctions),
            'wall_count': len(self.walls),
        }


def detect(u: SegregatedField, junction_radius: Optional[float] = None, wall_stride: int = 8,
           margin_cells: int = MARGIN_CELLS) -> DetectionResult:
    """
    Junction candidates plus every wall_stride-th two-label interface cell
    among those at least margin_cells*h from the boundary and clear of the
    junction candidates, each classified. Cells inside the margin are
    excluded and counted.
    """
    h = u.grid.spacing
    radius = junction_radius if junction_radius is not None else 2 * h
    cells = extract_interface(u)
    candidates = junction_candidates(u, radius)
    samples = []
    excluded = 0

    def margin_ok(p):
        return u.grid.distance_to_boundary(p) >= margin_cells * h

    for p in candidates:
        if not margin_ok(p):
            excluded += 1
            continue
        try:
            samples.append(classify_point(u, p))
        except (AdmissibilityError, ZeroHeightError) as e:
            logger.warning(f"Skipping junction candidate {p}: {e}")
            excluded += 1

    junction_tree = cKDTree(np.array(candidates)) if candidates else None
    walls = []
    for cell in cells:
        if len(cell.labels) != 2:
            continue
        p = np.array(cell.center)
        if not margin_ok(p):
            excluded += 1
            continue
        if junction_tree is not None and junction_tree.query(p)[0] < LABEL_RADIUS_CELLS * h:
            continue
        walls.append(p)
    for p in walls[::max(wall_stride, 1)]:
        try:
            samples.append(classify_point(u, p))
        except (AdmissibilityError, ZeroHeightError) as e:
            logger.debug(f"Skipping wall cell {p.tolist()}: {e}")
            excluded += 1

    logger.info(f"Detected {sum(s.classification == JUNCTION for s in samples)} junctions and "
                f"{sum(s.classification == WALL for s in samples)} wall samples "
                f"({len(cells)} interface cells, {excluded} excluded)")
    return DetectionResult(samples, len(cells), excluded, candidates)
