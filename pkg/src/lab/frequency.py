"""
Classical and smoothed frequency quantities.

For a center x and radius r:

    D   = int_{B_r} |grad u|^2             H   = int_{dB_r} |u|^2
    F   = D - int_{B_r} sum_k lambda_k u_k^2
    I   = r D / H                          G   = (r F + H) / H

The smoothed versions integrate against phi(|y - x| / r), where phi is 1 on
[0, 1/2], 2 - 2t on [1/2, 1] and 0 beyond:

    D_phi = int |grad u|^2 phi             P_phi = int sum_k lambda_k u_k^2 phi
    F_phi = D_phi - P_phi                  H_phi = -int |u|^2 |y - x|^-1 phi'
    E_phi = -int |d_nu u|^2 |y - x| phi'   I_phi = r D_phi / H_phi
    G_phi = (r F_phi + H_phi) / H_phi      I_phi^A = I_phi + A r^2
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.lab.errors import AdmissibilityError, ConfigError
from src.lab.field_core import SegregatedField
from src.lab.quadrature import (BallQuadrature, SphereQuadrature, admissible_range, cutoff,
                                cutoff_derivative, interpolate, require_admissible)

logger = logging.getLogger(__name__)

FLUX_HALF_WIDTH = 1.0 / 8.0  # in cells; the centered difference spans h/4
SANDWICH_SLACK = 1e-6


@dataclass
class FrequencyRecord:
    center: Tuple[float, ...]
    radius: float
    D: Optional[float] = None
    H: Optional[float] = None
    F: Optional[float] = None
    I: Optional[float] = None
    G: Optional[float] = None
    boundary_I: Optional[float] = None
    D_phi: Optional[float] = None
    H_phi: Optional[float] = None
    F_phi: Optional[float] = None
    E_phi: Optional[float] = None
    P_phi: Optional[float] = None
    I_phi: Optional[float] = None
    G_phi: Optional[float] = None
    I_phi_A: Optional[float] = None
    A: float = 0.0
    D_error: Optional[float] = None
    H_phi_error: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    def merge(self, other: 'FrequencyRecord') -> 'FrequencyRecord':
        values = asdict(self)
        for key, value in asdict(other).items():
            if key == 'flags':
                values['flags'] = sorted(set(self.flags) | set(other.flags))
            elif values.get(key) is None:
                values[key] = value
        values['center'] = tuple(values['center'])
        return FrequencyRecord(**values)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out['center'] = list(self.center)
        return out

    def to_row(self) -> Dict:
        row = {f'x{i}': c for i, c in enumerate(self.center)}
        for key in CSV_COLUMNS:
            row[key] = getattr(self, key)
        row['flags'] = ';'.join(self.flags)
        return row


CSV_COLUMNS = ['radius', 'D', 'H', 'F', 'I', 'G', 'boundary_I', 'D_phi', 'H_phi', 'F_phi',
               'E_phi', 'P_phi', 'I_phi', 'G_phi', 'I_phi_A', 'A', 'D_error', 'H_phi_error']


# Sphere and volume terms

def sphere_terms(u: SegregatedField, x, r: float) -> Dict[str, float]:
    """H and int_{dB_r} <d_nu u, u> from the cubic spline of |u|^2"""
    grid = u.grid
    sphere = SphereQuadrature(x, r, grid.dim, grid.spacing)
    coeffs = u.magnitude_sq_spline
    sq = interpolate(grid, coeffs, sphere.points, order=3, prefiltered=True)
    eps = FLUX_HALF_WIDTH * grid.spacing
    outer = interpolate(grid, coeffs, sphere.points + eps * sphere.normals, order=3, prefiltered=True)
    inner = interpolate(grid, coeffs, sphere.points - eps * sphere.normals, order=3, prefiltered=True)
    flux = 0.5 * (outer - inner) / (2 * eps)
    return {'H': max(sphere.integrate(sq), 0.0), 'flux': sphere.integrate(flux)}


def sphere_energy_terms(u: SegregatedField, x, r: float) -> Dict[str, float]:
    """int_{dB_r} |d_nu u|^2 and int_{dB_r} sum_k lambda_k u_k^2"""
    grid = u.grid
    sphere = SphereQuadrature(x, r, grid.dim, grid.spacing)
    grads = np.stack([interpolate(grid, g, sphere.points) for g in u.signed_gradient], axis=1)
    radial = (grads * sphere.normals).sum(axis=1)
    mass = interpolate(grid, u.eigen_mass_density, sphere.points)
    return {'normal_energy': sphere.integrate(radial ** 2), 'eigen_mass': sphere.integrate(mass)}


def ball_terms(u: SegregatedField, x, r: float) -> Dict[str, float]:
    quad = BallQuadrature(u.grid, x, r)
    inside = quad.inside()
    coarse = u.grid.cell_volume * (quad.distance < r)
    D = quad.integrate(u.energy_density, inside)
    return {
        'D': D,
        'D_coarse': float((quad.block(u.energy_density) * coarse).sum()),
        'eigen_mass': quad.integrate(u.eigen_mass_density, inside),
        'mass': quad.integrate(u.magnitude_sq, inside),
    }


def classical_at(u: SegregatedField, x, r: float) -> FrequencyRecord:
    x = np.asarray(x, dtype=float)
    require_admissible(u.grid, x, r)
    vol = ball_terms(u, x, r)
    sph = sphere_terms(u, x, r)
    D, H = vol['D'], sph['H']
    F = D - vol['eigen_mass']
    record = FrequencyRecord(center=tuple(float(c) for c in x), radius=float(r), D=D, H=H, F=F,
                             D_error=abs(D - vol['D_coarse']))
    if H > 0:
        record.I = r * D / H
        record.G = (r * F + H) / H
        record.boundary_I = r * (sph['flux'] + vol['eigen_mass']) / H
    else:
        record.I = record.G = record.boundary_I = float('nan')
        record.flags.append('zero_height')
    return record


def smoothed_terms(u: SegregatedField, x, r: float) -> Dict[str, float]:
    quad = BallQuadrature(u.grid, x, r)
    w_phi = quad.weights(lambda d: cutoff(d / r))

    def height_profile(d):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(d > 0, -cutoff_derivative(d / r) / d, 0.0)

    w_height = quad.weights(height_profile)
    w_flux = quad.weights(lambda d: -cutoff_derivative(d / r))
    w_energy = quad.weights(lambda d: -cutoff_derivative(d / r) * d)
    with np.errstate(divide='ignore', invalid='ignore'):
        coarse_height = u.grid.cell_volume * np.where(
            quad.distance > 0, -cutoff_derivative(quad.distance / r) / quad.distance, 0.0)

    nu = quad.unit_radial
    radial_grad = (quad.block(u.signed_gradient) * nu).sum(axis=0)
    half_radial_sq = 0.5 * (quad.block(u.magnitude_sq_gradient) * nu).sum(axis=0)
    sq = quad.block(u.magnitude_sq)
    return {
        'D_phi': float((quad.block(u.energy_density) * w_phi).sum()),
        'P_phi': float((quad.block(u.eigen_mass_density) * w_phi).sum()),
        'H_phi': float((sq * w_height).sum()),
        'H_phi_coarse': float((sq * coarse_height).sum()),
        'E_phi': float((radial_grad ** 2 * w_energy).sum()),
        'flux_phi': float((half_radial_sq * w_flux).sum()) / r,
        'annulus_mass': quad.integrate(u.magnitude_sq, lambda d: ((d > r / 2) & (d < r)).astype(float)),
    }


def smoothed_at(u: SegregatedField, x, r: float, A: float = 0.0) -> FrequencyRecord:
    x = np.asarray(x, dtype=float)
    require_admissible(u.grid, x, r)
    t = smoothed_terms(u, x, r)
    record = FrequencyRecord(center=tuple(float(c) for c in x), radius=float(r), A=float(A),
                             D_phi=t['D_phi'], P_phi=t['P_phi'], F_phi=t['D_phi'] - t['P_phi'],
                             H_phi=t['H_phi'], E_phi=t['E_phi'],
                             H_phi_error=abs(t['H_phi'] - t['H_phi_coarse']))
    if record.H_phi > 0:
        record.I_phi = r * record.D_phi / record.H_phi
        record.G_phi = (r * record.F_phi + record.H_phi) / record.H_phi
        record.I_phi_A = record.I_phi + A * r ** 2
    else:
        record.I_phi = record.G_phi = record.I_phi_A = float('nan')
        record.flags.append('zero_smoothed_height')
    lower, upper = height_bounds(t['annulus_mass'], r)
    if not lower * (1 - SANDWICH_SLACK) <= record.H_phi <= upper * (1 + SANDWICH_SLACK):
        logger.warning(f"H_phi = {record.H_phi:g} outside [{lower:g}, {upper:g}] at r={r:g}")
        record.flags.append('height_sandwich')
    return record


def height_bounds(annulus_mass: float, r: float) -> Tuple[float, float]:
    """(2/r, 4/r) times int_{B_r \\ B_{r/2}} |u|^2, which bracket H_phi"""
    return 2.0 * annulus_mass / r, 4.0 * annulus_mass / r


def height_sandwich(u: SegregatedField, x, r: float) -> Tuple[float, float, float]:
    """(lower bound, H_phi, upper bound) at (x, r)"""
    x = np.asarray(x, dtype=float)
    require_admissible(u.grid, x, r)
    t = smoothed_terms(u, x, r)
    lower, upper = height_bounds(t['annulus_mass'], r)
    return lower, t['H_phi'], upper


def frequency_record(u: SegregatedField, x, r: float, A: float = 0.0) -> FrequencyRecord:
    record = classical_at(u, x, r).merge(smoothed_at(u, x, r, A))
    record.A = float(A)
    return record


# Calibration

def calibrate_multiplicative(radii: Sequence[float], values: Sequence[float]) -> float:
    """Smallest L >= 0 with exp(L r^2) values(r) nondecreasing over the samples"""
    best = 0.0
    for i in range(len(radii) - 1):
        a, b = values[i], values[i + 1]
        if not (a > 0 and b > 0):
            continue
        if b < a:
            best = max(best, math.log(a / b) / (radii[i + 1] ** 2 - radii[i] ** 2))
    return best


def calibrate_additive_values(radii: Sequence[float], values: Sequence[float]) -> float:
    """Smallest A >= 0 with values(r) + A r^2 nondecreasing over the samples"""
    best = 0.0
    for i in range(len(radii) - 1):
        a, b = values[i], values[i + 1]
        if np.isnan(a) or np.isnan(b):
            continue
        if b < a:
            best = max(best, (a - b) / (radii[i + 1] ** 2 - radii[i] ** 2))
    return best


@dataclass
class ScaleRestriction:
    """Largest scales on which the almost-monotonicity statements apply"""
    r_tilde: float
    r_bar: float

    def to_dict(self) -> Dict:
        return {'r_tilde': self.r_tilde, 'r_bar': self.r_bar}


def scale_restriction(u: SegregatedField) -> ScaleRestriction:
    lam = u.lambda_max
    n = u.dim
    if lam <= 0:
        return ScaleRestriction(float('inf'), float('inf'))
    return ScaleRestriction(math.sqrt(math.log(4.0 / 3.0) * (n - 1) / (2 * lam)),
                            math.sqrt((n - 1) / (2 * lam)))


@dataclass
class MonotonicityReport:
    slack: float
    generalized_violations: int
    generalized_worst_drop: float
    multiplicative_violations: int
    additive_violations: int

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class FrequencyProfile:
    center: Tuple[float, ...]
    records: List[FrequencyRecord]
    lambda_hat: float
    additive_hat: float
    monotonicity: MonotonicityReport
    warnings: List[str] = field(default_factory=list)

    @property
    def radii(self) -> List[float]:
        return [rec.radius for rec in self.records]

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'records': [rec.to_dict() for rec in self.records],
            'lambda_hat': self.lambda_hat,
            'additive_hat': self.additive_hat,
            'monotonicity': self.monotonicity.to_dict(),
            'warnings': self.warnings,
        }


def _drops(values: np.ndarray, slack: float) -> Tuple[int, float]:
    count, worst = 0, 0.0
    for a, b in zip(values[:-1], values[1:]):
        if np.isnan(a) or np.isnan(b):
            continue
        drop = a - b
        if drop > slack * max(abs(a), 1.0):
            count += 1
        worst = max(worst, drop)
    return count, worst


def monotonicity_report(records: Sequence[FrequencyRecord], lambda_max: float, n: int,
                        lambda_hat: Optional[float] = None, additive_hat: Optional[float] = None,
                        slack: float = 1e-3) -> MonotonicityReport:
    """Violation counts of the three almost-monotone quantities along a profile"""
    radii = np.array([rec.radius for rec in records])
    G = np.array([rec.G for rec in records], dtype=float)
    I = np.array([rec.I for rec in records], dtype=float)
    I_phi = np.array([rec.I_phi for rec in records], dtype=float)
    if lambda_hat is None:
        lambda_hat = calibrate_multiplicative(radii, I)
    if additive_hat is None:
        additive_hat = calibrate_additive_values(radii, I_phi)
    g_count, g_worst = _drops(np.exp(2 * lambda_max / (n - 1) * radii ** 2) * G, slack)
    m_count, _ = _drops(np.exp(lambda_hat * radii ** 2) * I, slack)
    a_count, _ = _drops(I_phi + additive_hat * radii ** 2, slack)
    return MonotonicityReport(slack, g_count, g_worst, m_count, a_count)


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def frequency_profile(u: SegregatedField, x, radii: Sequence[float], A: float = 0.0,
                      threads: int = 1) -> FrequencyProfile:
    """Full records at each radius plus the fitted constants and monotonicity counts"""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise ConfigError('radii', 'must be strictly ascending')
    records = _map(lambda r: frequency_record(u, x, r, A), radii, threads)

    warnings = []
    limits = scale_restriction(u)
    if radii and radii[-1] > limits.r_tilde:
        message = (f'radius {radii[-1]:g} exceeds the scale restriction r~ = {limits.r_tilde:g} '
                   f'(lambda_M = {u.lambda_max:g})')
        logger.warning(message)
        warnings.append(message)

    I = [rec.I for rec in records]
    I_phi = [rec.I_phi for rec in records]
    lambda_hat = calibrate_multiplicative(radii, I)
    additive_hat = calibrate_additive_values(radii, I_phi)
    mono = monotonicity_report(records, u.lambda_max, u.dim, lambda_hat, additive_hat)
    center = tuple(float(c) for c in np.asarray(x, dtype=float))
    return FrequencyProfile(center, records, lambda_hat, additive_hat, mono, warnings)


def calibrate_additive(profile: FrequencyProfile) -> float:
    return calibrate_additive_values(profile.radii, [rec.I_phi for rec in profile.records])


def geometric_radii(r_min: float, r_max: float, count: int) -> List[float]:
    if count < 2 or r_max <= r_min:
        return [r_min]
    return [float(r) for r in np.geomspace(r_min, r_max, count)]


# Pinching and Weiss quantities

def pinching(u: SegregatedField, x, s: float, t: float, c: float) -> float:
    """W^c_{s,t}(x) = I_phi^c(x, t) - I_phi^c(x, s)"""
    if s > t:
        raise ConfigError('pinching', f'need s <= t, got s={s:g}, t={t:g}')
    outer = smoothed_at(u, x, t, c)
    inner = smoothed_at(u, x, s, c)
    return outer.I_phi_A - inner.I_phi_A


def weiss_value(u: SegregatedField, x, r: float, alpha: float, E: float) -> float:
    if not alpha > 0:
        raise ConfigError('alpha', 'must be positive')
    rec = classical_at(u, x, r)
    n = u.dim
    return rec.D / r ** (n - 2 + 2 * alpha) - alpha * rec.H / r ** (n - 1 + 2 * alpha) + E * r ** 2


@dataclass
class WeissAnnulusReport:
    center: Tuple[float, ...]
    inner: float
    outer: float
    left: float
    right: float
    ratio: Optional[float]
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out['center'] = list(self.center)
        return out


def weiss_annulus_report(u: SegregatedField, x, r: float, R: float, A: float = 0.0,
                         samples: int = 16) -> WeissAnnulusReport:
    """
    Compares int_{A_{r,R}} |(y-x).grad u - I_phi(x,|y-x|) u|^2 with
    R H_phi(x, 2R) W^{1+A+A^2}_{r/2, 2R}(x).
    """
    x = np.asarray(x, dtype=float)
    scales = np.linspace(r, R, samples)
    table = np.array([smoothed_at(u, x, s).I_phi for s in scales])
    quad = BallQuadrature(u.grid, x, R)
    dist = quad.distance
    freq = np.interp(dist, scales, table)
    radial = (quad.block(u.signed_gradient) * quad.offsets).sum(axis=0)
    integrand = (radial - freq * quad.block(u.magnitude)) ** 2
    left = float((integrand * quad.weights(quad.annulus(r, R))).sum())

    c = 1 + A + A ** 2
    right = R * smoothed_at(u, x, 2 * R).H_phi * max(pinching(u, x, r / 2, 2 * R, c), 0.0)
    flags = []
    if right > 0:
        ratio = left / right
    else:
        ratio = None
        flags.append('zero_right_side')
    return WeissAnnulusReport(tuple(x.tolist()), r, R, left, right, ratio, flags)


# Identities

@dataclass
class IdentityReport:
    center: Tuple[float, ...]
    radius: float
    sides: Dict[str, Tuple[float, float]]
    residuals: Dict[str, float]
    slacks: Dict[str, Optional[float]]

    @property
    def max_residual(self) -> float:
        finite = [v for v in self.residuals.values() if not np.isnan(v)]
        return max(finite) if finite else float('nan')

    def to_dict(self) -> Dict:
        return {
            'center': list(self.center),
            'radius': self.radius,
            'sides': {k: list(v) for k, v in self.sides.items()},
            'residuals': self.residuals,
            'slacks': self.slacks,
            'max_residual': self.max_residual,
        }


def relative_residual(lhs: float, rhs: float) -> float:
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


def identity_suite(u: SegregatedField, x, r: float) -> IdentityReport:
    """
    Evaluates both sides of the first-variation identities at (x, r); radial
    derivatives are centered differences with step h.
    """
    x = np.asarray(x, dtype=float)
    h = u.grid.spacing
    n = u.dim
    for radius in (r - h, r + h):
        require_admissible(u.grid, x, radius)

    vol = {s: ball_terms(u, x, s) for s in (r - h, r, r + h)}
    sph = {s: sphere_terms(u, x, s) for s in (r - h, r, r + h)}
    smo = {s: smoothed_terms(u, x, s) for s in (r - h, r, r + h)}
    edge = sphere_energy_terms(u, x, r)

    D, H = vol[r]['D'], sph[r]['H']
    F = D - vol[r]['eigen_mass']
    sides = {}

    sides['pohozaev'] = (D, sph[r]['flux'] + vol[r]['eigen_mass'])

    F_phi = smo[r]['D_phi'] - smo[r]['P_phi']
    sides['smoothed_energy'] = (F_phi, smo[r]['flux_phi'])

    dH_phi = (smo[r + h]['H_phi'] - smo[r - h]['H_phi']) / (2 * h)
    sides['smoothed_height_derivative'] = (dH_phi, (n - 1) / r * smo[r]['H_phi'] + 2 * F_phi)

    def renorm_D(s):
        return vol[s]['D'] / s ** (n - 2)

    def renorm_H(s):
        return sph[s]['H'] / s ** (n - 1)

    dD = (renorm_D(r + h) - renorm_D(r - h)) / (2 * h)
    sides['energy_derivative'] = (
        dD,
        2 / r ** (n - 2) * edge['normal_energy'] + edge['eigen_mass'] / r ** (n - 2)
        - n / r ** (n - 1) * vol[r]['eigen_mass'],
    )

    dH = (renorm_H(r + h) - renorm_H(r - h)) / (2 * h)
    sides['height_derivative'] = (dH, 2 * F / r ** (n - 1))

    residuals = {name: relative_residual(*pair) for name, pair in sides.items()}

    if H > 0 and sph[r - h]['H'] > 0:
        dlog = (math.log(renorm_H(r + h)) - math.log(renorm_H(r - h))) / (2 * h)
        G = (r * F + H) / H
        sides['log_height_derivative'] = (dlog, 2 / r * (G - 1))
        residuals['log_height_derivative'] = relative_residual(dlog, 2 / r * (G - 1))

    slacks: Dict[str, Optional[float]] = {}
    # int_B |u|^2 <= (r^2 D + r H) / (n - 1)
    slacks['poincare'] = (r ** 2 * D + r * H) / (n - 1) - vol[r]['mass']
    if r < scale_restriction(u).r_bar:
        left = F / r ** (n - 2) + H / r ** (n - 1)
        slacks['boundary_poincare'] = left - 0.5 * (D / r ** (n - 2) + H / r ** (n - 1))
    else:
        slacks['boundary_poincare'] = None

    return IdentityReport(tuple(x.tolist()), float(r), sides, residuals, slacks)


# Comparisons and oscillation

@dataclass
class ComparisonReport:
    constant: float
    samples: int
    skipped: int

    def to_dict(self) -> Dict:
        return asdict(self)


def comparison_constant(u: SegregatedField, points: Iterable, radii: Sequence[float]) -> ComparisonReport:
    """
    Fitted C with I_phi(x, r) <= C I(x, r) and I_phi(x, r) >= I(x, r/2) / C
    over the given zero-set points and radii.
    """
    worst = 1.0
    samples = skipped = 0
    for x in points:
        for r in radii:
            try:
                smooth = smoothed_at(u, x, r).I_phi
                full = classical_at(u, x, r).I
                half = classical_at(u, x, r / 2).I
            except AdmissibilityError:
                skipped += 1
                continue
            if not (smooth > 0 and full > 0 and half > 0):
                skipped += 1
                continue
            worst = max(worst, smooth / full, half / smooth)
            samples += 1
    return ComparisonReport(worst if samples else float('nan'), samples, skipped)


@dataclass
class OscillationReport:
    left: float
    right: float
    ratio: Optional[float]
    frequencies: List[float]
    pinching: Tuple[float, float]
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)


def oscillation_check(u: SegregatedField, x1, x2, r: float, A: float = 0.0, samples: int = 10,
                      inner_factor: float = 1.0 / 8.0, outer_factor: float = 4.0) -> OscillationReport:
    """
    Spread of I_phi(., r) along the segment [x1, x2] against
    sqrt(W_{r/8, 4r}(x1)) + sqrt(W_{r/8, 4r}(x2)) with W built from c = 2 + A + A^2.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.linalg.norm(x1 - x2) > r / 4 + 1e-12:
        raise AdmissibilityError(f'points are {np.linalg.norm(x1 - x2):g} apart, more than r/4 = {r / 4:g}')
    for p in (x1, x2):
        require_admissible(u.grid, p, outer_factor * r)
    t = np.linspace(0.0, 1.0, samples)
    freqs = [smoothed_at(u, x1 + s * (x2 - x1), r).I_phi for s in t]
    left = float(max(freqs) - min(freqs))
    c = 2 + A + A ** 2
    w1 = pinching(u, x1, inner_factor * r, outer_factor * r, c)
    w2 = pinching(u, x2, inner_factor * r, outer_factor * r, c)
    right = math.sqrt(max(w1, 0.0)) + math.sqrt(max(w2, 0.0))
    flags = []
    if right > 0:
        ratio = left / right
    else:
        ratio = None
        flags.append('zero_pinching')
    return OscillationReport(left, right, ratio, [float(f) for f in freqs], (float(w1), float(w2)), flags)


def admissible_radii(u: SegregatedField, x, radii: Sequence[float]) -> Tuple[List[float], List[float]]:
    """Split radii into (usable, skipped) at x"""
    low, high = admissible_range(u.grid, x)
    usable = [r for r in radii if low * (1 - 1e-9) <= r <= high]
    skipped = [r for r in radii if r not in usable]
    return usable, skipped
