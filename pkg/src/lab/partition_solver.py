"""
Optimal partition solver.

Minimizes sum_k lambda_1(Omega_k) over N disjoint subdomains, written as the
constrained Dirichlet energy of a map into Sigma_N. Each sweep diffuses every
component implicitly, relaxes, renormalizes, projects onto Sigma_N and then
polishes each component by inverse iteration on its own support. Sweeps that
raise the objective are retried with a smaller relaxation factor.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg
from scipy.spatial import cKDTree

from src.lab.errors import ConfigError, NormalizationError
from src.lab.field_core import (Grid, SegregatedField, l2_norms, normalize_components,
                                project_components)

logger = logging.getLogger(__name__)

SEED_LAYOUTS = ('voronoi', 'random')
SUPPORT_THRESHOLD = 1e-8
NORMALIZATION_TOL = 1e-8
MAX_BACKTRACKS = 6
STALL_WINDOW = 10
EXTREMALITY_TOL_CELLS = 10


@dataclass
class SolveConfig:
    n_components: int
    grid: Dict
    seed_layout: str = 'voronoi'
    seed: int = 0
    max_iters: int = 400
    damping: float = 0.5
    tolerance: float = 1e-8
    projection_every: int = 1
    time_step: float = 4.0
    polish_steps: int = 3
    threads: int = 1

    @classmethod
    def from_dict(cls, data: Dict) -> 'SolveConfig':
        if 'n_components' not in data and 'N' not in data:
            raise ConfigError('solver.n_components', 'missing')
        if 'grid' not in data:
            raise ConfigError('solver.grid', 'missing')
        known = {f for f in cls.__dataclass_fields__}
        values = {k: v for k, v in data.items() if k in known}
        if 'N' in data:
            values['n_components'] = data['N']
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ConfigError('solver.n_components', f'must be a positive integer, got {self.n_components}')
        if not 0 < self.damping <= 1:
            raise ConfigError('solver.damping', 'must lie in (0, 1]')
        if not self.tolerance > 0:
            raise ConfigError('solver.tolerance', 'must be positive')
        if self.seed_layout not in SEED_LAYOUTS:
            raise ConfigError('solver.seed_layout', f'expected one of {SEED_LAYOUTS}')
        if self.max_iters < 1:
            raise ConfigError('solver.max_iters', 'must be at least 1')
        if self.projection_every < 1:
            raise ConfigError('solver.projection_every', 'must be at least 1')
        if not self.time_step > 0:
            raise ConfigError('solver.time_step', 'must be positive')
        if self.polish_steps < 0:
            raise ConfigError('solver.polish_steps', 'must be nonnegative')

    def to_dict(self) -> Dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SolveReport:
    iterations: int
    objective_history: List[float]
    eigenvalues: List[float]
    residuals: List[float]
    wall_time: float
    converged: bool
    rejected_sweeps: int = 0
    polish_only_sweeps: int = 0

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float('nan')

    def to_dict(self, include_timing: bool = True) -> Dict:
        out = {
            'iterations': self.iterations,
            'objective': self.objective,
            'objective_history': self.objective_history,
            'eigenvalues': self.eigenvalues,
            'residuals': self.residuals,
            'converged': self.converged,
            'rejected_sweeps': self.rejected_sweeps,
            'polish_only_sweeps': self.polish_only_sweeps,
        }
        if include_timing:
            out['wall_time'] = self.wall_time
        return out


# Discrete Laplacian

def laplacian(grid: Grid) -> sparse.csr_matrix:
    """Dirichlet Laplacian Delta_h on the interior nodes (row-major order)"""
    h2 = grid.spacing ** 2
    factors = []
    for n in grid.shape:
        factors.append(sparse.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h2)
    eye = [sparse.identity(n, format='csr') for n in grid.shape]
    full = None
    for axis in range(grid.dim):
        term = None
        for j in range(grid.dim):
            piece = factors[j] if j == axis else eye[j]
            term = piece if term is None else sparse.kron(term, piece, format='csr')
        full = term if full is None else full + term
    idx = np.flatnonzero(grid.interior_mask.reshape(-1))
    return full.tocsr()[idx][:, idx].tocsc()


def apply_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Delta_h of a nodal array at interior nodes; zero elsewhere"""
    h2 = grid.spacing ** 2
    out = -2 * grid.dim * values
    padded = np.pad(values, 1)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    for axis in range(grid.dim):
        for shift in (-1, 1):
            sl = list(inner)
            sl[axis] = slice(1 + shift, padded.shape[axis] - 1 + shift)
            out = out + padded[tuple(sl)]
    out = out / h2
    return np.where(grid.interior_mask, out, 0.0)


def edge_energy(grid: Grid, values: np.ndarray) -> float:
    """Quadratic form of -Delta_h: sum of squared edge differences times h^(n-2)"""
    total = 0.0
    for axis in range(grid.dim):
        total += float((np.diff(values, axis=axis) ** 2).sum())
    return total * grid.spacing ** (grid.dim - 2)


def objective_energy(u: SegregatedField) -> float:
    """sum_k int |grad u_k|^2 for a field with unit-norm components"""
    norms = np.asarray(l2_norms(u))
    if np.any(np.abs(norms - 1.0) > NORMALIZATION_TOL):
        raise NormalizationError(f'components must have unit L2 norm, got {norms.round(10).tolist()}')
    return float(sum(edge_energy(u.grid, c) for c in u.components))


def rayleigh_quotients(grid: Grid, components: np.ndarray) -> np.ndarray:
    quotients = []
    for c in components:
        mass = float((c ** 2).sum()) * grid.cell_volume
        quotients.append(edge_energy(grid, c) / mass if mass > 0 else np.inf)
    return np.asarray(quotients)


def independent_ground_state(grid: Grid) -> Tuple[float, SegregatedField]:
    """First Dirichlet eigenpair of -Delta_h by shift-invert Lanczos"""
    lap = laplacian(grid)
    vals, vecs = splinalg.eigsh(-lap, k=1, sigma=0, which='LM')
    vec = np.abs(vecs[:, 0])
    values = np.zeros(grid.shape)
    values[grid.interior_mask] = vec
    values = normalize_components(values[np.newaxis], grid.cell_volume)
    return float(vals[0]), SegregatedField(grid, values, [float(vals[0])], normalized=True)


# Diagnostics

def pde_residual(u: SegregatedField) -> List[float]:
    """
    Relative residual of -Delta_h u_k = lambda_k u_k on the support of u_k
    eroded twice, normalized by |lambda_k u_k| (or |u_k| when lambda_k = 0).
    """
    residuals = []
    for c, lam in zip(u.components, u.eigenvalues):
        peak = c.max()
        if peak <= 0:
            residuals.append(float('nan'))
            continue
        support = c > SUPPORT_THRESHOLD * peak
        core = ndimage.binary_erosion(support, iterations=2) & u.grid.interior_mask
        if not core.any():
            residuals.append(float('nan'))
            continue
        res = (-apply_laplacian(u.grid, c) - lam * c)[core]
        scale = np.linalg.norm(lam * c[core]) if lam > 0 else np.linalg.norm(c[core])
        residuals.append(float(np.linalg.norm(res) / scale) if scale > 0 else float('nan'))
    return residuals


@dataclass
class ExtremalityReport:
    tol: float
    subsolution_violations: int
    subsolution_worst: float
    supersolution_violations: int
    supersolution_worst: float
    checked_nodes: int
    max_subsolution_residual: float = 0.0
    min_supersolution_residual: float = 0.0

    @property
    def violations(self) -> int:
        return self.subsolution_violations + self.supersolution_violations

    def to_dict(self) -> Dict:
        return {
            'tol': self.tol,
            'subsolution_violations': self.subsolution_violations,
            'subsolution_worst': self.subsolution_worst,
            'supersolution_violations': self.supersolution_violations,
            'supersolution_worst': self.supersolution_worst,
            'checked_nodes': self.checked_nodes,
            'violations': self.violations,
            'max_subsolution_residual': self.max_subsolution_residual,
            'min_supersolution_residual': self.min_supersolution_residual,
        }


def extremality_check(u: SegregatedField, tol: Optional[float] = None) -> ExtremalityReport:
    """
    Discrete form of the extremality inequalities at interior nodes:

        h^2 (-Delta_h u_k - lambda_k u_k) <= tol
        h^2 (-Delta_h (u_k - sum_{j!=k} u_j) - (lambda_k u_k - sum_{j!=k} lambda_j u_j)) >= -tol

    tol is in units of u: both sides are second differences, i.e. the
    stencil residual tested against a nodal hat function, and the default is
    EXTREMALITY_TOL_CELLS * h. The pointwise residuals are therefore bounded
    by tol / h^2; their extremes are reported unscaled as
    max_subsolution_residual and min_supersolution_residual. Discrete
    supports are one cell apart, so next to the interface the signed
    Laplacian carries a defect of order |grad u| / h pointwise and
    |grad u| h as a second difference.

    Only nodes whose stencil stays on interior nodes are checked. The worst
    margins are tol minus the largest excess.
    """
    grid = u.grid
    h2 = grid.spacing ** 2
    if tol is None:
        tol = EXTREMALITY_TOL_CELLS * grid.spacing
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    interior = ndimage.binary_erosion(grid.interior_mask, structure=structure, border_value=0)
    laps = np.stack([apply_laplacian(grid, c) for c in u.components])
    weighted = u.eigenvalues.reshape((-1,) + (1,) * grid.dim) * u.components
    total_lap = laps.sum(axis=0)
    total_weighted = weighted.sum(axis=0)

    sub_count = super_count = 0
    sub_worst = super_worst = np.inf
    sub_max, super_min = -np.inf, np.inf
    for k in range(u.n_components):
        a = (-laps[k] - weighted[k])[interior]
        signed_lap = 2 * laps[k] - total_lap
        signed_rhs = 2 * weighted[k] - total_weighted
        b = (-signed_lap - signed_rhs)[interior]
        sub_max, super_min = max(sub_max, float(a.max())), min(super_min, float(b.min()))
        a, b = h2 * a, h2 * b
        sub_count += int((a > tol).sum())
        super_count += int((b < -tol).sum())
        sub_worst = min(sub_worst, float(tol - a.max()))
        super_worst = min(super_worst, float(b.min() + tol))
    return ExtremalityReport(float(tol), sub_count, sub_worst, super_count, super_worst, int(interior.sum()),
                             sub_max, super_min)


# Solver

def initial_components(grid: Grid, config: SolveConfig, rng: np.random.Generator) -> np.ndarray:
    interior = grid.points_of(grid.interior_mask)
    n = config.n_components
    if n > len(interior):
        raise ConfigError('solver.n_components', f'{n} components exceed {len(interior)} interior nodes')
    components = np.zeros((n,) + grid.shape)
    mask = grid.interior_mask
    if config.seed_layout == 'voronoi':
        seeds = interior[rng.choice(len(interior), size=n, replace=False)]
        dist, owner = cKDTree(seeds).query(interior)
        tent = 1.0 - dist / (dist.max() + grid.spacing)
        for k in range(n):
            values = np.zeros(len(interior))
            values[owner == k] = tent[owner == k]
            components[k][mask] = values
    else:
        owner = rng.integers(0, n, size=len(interior))
        owner[:n] = rng.permutation(n)
        heights = rng.random(len(interior)) + 0.5
        for k in range(n):
            components[k][mask] = np.where(owner == k, heights, 0.0)
    return normalize_components(components, grid.cell_volume)


class PartitionSolver:
    """Segregated implicit-diffusion iteration with Sigma_N projection and support polishing"""

    def __init__(self, config: SolveConfig):
        config.validate()
        self.config = config
        self.grid = Grid.from_spec(config.grid) if isinstance(config.grid, dict) else config.grid
        self.h = self.grid.spacing
        self.tau = config.time_step * self.h ** 2
        self.interior = self.grid.interior_mask
        self.flat_interior = np.flatnonzero(self.interior.reshape(-1))
        self.lap = laplacian(self.grid)
        self._lap_rows = self.lap.tocsr()
        n = self.lap.shape[0]
        self._diffuse = splinalg.factorized((sparse.identity(n, format='csc') - self.tau * self.lap).tocsc())
        self._support_cache: Dict[bytes, Callable] = {}

    def _map(self, fn, items):
        if self.config.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def _diffuse_one(self, component: np.ndarray) -> np.ndarray:
        out = np.zeros_like(component)
        out[self.interior] = self._diffuse(component[self.interior])
        return out

    def _support_solver(self, support: np.ndarray) -> Callable:
        key = np.packbits(support).tobytes()
        solver = self._support_cache.get(key)
        if solver is None:
            idx = np.flatnonzero(support[self.interior])
            sub = (-self._lap_rows[idx][:, idx]).tocsc()
            solver = splinalg.factorized(sub)
            if len(self._support_cache) > 8 * self.config.n_components:
                self._support_cache.clear()
            self._support_cache[key] = solver
        return solver

    def _polish_one(self, component: np.ndarray) -> np.ndarray:
        peak = component.max()
        if peak <= 0 or self.config.polish_steps == 0:
            return component
        support = (component > SUPPORT_THRESHOLD * peak) & self.interior
        solve = self._support_solver(support)
        inner = support[self.interior]
        vec = component[self.interior][inner]
        for _ in range(self.config.polish_steps):
            vec = np.abs(solve(vec))
            vec /= np.linalg.norm(vec)
        out = np.zeros_like(component)
        values = np.zeros(inner.size)
        values[inner] = vec
        out[self.interior] = values
        out[out < SUPPORT_THRESHOLD * out.max()] = 0.0
        return out

    def _finish(self, components: np.ndarray) -> Tuple[np.ndarray, float]:
        polished = np.stack(self._map(self._polish_one, list(components)))
        polished = normalize_components(polished, self.grid.cell_volume)
        quotients = rayleigh_quotients(self.grid, polished)
        return polished, float(quotients.sum())

    def _trial(self, components: np.ndarray, theta: float) -> Optional[np.ndarray]:
        current = components
        for _ in range(self.config.projection_every):
            diffused = np.stack(self._map(self._diffuse_one, list(current)))
            current = (1 - theta) * current + theta * diffused
            current = normalize_components(current, self.grid.cell_volume)
        projected = project_components(current)
        if np.any(projected.reshape(projected.shape[0], -1).max(axis=1) <= 0):
            return None
        return normalize_components(projected, self.grid.cell_volume)

    def solve(self) -> Tuple[SegregatedField, SolveReport]:
        config = self.config
        started = time.perf_counter()
        rng = np.random.default_rng(config.seed)
        components, objective = self._finish(project_components(initial_components(self.grid, config, rng)))
        history = [objective]
        rejected = polish_only = 0
        converged = False
        iterations = 0

        logger.info(f"Solving N={config.n_components} on grid {self.grid.shape} "
                    f"(h={self.h:g}, tau={self.tau:g}, seed={config.seed})")

        for iterations in range(1, config.max_iters + 1):
            theta = config.damping
            accepted = None
            for _ in range(MAX_BACKTRACKS + 1):
                trial = self._trial(components, theta)
                if trial is not None:
                    candidate, value = self._finish(trial)
                    if value <= objective:
                        accepted = (candidate, value)
                        break
                rejected += 1
                theta /= 2
            if accepted is None:
                # inverse iteration on fixed supports cannot raise the Rayleigh quotients
                polish_only += 1
                candidate, value = self._finish(components)
                if value <= objective:
                    accepted = (candidate, value)
                else:
                    accepted = (components, objective)
            components, objective = accepted
            history.append(objective)

            if iterations % 10 == 0:
                logger.info(f"iteration {iterations}: objective {objective:.10g}")
            if len(history) > STALL_WINDOW:
                past = history[-1 - STALL_WINDOW]
                if abs(past - objective) <= config.tolerance * abs(objective):
                    converged = True
                    break

        eigenvalues = rayleigh_quotients(self.grid, components)
        u = SegregatedField(self.grid, components, eigenvalues, normalized=True)
        report = SolveReport(
            iterations=iterations,
            objective_history=[float(v) for v in history],
            eigenvalues=[float(v) for v in eigenvalues],
            residuals=pde_residual(u),
            wall_time=time.perf_counter() - started,
            converged=converged,
            rejected_sweeps=rejected,
            polish_only_sweeps=polish_only,
        )
        if converged:
            logger.info(f"Converged after {iterations} iterations: objective {report.objective:.10g}")
        else:
            logger.warning(f"No convergence within {config.max_iters} iterations; "
                           f"returning best iterate (objective {report.objective:.10g})")
        return u, report


def solve_partition(config: SolveConfig) -> Tuple[SegregatedField, SolveReport]:
    return PartitionSolver(config).solve()
