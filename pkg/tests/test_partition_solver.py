import math

import numpy as np
import pytest

from src.lab.errors import ConfigError, NormalizationError
from src.lab.field_core import Grid, SegregatedField, l2_norms
from src.lab.partition_solver import (SolveConfig, apply_laplacian, extremality_check, independent_ground_state,
                                      laplacian, objective_energy, pde_residual, solve_partition)

UNIT_SQUARE = {'kind': 'rectangle', 'lower': [0.0, 0.0], 'upper': [1.0, 1.0], 'spacing': 1.0 / 32}


class TestSolveConfig:
    def test_missing_grid(self):
        with pytest.raises(ConfigError) as err:
            SolveConfig.from_dict({'n_components': 2})
        assert err.value.field == 'solver.grid'

    def test_damping_must_be_positive(self):
        with pytest.raises(ConfigError) as err:
            SolveConfig.from_dict({'n_components': 2, 'grid': UNIT_SQUARE, 'damping': 0})
        assert err.value.field == 'solver.damping'

    def test_short_component_key(self):
        config = SolveConfig.from_dict({'N': 4, 'grid': UNIT_SQUARE, 'unused': True})
        assert config.n_components == 4

    def test_too_many_components(self):
        config = SolveConfig(n_components=10, grid={'kind': 'rectangle', 'lower': [0, 0], 'upper': [1, 1],
                                                    'spacing': 0.25})
        with pytest.raises(ConfigError):
            solve_partition(config)


class TestOperators:
    def test_matrix_and_stencil_agree(self, rng):
        grid = Grid.disk([0.0, 0.0], 1.0, 1.0 / 16)
        values = np.where(grid.interior_mask, rng.normal(size=grid.shape), 0.0)
        by_matrix = laplacian(grid) @ values[grid.interior_mask]
        by_stencil = apply_laplacian(grid, values)[grid.interior_mask]
        assert np.allclose(by_matrix, by_stencil)

    def test_objective_requires_normalized_components(self):
        grid = Grid.rectangle([0.0, 0.0], [1.0, 1.0], 0.25)
        u = SegregatedField(grid, 2 * np.ones((1, 5, 5)), [0.0])
        with pytest.raises(NormalizationError):
            objective_energy(u)

    def test_unit_square_ground_state(self):
        lam, u = independent_ground_state(Grid.from_spec(UNIT_SQUARE))
        assert lam == pytest.approx(2 * math.pi ** 2, rel=1e-2)
        assert objective_energy(u) == pytest.approx(lam, rel=1e-8)
        assert max(pde_residual(u)) <= 1e-6


class TestSolver:
    def test_single_component_is_ground_state(self):
        grid = Grid.from_spec(UNIT_SQUARE)
        lam, ground = independent_ground_state(grid)
        u, report = solve_partition(SolveConfig(n_components=1, grid=UNIT_SQUARE, max_iters=200))
        assert report.eigenvalues[0] == pytest.approx(lam, rel=1e-2)
        diff = np.sqrt(((u.components[0] - ground.components[0]) ** 2).sum() * grid.cell_volume)
        assert diff < 1e-2

    def test_objective_never_increases(self, disk3_solve):
        _, report = disk3_solve
        history = np.asarray(report.objective_history)
        assert np.all(np.diff(history) <= 0)

    def test_components_stay_normalized(self, disk3_solve):
        u, report = disk3_solve
        assert np.allclose(l2_norms(u), 1.0, atol=1e-10)
        assert u.sigma_violations() == 0
        assert report.objective == pytest.approx(sum(report.eigenvalues), rel=1e-10)

    def test_report_without_timing(self, disk3_solve):
        _, report = disk3_solve
        assert 'wall_time' not in report.to_dict(include_timing=False)
        assert 'wall_time' in report.to_dict()

    def test_single_iteration_does_not_converge(self):
        u, report = solve_partition(SolveConfig(n_components=2, grid=UNIT_SQUARE, max_iters=1))
        assert report.iterations == 1
        assert not report.converged
        assert u.n_components == 2

    def test_same_seed_same_field(self):
        spec = {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': 1.0 / 16}
        config = SolveConfig(n_components=3, grid=spec, seed=11, max_iters=30)
        a, ra = solve_partition(config)
        b, rb = solve_partition(config)
        assert np.array_equal(a.components, b.components)
        assert ra.objective_history == rb.objective_history

    @pytest.mark.slow
    def test_rectangle_splits_into_two_squares(self):
        grid = {'kind': 'rectangle', 'lower': [0.0, 0.0], 'upper': [2.0, 1.0], 'spacing': 1.0 / 32}
        _, report = solve_partition(SolveConfig(n_components=2, grid=grid, seed=1, max_iters=400))
        assert report.objective <= 4 * math.pi ** 2 * 1.01


class TestDiagnostics:
    def test_oracle_is_harmonic_on_its_sectors(self, oracle_field):
        residuals = pde_residual(oracle_field(3))
        assert all(r < 0.05 for r in residuals)

    def test_two_sector_oracle_is_extremal(self, oracle_field):
        report = extremality_check(oracle_field(2, spacing=1.0 / 32), tol=1e-8)
        assert report.violations == 0
        assert report.checked_nodes > 0
        assert report.subsolution_worst >= 0

    def test_default_tolerance_scales_with_spacing(self, oracle_field):
        u = oracle_field(2, spacing=1.0 / 32)
        assert extremality_check(u).tol == pytest.approx(10.0 / 32)

    def test_solved_partition_is_a_subsolution(self, disk3_solve):
        u, _ = disk3_solve
        report = extremality_check(u)
        assert report.subsolution_violations == 0
        assert report.subsolution_worst >= 0
        assert report.max_subsolution_residual * u.grid.spacing ** 2 <= report.tol

    def test_solved_partition_supersolution_defect_is_first_order(self, disk3_solve):
        u, _ = disk3_solve
        h = u.grid.spacing
        assert extremality_check(u, tol=20 * h).supersolution_violations == 0
        # pointwise the defect next to the interface grows like 1 / h
        assert extremality_check(u).min_supersolution_residual < -1.0 / h

    def test_overlapping_field_violates(self, rng):
        grid = Grid.disk([0.0, 0.0], 1.0, 1.0 / 32)
        components = np.where(grid.interior_mask, rng.random((2,) + grid.shape), 0.0)
        report = extremality_check(SegregatedField(grid, components, [1.0, 1.0]))
        assert report.violations > 0

    def test_solved_partition_residual_is_small(self, disk3_solve):
        u, _ = disk3_solve
        assert all(np.isfinite(r) and r < 0.1 for r in pde_residual(u))
