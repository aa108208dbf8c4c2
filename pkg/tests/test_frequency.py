import math

import numpy as np
import pytest

from src.lab.errors import AdmissibilityError, ConfigError
from src.lab.field_core import Grid, OracleSpec, SegregatedField, make_oracle
from src.lab.frequency import (FrequencyRecord, calibrate_additive_values, calibrate_multiplicative, classical_at,
                               comparison_constant, frequency_profile, frequency_record, geometric_radii,
                               height_sandwich, identity_suite, monotonicity_report, oscillation_check, pinching,
                               scale_restriction, smoothed_at, weiss_annulus_report, weiss_value)
from src.lab.quadrature import BallQuadrature, admissible_range, cutoff


@pytest.fixture
def square3(oracle_field):
    return oracle_field(3, spacing=1.0 / 32, domain='square')


class TestClosedForms:
    def test_classical_quantities(self, square3):
        rec = classical_at(square3, [0.0, 0.0], 1.0)
        assert rec.H == pytest.approx(math.pi, rel=1e-2)
        assert rec.D == pytest.approx(1.5 * math.pi, rel=3e-2)
        assert rec.I == pytest.approx(1.5, abs=0.03)
        assert rec.flags == []

    def test_smoothed_quantities(self, square3):
        rec = smoothed_at(square3, [0.0, 0.0], 1.0)
        assert rec.H_phi == pytest.approx(15 * math.pi / 32, rel=1e-2)
        assert rec.D_phi == pytest.approx(45 * math.pi / 64, rel=3e-2)
        assert rec.I_phi == pytest.approx(1.5, abs=0.03)

    def test_block_keeps_leading_axes(self, square3):
        quad = BallQuadrature(square3.grid, [0.3, 0.4], 0.35)
        assert quad.block(square3.signed_gradient).shape == (2,) + quad.distance.shape
        assert quad.block(square3.components).shape == (3,) + quad.distance.shape
        assert quad.block(square3.magnitude).shape == quad.distance.shape

    def test_smoothed_frequency_away_from_the_grid_corner(self):
        grid = Grid.rectangle([-0.6, -0.5], [1.4, 1.5], 1.0 / 32)
        u = make_oracle(grid, OracleSpec(3, center=(0.3, 0.4)))
        rec = smoothed_at(u, [0.3, 0.4], 0.35)
        assert rec.I_phi == pytest.approx(1.5, abs=0.06)
        assert frequency_record(u, [0.3, 0.4], 0.35).I == pytest.approx(1.5, abs=0.06)

    def test_two_sectors_have_frequency_one(self, oracle_field):
        rec = frequency_record(oracle_field(2, spacing=1.0 / 32, domain='square'), [0.0, 0.0], 1.0)
        assert rec.I == pytest.approx(1.0, abs=0.02)
        assert rec.I_phi == pytest.approx(1.0, abs=0.02)

    @pytest.mark.slow
    @pytest.mark.parametrize('m', [2, 3, 4, 5])
    def test_fine_grid_profile_is_flat(self, oracle_field, m):
        u = oracle_field(m, spacing=1.0 / 256)
        h = u.grid.spacing
        profile = frequency_profile(u, [0.0, 0.0], geometric_radii(8 * h, 0.25, 8))
        for rec in profile.records:
            assert rec.I == pytest.approx(m / 2, abs=0.02)
            assert rec.I_phi == pytest.approx(m / 2, abs=0.02)


class TestRecords:
    def test_zero_field_is_flagged(self):
        grid = Grid.disk([0.0, 0.0], 1.0, 1.0 / 32)
        u = SegregatedField(grid, np.zeros((2,) + grid.shape), [0.0, 0.0])
        rec = classical_at(u, [0.0, 0.0], 0.5)
        assert 'zero_height' in rec.flags
        assert math.isnan(rec.I)
        assert 'zero_smoothed_height' in smoothed_at(u, [0.0, 0.0], 0.5).flags

    def test_radius_below_floor(self, square3):
        with pytest.raises(AdmissibilityError):
            classical_at(square3, [0.0, 0.0], square3.grid.spacing)

    def test_ball_leaving_domain(self, square3):
        with pytest.raises(AdmissibilityError):
            smoothed_at(square3, [1.0, 0.0], 0.5)

    def test_admissible_range_on_square(self, square3):
        low, high = admissible_range(square3.grid, [0.0, 0.0])
        assert low == pytest.approx(4 / 32)
        assert high == pytest.approx(1.25 - 2 / 32)

    def test_height_sandwich(self, oracle_field):
        u = oracle_field(3)
        for r in (0.1, 0.3, 0.6):
            lower, height, upper = height_sandwich(u, [0.0, 0.0], r)
            assert lower <= height <= upper
            assert 'height_sandwich' not in smoothed_at(u, [0.0, 0.0], r).flags

    def test_cutoff_profile(self):
        assert cutoff(np.array([0.0, 0.5, 0.75, 1.0, 2.0])).tolist() == [1.0, 1.0, 0.5, 0.0, 0.0]

    def test_radii_must_ascend(self, oracle_field):
        with pytest.raises(ConfigError):
            frequency_profile(oracle_field(3), [0.0, 0.0], [0.3, 0.2])


class TestCalibration:
    def test_multiplicative_constant(self):
        assert calibrate_multiplicative([1.0, 2.0], [1.0, 0.9]) == pytest.approx(math.log(1 / 0.9) / 3)

    def test_multiplicative_constant_of_increasing_data(self):
        assert calibrate_multiplicative([1.0, 2.0, 3.0], [1.0, 1.1, 1.2]) == 0.0

    def test_additive_constant(self):
        assert calibrate_additive_values([1.0, 2.0], [1.0, 0.7]) == pytest.approx(0.1)

    def test_additive_constant_skips_nan(self):
        assert calibrate_additive_values([1.0, 2.0, 3.0], [1.0, float('nan'), 0.5]) == 0.0

    def test_oracle_profile_needs_no_correction(self, oracle_field):
        u = oracle_field(3)
        profile = frequency_profile(u, [0.0, 0.0], geometric_radii(0.1, 0.6, 6))
        assert profile.lambda_hat <= 2.0
        assert profile.warnings == []

    def test_scale_restriction(self):
        grid = Grid.disk([0.0, 0.0], 1.0, 1.0 / 8)
        u = SegregatedField(grid, np.zeros((2,) + grid.shape), [5.0, 8.0])
        limits = scale_restriction(u)
        assert limits.r_bar == pytest.approx(math.sqrt(1 / 16))
        assert limits.r_tilde == pytest.approx(math.sqrt(math.log(4 / 3) / 16))

    def test_no_restriction_without_eigenvalues(self, oracle_field):
        assert scale_restriction(oracle_field(3)).r_tilde == math.inf


class TestPinchingAndWeiss:
    def test_pinching_of_homogeneous_map(self, oracle_field):
        u = oracle_field(3)
        flat = pinching(u, [0.0, 0.0], 0.2, 0.4, 0.0)
        assert flat == pytest.approx(0.0, abs=0.02)
        tilted = pinching(u, [0.0, 0.0], 0.2, 0.4, 1.0)
        assert tilted - flat == pytest.approx(0.4 ** 2 - 0.2 ** 2, abs=1e-12)

    def test_pinching_scales_must_be_ordered(self, oracle_field):
        with pytest.raises(ConfigError):
            pinching(oracle_field(3), [0.0, 0.0], 0.4, 0.2, 0.0)

    def test_weiss_vanishes_at_the_homogeneity(self, square3):
        assert weiss_value(square3, [0.0, 0.0], 1.0, 1.5, 0.0) == pytest.approx(0.0, abs=0.25)

    def test_weiss_below_homogeneity_increases(self, square3):
        small = weiss_value(square3, [0.0, 0.0], 0.5, 1.0, 0.0)
        large = weiss_value(square3, [0.0, 0.0], 1.0, 1.0, 0.0)
        assert small == pytest.approx(0.25 * math.pi, rel=0.2)
        assert large == pytest.approx(0.5 * math.pi, rel=0.2)
        assert large > small

    def test_weiss_needs_positive_exponent(self, square3):
        with pytest.raises(ConfigError):
            weiss_value(square3, [0.0, 0.0], 0.5, 0.0, 0.0)

    def test_annulus_estimate_on_homogeneous_map(self, square3):
        report = weiss_annulus_report(square3, [0.0, 0.0], 0.25, 0.5)
        assert report.flags == []
        assert report.right > 0
        assert report.ratio < 0.1


class TestMonotonicityReport:
    @staticmethod
    def records(G):
        return [FrequencyRecord((0.0, 0.0), r, I=1.0, G=g, I_phi=1.0) for r, g in zip([0.1, 0.2, 0.3], G)]

    def test_decreasing_height_ratio_is_counted(self):
        report = monotonicity_report(self.records([3.0, 2.0, 1.0]), 0.0, 2, lambda_hat=0.0, additive_hat=0.0)
        assert report.generalized_violations == 2
        assert report.generalized_worst_drop == pytest.approx(1.0)
        assert report.multiplicative_violations == 0
        assert report.additive_violations == 0

    def test_exponential_weight_absorbs_small_drops(self):
        G = [1.0, 1.0 - 1e-3, 1.0 - 2e-3]
        assert monotonicity_report(self.records(G), 0.0, 2, slack=0.0).generalized_violations == 2
        assert monotonicity_report(self.records(G), 1.0, 2, slack=0.0).generalized_violations == 0


class TestIdentities:
    def test_residuals_on_oracle(self, oracle_field):
        report = identity_suite(oracle_field(3), [0.0, 0.0], 0.3)
        for name in ('pohozaev', 'smoothed_energy', 'smoothed_height_derivative'):
            assert report.residuals[name] <= 5e-2, name
        assert report.slacks['poincare'] >= 0

    @pytest.mark.slow
    def test_residuals_shrink_with_spacing(self, oracle_field):
        coarse = identity_suite(oracle_field(3, spacing=1.0 / 64), [0.0, 0.0], 0.3)
        fine = identity_suite(oracle_field(3, spacing=1.0 / 256), [0.0, 0.0], 0.3)
        for name in ('pohozaev', 'smoothed_energy', 'smoothed_height_derivative'):
            assert fine.residuals[name] <= 1e-2, name
            assert fine.residuals[name] * 1.7 <= coarse.residuals[name] or fine.residuals[name] < 1e-3, name


class TestComparisons:
    def test_comparison_constant_on_oracle(self, oracle_field):
        report = comparison_constant(oracle_field(3), [[0.0, 0.0]], [0.2, 0.4])
        assert report.samples == 2
        assert 1.0 <= report.constant <= 1.1

    def test_oscillation_points_too_far_apart(self, oracle_field):
        with pytest.raises(AdmissibilityError):
            oscillation_check(oracle_field(3), [0.0, 0.0], [0.1, 0.0], 0.2)

    def test_oscillation_on_a_wall(self, oracle_field):
        u = oracle_field(2)
        report = oscillation_check(u, [0.0, 0.0], [0.0, 0.04], 0.2, inner_factor=0.5, outer_factor=2.0)
        assert len(report.frequencies) == 10
        assert report.left < 0.05
