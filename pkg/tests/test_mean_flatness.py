import numpy as np
import pytest

from src.lab.errors import AdmissibilityError, ConfigError, EmptyMeasureError, InstanceTooLargeError
from src.lab.mean_flatness import (AffinePlane, PointMeasure, barycenter_moments, brute_force_flatness,
                                   mean_flatness, rho_span_check, spine_oscillation, spine_tube_check)
from src.lab.singular_set import JUNCTION, SingularSample, junction_candidates

SQUARE_CORNERS = [[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]]


def random_measure(rng, dim, atoms=8):
    return PointMeasure(rng.uniform(-1.0, 1.0, size=(atoms, dim)), rng.uniform(0.5, 2.0, size=atoms))


class TestSquareCorners:
    def test_moments(self):
        bar, moments = barycenter_moments(PointMeasure.from_points(SQUARE_CORNERS), [0.0, 0.0], 2.0)
        assert np.allclose(bar, 0.0)
        assert np.allclose(moments, np.eye(2))

    @pytest.mark.parametrize('r,expected', [(2.0, 1 / 8), (4.0, 1 / 64)])
    def test_line_flatness(self, r, expected):
        mu = PointMeasure.from_points(SQUARE_CORNERS)
        assert mean_flatness(mu, [0.0, 0.0], r, 1).value == pytest.approx(expected, rel=1e-12)

    def test_point_flatness(self):
        mu = PointMeasure.from_points(SQUARE_CORNERS)
        assert mean_flatness(mu, [0.0, 0.0], 2.0, 0).value == pytest.approx(0.5, rel=1e-12)

    @pytest.mark.parametrize('k', [0, 1])
    def test_brute_force_agrees(self, k):
        mu = PointMeasure.from_points(SQUARE_CORNERS)
        exact = mean_flatness(mu, [0.0, 0.0], 2.0, k).value
        assert brute_force_flatness(mu, [0.0, 0.0], 2.0, k) == pytest.approx(exact, rel=1e-6)


class TestRandomMeasures:
    @pytest.mark.parametrize('trial', range(10))
    def test_closed_form_matches_search(self, rng, trial):
        dim = 2 + trial % 2
        k = trial // 2 % 2
        mu = random_measure(rng, dim)
        x = np.zeros(dim)
        exact = mean_flatness(mu, x, 2.0, k).value
        assert brute_force_flatness(mu, x, 2.0, k) == pytest.approx(exact, rel=1e-6, abs=1e-12)

    @pytest.mark.slow
    def test_closed_form_matches_search_many(self, rng):
        for trial in range(50):
            dim = 2 + trial % 2
            k = trial // 2 % 2
            mu = random_measure(rng, dim, atoms=6 + trial % 10)
            x = rng.uniform(-0.3, 0.3, size=dim)
            exact = mean_flatness(mu, x, 1.5, k).value
            assert brute_force_flatness(mu, x, 1.5, k) == pytest.approx(exact, rel=1e-6, abs=1e-12)

    def test_value_equals_distance_sum_to_best_plane(self, rng):
        mu = random_measure(rng, 3, atoms=12)
        record = mean_flatness(mu, [0.0, 0.0, 0.0], 2.0, 1)
        inside = mu.restrict([0.0, 0.0, 0.0], 2.0)
        direct = (inside.weights * record.plane.distance(inside.points) ** 2).sum() / 2.0 ** 3
        assert record.value == pytest.approx(direct, rel=1e-9)
        assert record.value * 2.0 ** 3 == pytest.approx(sum(record.eigenvalues[1:]), rel=1e-12)

    def test_scaling_invariance(self, rng):
        mu = random_measure(rng, 2)
        k = 1
        scaled = PointMeasure(2 * mu.points, mu.weights * 2 ** k)
        a = mean_flatness(mu, [0.1, 0.0], 1.2, k).value
        b = mean_flatness(scaled, [0.2, 0.0], 2.4, k).value
        assert b == pytest.approx(a, rel=1e-10)

    def test_collinear_atoms_are_flat(self):
        mu = PointMeasure.from_points([[t, 2 * t + 0.1] for t in np.linspace(-0.3, 0.3, 7)])
        assert mean_flatness(mu, [0.0, 0.0], 1.0, 1).value <= 1e-12


class TestEdgeCases:
    def test_empty_ball(self):
        mu = PointMeasure.from_points(SQUARE_CORNERS)
        record = mean_flatness(mu, [5.0, 5.0], 1.0, 1)
        assert record.mass == 0.0
        assert record.value == 0.0
        with pytest.raises(EmptyMeasureError):
            barycenter_moments(mu, [5.0, 5.0], 1.0)

    def test_invalid_k(self):
        with pytest.raises(ConfigError):
            mean_flatness(PointMeasure.from_points(SQUARE_CORNERS), [0.0, 0.0], 2.0, 2)

    def test_brute_force_limits(self, rng):
        with pytest.raises(InstanceTooLargeError):
            brute_force_flatness(random_measure(rng, 2, atoms=31), [0.0, 0.0], 5.0, 1)
        with pytest.raises(ConfigError):
            brute_force_flatness(random_measure(rng, 3), [0.0, 0.0, 0.0], 5.0, 2)

    def test_measure_validation(self):
        with pytest.raises(ConfigError):
            PointMeasure([[0.0, 0.0], [1.0, 1.0]], [1.0])
        with pytest.raises(ConfigError):
            PointMeasure([[0.0, 0.0]], [-1.0])
        with pytest.raises(ConfigError):
            PointMeasure.from_dict({'atoms': []})

    def test_measure_from_atoms(self):
        mu = PointMeasure.from_dict({'atoms': [{'point': [0.0, 1.0], 'weight': 2.0}, {'point': [1.0, 0.0]}]})
        assert mu.mass == 3.0
        assert PointMeasure.from_dict(mu.to_dict()).mass == 3.0

    def test_plane_distance(self):
        axis = AffinePlane([0.0, 0.0], [[1.0, 0.0]])
        assert axis.distance([3.0, 4.0]).tolist() == [4.0]
        assert AffinePlane([1.0, 1.0], np.zeros((0, 2))).distance([4.0, 5.0]).tolist() == [5.0]


class TestSpanning:
    def test_spread_points_span(self):
        result = rho_span_check([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]], [0.0, 0.0, 0.0], 1.0, 0.1)
        assert result.spans
        assert result.chosen == [0, 1]
        assert result.plane.dimension == 1

    def test_nearly_collinear_points_fail(self):
        points = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-0.5, 0.01, 0.0]]
        result = rho_span_check(points, [0.0, 0.0, 0.0], 1.0, 0.1, k=2)
        assert not result.spans
        assert len(result.chosen) == 2
        assert result.plane.distance(points).max() < 0.1

    def test_points_outside_ball(self):
        with pytest.raises(AdmissibilityError):
            rho_span_check([[2.0, 0.0]], [0.0, 0.0], 1.0, 0.1)

    def test_rho_range(self):
        with pytest.raises(ConfigError):
            rho_span_check([[0.0, 0.0]], [0.0, 0.0], 1.0, 1.0)


class TestSpine:
    @pytest.fixture
    def ball3(self, oracle_field):
        return oracle_field(3, spacing=1.0 / 16, domain='ball')

    @pytest.fixture
    def junction_samples(self, ball3):
        h = ball3.grid.spacing
        return [SingularSample(p, JUNCTION, 1.5, (1, 2, 3), 8 * h)
                for p in junction_candidates(ball3, 2 * h)]

    def test_junctions_stay_near_the_axis(self, ball3, junction_samples):
        h = ball3.grid.spacing
        spine = AffinePlane([0.0, 0.0, 0.0], [[1.0, 0.0, 0.0]])
        report = spine_tube_check(ball3, spine, [0.0, 0.0, 0.0], 0.5, 4 * h, samples=junction_samples)
        assert report.checked > 0
        assert report.holds

    def test_shifted_spine_is_violated(self, ball3, junction_samples):
        spine = AffinePlane([0.0, 0.5, 0.0], [[1.0, 0.0, 0.0]])
        report = spine_tube_check(ball3, spine, [0.0, 0.0, 0.0], 0.5, 0.25, samples=junction_samples)
        assert len(report.violators) == report.checked > 0

    def test_spine_dimension(self, ball3):
        with pytest.raises(ConfigError):
            spine_tube_check(ball3, AffinePlane([0.0, 0.0, 0.0], np.eye(3)[:2]), [0.0, 0.0, 0.0], 0.5, 0.1,
                             samples=[])

    def test_frequency_is_constant_along_the_axis(self, ball3):
        spine = AffinePlane([0.0, 0.0, 0.0], [[1.0, 0.0, 0.0]])
        result = spine_oscillation(ball3, spine, [0.0, 0.0, 0.0], 0.25, [0.25, 0.3])
        assert result.evaluated == 10
        assert result.value < 0.2
