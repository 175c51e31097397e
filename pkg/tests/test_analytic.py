import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad
from scipy.stats import chi2

from bordersim.analytic import (
    EULER_GAMMA,
    ExitPdfTable,
    RdParams,
    build_angle_tables,
    exit_pdf,
    exit_rate,
    gamma_inc_zero,
    movement_length_pdf,
    p_cover,
    rate_from_chord,
    sample_exit_x,
)

FIG1_LEFT = RdParams(v_min=0.001, v_max=0.01, tau_s=1.0, tau_m=3.0)
FIG1_RIGHT = RdParams(v_min=0.1, v_max=1.0, tau_s=1.0, tau_m=3.0)


def gamma_inc_zero_oracle(z):
    """Independent adaptive-quadrature evaluation of the defining integral."""
    value, _ = quad(
        lambda t: math.exp(-t) / t, z, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400
    )
    return value


class TestGammaIncZero:
    def test_frozen_value_at_one(self):
        assert gamma_inc_zero(1.0) == pytest.approx(0.21938393439552, rel=1e-12)

    @pytest.mark.parametrize("z", [0.01, 0.1, 1.0, 5.0, 20.0])
    def test_against_quadrature_oracle(self, z):
        assert gamma_inc_zero(z) == pytest.approx(gamma_inc_zero_oracle(z), rel=1e-10)

    @pytest.mark.parametrize("z", [5.0, 10.0, 20.0])
    def test_tail_upper_bound(self, z):
        assert gamma_inc_zero(z) < math.exp(-z) / z

    @pytest.mark.parametrize("z", [0.3, 1.0, 2.5, 8.0])
    def test_derivative_by_finite_differences(self, z):
        h = 1e-5 * z
        numeric = (gamma_inc_zero(z + h) - gamma_inc_zero(z - h)) / (2.0 * h)
        exact = -math.exp(-z) / z
        assert numeric == pytest.approx(exact, rel=1e-6)

    @pytest.mark.parametrize("z", [0.05, 0.2, 0.7, 0.99])
    def test_series_identity_below_one(self, z):
        # value + gamma + log z should equal the alternating entire series
        series = 0.0
        term = 1.0
        for k in range(1, 200):
            term *= z / k
            contrib = term / k
            series += contrib if k % 2 == 1 else -contrib
            if contrib < 1e-20:
                break
        assert abs(gamma_inc_zero(z) + EULER_GAMMA + math.log(z) - series) <= 1e-10

    def test_domain_error(self):
        with pytest.raises(ValueError):
            gamma_inc_zero(0.0)
        with pytest.raises(ValueError):
            gamma_inc_zero(-1.0)


class TestMovementLengthPdf:
    def test_value_at_origin(self):
        p = FIG1_LEFT
        expected = 1.0 / (p.v_max * p.tau_m * (p.v_max - p.v_min))
        assert movement_length_pdf(0.0, p.v_max, p) == pytest.approx(expected)

    def test_zero_outside_speed_range(self):
        assert movement_length_pdf(0.1, 0.02, FIG1_LEFT) == 0.0
        assert movement_length_pdf(0.1, 0.0005, FIG1_LEFT) == 0.0

    def test_normalization_by_quadrature(self):
        p = FIG1_LEFT
        total, err = dblquad(
            lambda v, d: movement_length_pdf(d, v, p),
            0.0,
            60.0 * p.d_high,
            p.v_min,
            p.v_max,
            epsabs=1e-10,
            epsrel=1e-10,
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_speed_marginal_decreases_with_distance(self):
        p = FIG1_RIGHT
        distances = [0.0, 0.5, 1.0, 2.0, 5.0]
        marginals = [
            quad(lambda v: movement_length_pdf(d, v, p), p.v_min, p.v_max)[0]
            for d in distances
        ]
        assert all(a > b for a, b in zip(marginals, marginals[1:]))


class TestPCover:
    def test_zero_distance_is_certain(self):
        assert p_cover(0.0, FIG1_LEFT) == 1.0
        assert p_cover(0.0, FIG1_RIGHT) == 1.0

    def test_vanishes_far_away(self):
        assert p_cover(100.0 * FIG1_LEFT.d_high, FIG1_LEFT) < 1e-9

    def test_monotone_and_bounded(self):
        grid = np.linspace(0.0, 5.0 * FIG1_RIGHT.d_high, 200)
        values = [p_cover(d, FIG1_RIGHT) for d in grid]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(a >= b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("distance", [0.001, 0.01, 0.03])
    def test_against_monte_carlo_oracle(self, distance):
        p = FIG1_LEFT
        rng = np.random.default_rng(20240410)
        n = 10**7
        covered = rng.exponential(p.tau_m, n) * rng.uniform(p.v_min, p.v_max, n)
        estimate = np.mean(covered >= distance)
        se = math.sqrt(max(estimate * (1.0 - estimate), 1e-12) / n)
        assert abs(p_cover(distance, p) - estimate) <= 3.0 * se

    def test_equal_speeds_limit(self):
        p = RdParams(0.5, 0.5, 1.0, 2.0)
        assert p_cover(1.0, p) == pytest.approx(math.exp(-1.0), rel=1e-14)


class TestExitRate:
    def test_matches_quadrature_of_p_cover(self):
        # core correctness oracle: the closed form must equal the direct
        # line integral of p_cover / tau_s along the chord
        for params in (FIG1_LEFT, FIG1_RIGHT):
            for x in (0.05, 0.3, 0.5, 0.9):
                for theta in (-1.4, -0.7, 0.0, 0.4, 1.2):
                    from bordersim.geometry import chord_length

                    z = chord_length(x, theta)
                    expected = (
                        quad(
                            lambda l: p_cover(l, params),
                            0.0,
                            z,
                            epsabs=1e-13,
                            epsrel=1e-11,
                            limit=300,
                        )[0]
                        / params.tau_s
                    )
                    assert exit_rate(x, theta, params) == pytest.approx(
                        expected, rel=1e-8
                    )

    def test_mirror_symmetry(self):
        for x in (0.1, 0.25, 0.6):
            for theta in (-1.0, -0.2, 0.8):
                assert exit_rate(x, theta, FIG1_RIGHT) == pytest.approx(
                    exit_rate(1.0 - x, -theta, FIG1_RIGHT), rel=1e-12
                )

    def test_nondecreasing_in_chord_length(self):
        from bordersim.geometry import chord_length

        thetas = np.linspace(-math.pi / 2, math.pi / 2, 101)
        pairs = sorted(
            (chord_length(0.3, th), exit_rate(0.3, th, FIG1_RIGHT)) for th in thetas
        )
        rates = [r for _, r in pairs]
        assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))

    def test_zero_pause_rejected(self):
        params = RdParams(0.1, 1.0, 0.0, 3.0)
        with pytest.raises(ValueError):
            exit_rate(0.5, 0.0, params)

    def test_equal_speeds_limit(self):
        params = RdParams(0.5, 0.5, 2.0, 2.0)
        z = 0.8
        expected = quad(lambda l: p_cover(l, params), 0.0, z)[0] / params.tau_s
        assert rate_from_chord(z, params) == pytest.approx(expected, rel=1e-10)


@pytest.fixture(scope="module")
def small_table():
    return exit_pdf(FIG1_LEFT, grid_size=128, quadrature_tolerance=1e-9)


class TestExitPdf:
    def test_peak_at_midside(self, small_table):
        assert np.argmax(small_table.pdf) in (63, 64)

    def test_cdf_midpoint(self, small_table):
        assert np.interp(0.5, small_table.grid, small_table.cdf) == pytest.approx(
            0.5, abs=1e-9
        )

    def test_symmetry(self, small_table):
        asym = np.max(np.abs(small_table.pdf - small_table.pdf[::-1]))
        assert asym <= 1e-6 * np.max(small_table.pdf)

    def test_cdf_endpoints_and_monotonicity(self, small_table):
        assert small_table.cdf[0] == 0.0
        assert small_table.cdf[-1] == 1.0
        assert np.all(np.diff(small_table.cdf) >= 0.0)

    def test_records_normalization(self, small_table):
        assert small_table.normalization > 0.0

    def test_csv_roundtrip(self, small_table):
        text = small_table.to_csv()
        assert text.splitlines()[0] == "x,pdf,cdf"
        back = ExitPdfTable.from_csv(text)
        np.testing.assert_array_equal(back.grid, small_table.grid)
        np.testing.assert_array_equal(back.pdf, small_table.pdf)
        np.testing.assert_array_equal(back.cdf, small_table.cdf)

    def test_grid_size_floor(self):
        with pytest.raises(ValueError):
            exit_pdf(FIG1_LEFT, grid_size=32)


class TestSampleExitX:
    def test_median_of_symmetric_table(self, small_table):
        assert sample_exit_x(small_table, 0.5) == pytest.approx(0.5, abs=1e-9)

    def test_lower_endpoint(self, small_table):
        assert sample_exit_x(small_table, 0.0) == 0.0

    def test_resampling_self_consistency(self, small_table):
        rng = np.random.default_rng(99)
        samples = sample_exit_x(small_table, rng.random(10**6))
        edges = np.linspace(0.0, 1.0, 51)
        counts, _ = np.histogram(samples, bins=edges)
        probs = np.diff(np.interp(edges, small_table.grid, small_table.cdf))
        expected = len(samples) * probs
        statistic = np.sum((counts - expected) ** 2 / expected)
        assert statistic < chi2.ppf(0.999, 49)


class TestAngleTables:
    def test_cdfs_are_proper(self):
        tables = build_angle_tables(FIG1_RIGHT, n_x_bins=16, n_theta=256)
        assert np.all(tables.cdfs[:, 0] == 0.0)
        np.testing.assert_allclose(tables.cdfs[:, -1], 1.0)
        assert np.all(np.diff(tables.cdfs, axis=1) >= -1e-15)

    def test_mirror_pairing(self):
        tables = build_angle_tables(FIG1_RIGHT, n_x_bins=16, n_theta=256)
        # bin at x and at 1-x must satisfy F_x(theta) = 1 - F_{1-x}(-theta)
        left = tables.cdfs[2]
        right = tables.cdfs[13]
        np.testing.assert_allclose(left, 1.0 - right[::-1], atol=1e-9)

    def test_samples_in_range(self):
        tables = build_angle_tables(FIG1_RIGHT, n_x_bins=8, n_theta=128)
        rng = np.random.default_rng(3)
        for _ in range(100):
            th = tables.sample(rng.random(), rng.random())
            assert -math.pi / 2 <= th <= math.pi / 2


class TestRdParamsValidation:
    def test_rejects_zero_v_min(self):
        with pytest.raises(ValueError):
            RdParams(0.0, 1.0, 1.0, 3.0)

    def test_rejects_inverted_speeds(self):
        with pytest.raises(ValueError):
            RdParams(1.0, 0.5, 1.0, 3.0)

    def test_rejects_nonpositive_tau_m(self):
        with pytest.raises(ValueError):
            RdParams(0.1, 1.0, 1.0, 0.0)

    def test_rejects_negative_tau_s(self):
        with pytest.raises(ValueError):
            RdParams(0.1, 1.0, -1.0, 3.0)
