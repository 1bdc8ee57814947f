import math

import numpy as np
import pytest

from bouss2d.jumps import (
    JumpEvent,
    LevyRadialMeasure,
    NoiseStream,
    compensator_weight,
    make_stream,
    normalizing_c_nu,
    rescale,
    sample_count,
    sample_events,
    sample_radii,
    sample_radius,
    total_rate,
)

from conftest import gauss_legendre_integral


def density(m):
    return lambda r: m.c_nu * r ** (-1.0 - m.beta)


class TestMeasure:
    def test_total_rate_closed_form(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        assert total_rate(m) == pytest.approx(2.0, abs=1e-14)

    def test_total_rate_vanishes_as_r_min_approaches_one(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=1.0 - 1e-12)
        assert total_rate(m) == pytest.approx(0.0, abs=1e-9)

    def test_total_rate_matches_quadrature(self):
        # independent composite Gauss-Legendre oracle for the mass integral
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        oracle = gauss_legendre_integral(density(m), m.r_min, 1.0)
        assert abs(total_rate(m) - oracle) < 1e-8 * oracle

    def test_validation(self):
        with pytest.raises(ValueError):
            LevyRadialMeasure(beta=1.5, c_nu=1.0, r_min=0.1)
        with pytest.raises(ValueError):
            LevyRadialMeasure(beta=0.5, c_nu=-1.0, r_min=0.1)
        with pytest.raises(ValueError):
            LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.0)

    def test_normalizing_c_nu_gives_unit_mass(self):
        c = normalizing_c_nu(0.6, 1e-3)
        m = LevyRadialMeasure(beta=0.6, c_nu=c, r_min=1e-3)
        assert total_rate(m) == pytest.approx(1.0, abs=1e-14)


class TestCounts:
    def test_zero_mass_always_zero(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=0.0, r_min=0.25)
        stream = make_stream(m, 0, 1)
        assert all(sample_count(stream, 0.1) == 0 for _ in range(100))

    def test_mean_and_variance_at_lambda_dt_2(self):
        # Lambda = 2 at these parameters, dt = 1 -> Poisson(2)
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        stream = make_stream(m, 7, 1)
        draws = np.array([sample_count(stream, 1.0) for _ in range(100_000)])
        sigma = math.sqrt(2.0 / 100_000)
        assert abs(draws.mean() - 2.0) < 3 * sigma
        assert abs(draws.var() - 2.0) < 0.05 * 2.0

    def test_rejects_nonpositive_dt(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        with pytest.raises(ValueError):
            sample_count(make_stream(m, 0, 1), 0.0)


class _FakeRng:
    """Deterministic uniform source for endpoint checks."""

    def __init__(self, value):
        self.value = value

    def random(self, size):
        return np.full(size, self.value)


class TestRadii:
    def test_inverse_cdf_endpoint_u0(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        stream = NoiseStream(m, _FakeRng(0.0))
        r = sample_radius(stream)
        assert r == np.nextafter(1.0, 0.0)

    def test_inverse_cdf_endpoint_u_near_1(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        stream = NoiseStream(m, _FakeRng(1.0 - 1e-12))
        assert sample_radius(stream) == pytest.approx(m.r_min, rel=1e-9)

    def test_support(self):
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        r = sample_radii(make_stream(m, 3, 1), 10_000)
        assert np.all(r >= m.r_min) and np.all(r < 1.0)

    def test_mean_radius_matches_quadrature_oracle(self):
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        lam = gauss_legendre_integral(density(m), m.r_min, 1.0)
        mean_oracle = gauss_legendre_integral(lambda r: r * density(m)(r), m.r_min, 1.0) / lam
        r = sample_radii(make_stream(m, 12345, 1), 1_000_000)
        assert abs(r.mean() - mean_oracle) < 0.01 * mean_oracle

    def test_radius_cdf_kolmogorov_smirnov(self):
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        r = np.sort(sample_radii(make_stream(m, 99, 1), 1_000_000))
        a = m.r_min ** (-m.beta)
        cdf = (a - r ** (-m.beta)) / (a - 1.0)
        n = len(r)
        ecdf_hi = np.arange(1, n + 1) / n
        ecdf_lo = np.arange(0, n) / n
        ks = max(np.max(ecdf_hi - cdf), np.max(cdf - ecdf_lo))
        assert ks < 0.005


class TestCompensator:
    def test_constant_shape_reduces_to_total_rate(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        assert compensator_weight(m, lambda r: 1.0) == pytest.approx(
            total_rate(m), abs=1e-10
        )

    def test_zero_shape(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        assert compensator_weight(m, lambda r: 0.0) == 0.0

    def test_lipschitz_mass_against_gl_oracle(self):
        # the squared fast-amplitude shape, integrated against the intensity
        m = LevyRadialMeasure(beta=0.6, c_nu=1.0, r_min=1e-3)
        shape = lambda r: np.exp(-2.0 * r * r) / 4.0
        oracle = gauss_legendre_integral(lambda r: shape(r) * density(m)(r), m.r_min, 1.0)
        value = compensator_weight(m, lambda r: math.exp(-2.0 * r * r) / 4.0)
        assert abs(value - oracle) < 1e-8
        # frozen reference value for downstream rate computations
        assert value == pytest.approx(25.61842452895832, abs=1e-6)

    def test_non_finite_shape_raises(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        with pytest.raises(FloatingPointError):
            compensator_weight(m, lambda r: math.inf)

    def test_compensated_increment_mean_zero(self):
        # over many steps the compensated shape sum is a martingale increment
        m = LevyRadialMeasure(beta=0.6, c_nu=0.5, r_min=1e-3)
        shape = lambda r: 1.0 / math.sqrt(1.0 + r * r)
        w = compensator_weight(m, shape)
        stream = rescale(make_stream(m, 2718, 1), 0.5)
        dt = 0.05
        n_steps = 100_000
        incs = np.empty(n_steps)
        for i in range(n_steps):
            s = sum(shape(e.radius) for e in sample_events(stream, dt))
            incs[i] = s - w * stream.time_scale * dt
        se = incs.std(ddof=1) / math.sqrt(n_steps)
        assert abs(incs.mean()) < 4 * se


class TestRescale:
    def test_identity_at_eps_1(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        stream = make_stream(m, 4, 1)
        assert rescale(stream, 1.0).time_scale == 1.0

    def test_rejects_bad_eps(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)
        stream = make_stream(m, 4, 1)
        for eps in (0.0, -1.0, 2.0):
            with pytest.raises(ValueError):
                rescale(stream, eps)

    def test_mean_count_scales_by_4_at_eps_quarter(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)  # Lambda = 2
        stream = rescale(make_stream(m, 40, 1), 0.25)
        draws = np.array([sample_count(stream, 0.25) for _ in range(100_000)])
        sigma = math.sqrt(2.0 / 100_000)
        assert abs(draws.mean() - 2.0) < 3 * sigma  # 2*4*0.25 = 2

    def test_mean_count_5_at_eps_tenth(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=1.0, r_min=0.25)  # Lambda*dt = 0.5
        stream = rescale(make_stream(m, 41, 1), 0.1)
        draws = np.array([sample_count(stream, 0.25) for _ in range(100_000)])
        sigma = math.sqrt(5.0 / 100_000)
        assert abs(draws.mean() - 5.0) < 3 * sigma


class TestDeterminism:
    def test_identical_keys_reproduce_bit_for_bit(self):
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        a = make_stream(m, 123, 0, 5, 1)
        b = make_stream(m, 123, 0, 5, 1)
        ev_a = [sample_events(a, 0.5) for _ in range(200)]
        ev_b = [sample_events(b, 0.5) for _ in range(200)]
        assert ev_a == ev_b

    def test_distinct_stream_ids_differ(self):
        m = LevyRadialMeasure(beta=0.8, c_nu=1.0, r_min=1e-3)
        a = make_stream(m, 123, 0, 5, 1)
        b = make_stream(m, 123, 0, 5, 2)
        ra = sample_radii(a, 1000)
        rb = sample_radii(b, 1000)
        assert not np.array_equal(ra, rb)

    def test_jump_event_fields(self):
        m = LevyRadialMeasure(beta=0.5, c_nu=4.0, r_min=0.25)
        stream = make_stream(m, 9, 1)
        for _ in range(50):
            for e in sample_events(stream, 0.3):
                assert isinstance(e, JumpEvent)
                assert 0.0 <= e.time < 0.3
                assert m.r_min <= e.radius < 1.0
