import math

import numpy as np
import pytest

from bouss2d import diagnostics as dg
from bouss2d import model
from bouss2d.config import ExperimentConfig
from bouss2d.integrate import (
    CoupledNoise,
    PathRecord,
    StepConfig,
    integrate_slow_fast,
)
from bouss2d.jumps import LevyRadialMeasure, make_stream
from bouss2d.spectral import (
    SpectralField,
    biot_savart,
    field_from_function,
    norm_h,
    zero_field,
)

from conftest import random_field

OFF = LevyRadialMeasure(beta=0.5, c_nu=0.0, r_min=1e-3)


def _path(times, fields, norms=None):
    times = np.asarray(times, dtype=float)
    if norms is None:
        norms = np.zeros_like(times)
    return PathRecord(
        times=times,
        j_norm=np.asarray(norms, dtype=float),
        j_grad_norm=np.zeros_like(times),
        theta_norm=np.zeros_like(times),
        theta_grad_norm=np.zeros_like(times),
        j_fields=fields,
    )


class TestSupError:
    def test_identical_paths(self, grid):
        rng = np.random.default_rng(1)
        fields = [random_field(grid, rng).coeffs for _ in range(5)]
        times = np.arange(5) * 0.25
        assert dg.sup_error(_path(times, fields), _path(times, list(fields))) == 0.0

    def test_single_time_gap(self, grid):
        rng = np.random.default_rng(2)
        base = [random_field(grid, rng).coeffs for _ in range(5)]
        other = [c.copy() for c in base]
        bump = field_from_function(grid, lambda X, Y: np.cos(X))
        bump_scaled = bump.coeffs * (0.3 / norm_h(bump))
        other[2] = other[2] + bump_scaled
        times = np.arange(5) * 0.25
        err = dg.sup_error(_path(times, base), _path(times, other))
        assert err == pytest.approx(0.3, rel=1e-12)

    def test_time_grid_mismatch(self, grid):
        rng = np.random.default_rng(3)
        fields = [random_field(grid, rng).coeffs for _ in range(3)]
        a = _path([0.0, 0.5, 1.0], fields)
        b = _path([0.0, 0.25, 1.0], list(fields))
        with pytest.raises(ValueError):
            dg.sup_error(a, b)


class TestErrorStats:
    def test_mean_mse_consistency(self):
        rng = np.random.default_rng(4)
        samples = rng.uniform(0, 2, 100)
        st = dg.ErrorStats.from_samples(0.5, samples)
        assert abs(st.mean - samples.mean()) < 1e-12
        assert abs(st.mse - np.mean(samples**2)) < 1e-12

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            dg.ErrorStats.from_samples(0.5, [-0.1, 0.2])


class TestPowerLawFit:
    def test_exact_power_law(self):
        eps = [1.0, 0.5, 0.25, 0.1]
        mse = [2.0 * e**0.645 for e in eps]
        fit = dg.power_law_fit(eps, mse)
        assert fit.exponent == pytest.approx(0.645, abs=1e-12)
        assert fit.coefficient == pytest.approx(2.0, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_mse(self):
        fit = dg.power_law_fit([1.0, 0.5, 0.25, 0.1], [3.0, 3.0, 3.0, 3.0])
        assert fit.exponent == pytest.approx(0.0, abs=1e-14)

    def test_rejects_nonpositive_and_short(self):
        with pytest.raises(ValueError):
            dg.power_law_fit([1.0, 0.5, 0.25], [1.0, -1.0, 0.5])
        with pytest.raises(ValueError):
            dg.power_law_fit([1.0, 0.5], [1.0, 0.5])


class TestIncrementLaw:
    def _decay_path(self, grid, times):
        j0 = field_from_function(grid, lambda X, Y: np.cos(X))
        fields = [np.exp(-t) * j0.coeffs for t in times]
        return _path(times, fields)

    def test_smooth_path_slope_2(self, grid):
        lags = [0.002, 0.004, 0.008, 0.016]
        anchors = [0.2, 0.4, 0.6, 0.8, 1.0]
        times = sorted({round(a - l, 9) for a in anchors for l in lags} | set(anchors))
        path = self._decay_path(grid, np.array(times))
        rep = dg.increment_law([path], lags)
        assert rep.fitted_slope == pytest.approx(2.0, abs=0.05)
        assert rep.fitted_slope >= 0.5 - 0.15

    def test_constant_path_rejected(self, grid):
        times = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        j0 = field_from_function(grid, lambda X, Y: np.cos(X))
        path = _path(times, [j0.coeffs.copy() for _ in times])
        with pytest.raises(ValueError):
            dg.increment_law([path], [0.25, 0.5, 0.75])

    def test_too_few_lags_rejected(self, grid):
        path = self._decay_path(grid, np.array([0.0, 0.5, 1.0]))
        with pytest.raises(ValueError):
            dg.increment_law([path], [0.5])


class TestContraction:
    def test_noise_free_rate_is_2(self, grid):
        # pure heat decay of the difference: |e^{-t} cos x|^2 ~ e^{-2t}
        theta1 = field_from_function(grid, lambda X, Y: np.cos(X))
        theta2 = zero_field(grid)
        rates = model.compute_rates(1, 0.1, OFF)
        rep = dg.contraction_test(
            biot_savart(zero_field(grid)), theta1, theta2, 2.0, 1, OFF, rates,
            base_seed=0, dt=5e-3,
        )
        assert rep.fitted_rate == pytest.approx(2.0, rel=0.01)
        assert rep.passed

    def test_degenerate_identical_inputs(self, grid):
        theta = field_from_function(grid, lambda X, Y: np.cos(X))
        rates = model.compute_rates(1, 0.1, OFF)
        rep = dg.contraction_test(
            biot_savart(zero_field(grid)), theta, theta, 1.0, 1, OFF, rates,
            base_seed=0, dt=5e-3,
        )
        assert rep.degenerate and rep.passed

    def test_example_config_beats_third_of_lambda_p(self, grid):
        cfg = ExperimentConfig()
        rng = np.random.default_rng(55)
        theta1 = random_field(grid, rng, kmax=3)
        theta2 = random_field(grid, rng, kmax=3)
        u = biot_savart(field_from_function(grid, lambda X, Y: np.cos(X) + np.sin(Y)))
        rates = cfg.rates()
        rep = dg.contraction_test(
            u, theta1, theta2, 2.0, 8, cfg.measure2(), rates,
            base_seed=cfg.base_seed, dt=cfg.frozen_dt,
        )
        assert rep.feasible
        assert rep.fitted_rate > 0.0
        assert rep.fitted_rate >= rates.lambda_p / 3.0
        assert rep.passed


class TestInvariant:
    def test_noise_free(self, grid):
        rates = model.compute_rates(1, 0.1, OFF)
        theta0 = field_from_function(grid, lambda X, Y: np.sin(X))
        rep = dg.invariant_g_estimate(
            biot_savart(zero_field(grid)), make_stream(OFF, 0, 2), rates,
            cfg=model.ErgodicRunConfig(dt=5e-3, burn_in=30.0, window=40.0, spacing=0.5),
            theta0=theta0,
        )
        assert rep.norm_g_hat < 1e-6
        assert rep.passed

    def test_example_config_symmetry(self, grid):
        cfg = ExperimentConfig()
        rates = cfg.rates()
        j = field_from_function(grid, lambda X, Y: np.cos(X) + np.sin(Y))
        theta0 = field_from_function(grid, lambda X, Y: np.sin(X) + np.cos(Y))
        rep = dg.invariant_g_estimate(
            biot_savart(j), make_stream(cfg.measure2(), cfg.base_seed, 42, 2), rates,
            cfg=model.ErgodicRunConfig(dt=cfg.frozen_dt), theta0=theta0, j=j,
        )
        assert rep.passed  # |g_hat|_H <= 3 stderr
        # snapshot second moment sits far inside the moment-bound shape
        assert rep.second_moment <= rep.reference_level

    def test_moment_bound_form_reported(self, grid):
        rates = model.compute_rates(1, 0.1, OFF)
        rep = dg.invariant_g_estimate(
            biot_savart(zero_field(grid)), make_stream(OFF, 0, 2), rates,
            cfg=model.ErgodicRunConfig(dt=5e-3, burn_in=5.0, window=30.0, spacing=0.5),
            theta0=field_from_function(grid, lambda X, Y: np.sin(X)),
        )
        assert math.isfinite(rep.second_moment)
        assert rep.reference_level >= 1.0


class TestMoments:
    def _paths(self, grid, n, noise_on=False):
        cfg = StepConfig(dt=1e-2)
        j0 = field_from_function(grid, lambda X, Y: np.cos(X) + np.sin(Y))
        out = []
        for s in range(n):
            noise = CoupledNoise(make_stream(OFF, s, 1), make_stream(OFF, s, 2))
            out.append(
                integrate_slow_fast(
                    j0, zero_field(grid), cfg, noise, model.CoefficientSet.linear(),
                    0.5, np.arange(0, 51) * 1e-2,
                )
            )
        return out, j0

    def test_pure_decay_sup_is_initial_norm(self, grid):
        paths, j0 = self._paths(grid, 30)
        rep = dg.estimate_moments(paths, p=1)
        assert rep.sup_moment_j == pytest.approx(norm_h(j0) ** 2, rel=1e-12)
        assert rep.stderr_j == 0.0
        assert rep.theta_sup_by_t == 0.0

    def test_zero_initial_data_zero_moments(self, grid):
        cfg = StepConfig(dt=1e-2)
        paths = []
        for s in range(30):
            noise = CoupledNoise(make_stream(OFF, s, 1), make_stream(OFF, s, 2))
            paths.append(
                integrate_slow_fast(
                    zero_field(grid), zero_field(grid), cfg, noise,
                    model.CoefficientSet.linear(), 0.2, [0.0, 0.1, 0.2],
                )
            )
        rep = dg.estimate_moments(paths, p=1)
        assert rep.sup_moment_j == 0.0 and rep.theta_sup_by_t == 0.0

    def test_too_few_samples(self, grid):
        paths, _ = self._paths(grid, 5)
        with pytest.raises(ValueError):
            dg.estimate_moments(paths, p=1)

    def test_uniformity_helper(self):
        mk = lambda m, se: dg.MomentReport(1, 30, m, se, 0, 0, 0, 0)
        assert dg.moments_eps_uniform([mk(1.0, 0.1), mk(1.2, 0.1)])
        assert not dg.moments_eps_uniform([mk(1.0, 0.01), mk(1.2, 0.01)])


class TestTrend:
    def test_perfect_refinement_passes(self):
        deltas = [8e-3, 4e-3, 2e-3, 1e-3]
        gaps = [4.0, 2.0, 1.0, 0.5]
        rep = dg.khasminskii_trend(deltas, gaps)
        assert rep.passed
        assert rep.tau == pytest.approx(-1.0)
        assert rep.p_value == pytest.approx(1.0 / 24.0, rel=1e-9)

    def test_increasing_gaps_fail(self):
        rep = dg.khasminskii_trend([8e-3, 4e-3, 2e-3, 1e-3], [0.5, 1.0, 2.0, 4.0])
        assert not rep.passed

    def test_gap_estimator(self, grid):
        from bouss2d.integrate import run_khasminskii

        j0 = field_from_function(grid, lambda X, Y: np.cos(X) + np.sin(Y))
        theta0 = field_from_function(grid, lambda X, Y: 0.3 * np.sin(X + Y))
        noise = CoupledNoise(make_stream(OFF, 0, 1), make_stream(OFF, 0, 2))
        recs = [
            run_khasminskii(
                j0, theta0, StepConfig(dt=1e-3, eps=0.5), noise,
                model.CoefficientSet.example(), 0.02, delta=4e-3,
            )
        ]
        assert dg.khasminskii_gap(recs) >= 0.0
        with pytest.raises(ValueError):
            dg.khasminskii_gap([])
