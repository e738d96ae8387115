"""Tests for the Euler engine: determinism, explosion handling, estimators."""

import io
import math

import numpy as np
import pytest

from qghjm import (ConfigError, EmptySample, ForwardCurve, ModelParams,
                   OnExplosion, SimConfig, expectation_functional,
                   explosion_probability, ode_integrate,
                   pathwise_discount_factors, sigma_r, simulate_batch,
                   simulate_path)
from qghjm.sde_engine import write_explosions_csv, write_paths_csv


def params(**kw):
    base = dict(sigma=0.2, beta=0.0, gamma=1.0, epsilon=0.01, lambda0=0.1)
    base.update(kw)
    return ModelParams(**base)


FLAT = ForwardCurve.flat(0.1)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"dt": 0.0}, {"dt": -0.1}, {"horizon": 0.005}, {"n_paths": 0},
        {"record_stride": 0}, {"explosion_threshold": -1.0},
    ])
    def test_invalid(self, kw):
        base = dict(dt=0.01, horizon=1.0, n_paths=10, seed=1)
        base.update(kw)
        with pytest.raises(ConfigError):
            SimConfig(**base)

    def test_threshold_must_clear_dynamics(self):
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=1, seed=1,
                        explosion_threshold=0.5)
        with pytest.raises(ConfigError, match="explosion_threshold"):
            simulate_path(params(), FLAT, cfg, 0)

    def test_json_round_trip(self):
        cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=5, seed=7,
                        explosion_threshold=1e7, record_stride=10)
        assert SimConfig.from_json(cfg.to_json()) == cfg
        with pytest.raises(ConfigError, match="unknown"):
            SimConfig.from_json({"dt": 0.01, "horizon": 1, "n_paths": 1,
                                 "seed": 0, "dtt": 2})


class TestDeterminism:
    def test_path_independent_of_batch(self):
        p = params(beta=0.05)
        cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=8, seed=42)
        batch = simulate_batch(p, FLAT, cfg, record=True)
        for i in [0, 3, 7]:
            single = simulate_path(p, FLAT, cfg, i)
            np.testing.assert_array_equal(single.samples[:, 1],
                                          batch.rec_r[:, i])
            np.testing.assert_array_equal(single.samples[:, 2],
                                          batch.rec_y[:, i])

    def test_launch_order_irrelevant(self):
        p = params()
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=4, seed=9)
        fwd = simulate_batch(p, FLAT, cfg, [0, 1, 2, 3], record=True)
        rev = simulate_batch(p, FLAT, cfg, [3, 2, 1, 0], record=True)
        np.testing.assert_array_equal(fwd.rec_r[:, 0], rev.rec_r[:, 3])
        np.testing.assert_array_equal(fwd.rec_r[:, 3], rev.rec_r[:, 0])

    def test_thread_count_irrelevant(self):
        p = params(beta=0.02)
        cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=16, seed=5)
        one = simulate_batch(p, FLAT, cfg, record=True, threads=1)
        four = simulate_batch(p, FLAT, cfg, record=True, threads=4)
        np.testing.assert_array_equal(one.rec_r, four.rec_r)
        np.testing.assert_array_equal(one.rec_y, four.rec_y)
        np.testing.assert_array_equal(one.tau_hat, four.tau_hat)

    def test_same_seed_same_result(self):
        p = params()
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=3, seed=123)
        a = simulate_path(p, FLAT, cfg, 1)
        b = simulate_path(p, FLAT, cfg, 1)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_displaced_equals_shifted_lognormal(self):
        # displaced run == shifted-curve run minus the shift, bit for bit
        a = 0.03
        disp = params(displacement=a, beta=0.04)
        shifted = params(lambda0=0.1 + a, beta=0.04)
        curve_shifted = ForwardCurve.flat(0.1 + a)
        cfg = SimConfig(dt=0.01, horizon=3.0, n_paths=4, seed=77)
        b1 = simulate_batch(disp, FLAT, cfg, record=True)
        b2 = simulate_batch(shifted, curve_shifted, cfg, record=True)
        np.testing.assert_array_equal(b1.rec_r, b2.rec_r - a)
        np.testing.assert_array_equal(b1.rec_y, b2.rec_y)


class TestScheme:
    def test_record_stride(self):
        p = params()
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=1, seed=2,
                        record_stride=25)
        res = simulate_path(p, FLAT, cfg, 0)
        np.testing.assert_allclose(res.samples[:, 0],
                                   [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_positivity(self):
        p = params(gamma=0.6, beta=0.1)
        cfg = SimConfig(dt=0.01, horizon=5.0, n_paths=20, seed=3)
        batch = simulate_batch(p, FLAT, cfg, record=True)
        assert np.nanmin(batch.rec_r) > 0.0
        assert np.nanmin(batch.rec_y) >= 0.0

    def test_y_recursion_is_riemann_sum_without_mean_reversion(self):
        # beta = 0: y_n accumulates sigma_r(r_j)^2 dt exactly
        p = params()
        cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=1, seed=11)
        res = simulate_path(p, FLAT, cfg, 0)
        t, r, y = res.samples.T
        acc = 0.0
        for j in range(len(r) - 1):
            sr = sigma_r(r[j], p)
            acc += (sr * sr - 2.0 * p.beta * y[j]) * cfg.dt
        assert acc == pytest.approx(y[-1], rel=1e-12)

    def test_y_recursion_matches_discounted_riemann_sum(self):
        # beta > 0: the recursion equals the (1 - 2 beta dt)-kernel sum to
        # rounding, and the exp(-2 beta dt) kernel to O(dt^2 * n)
        p = params(beta=0.1)
        cfg = SimConfig(dt=0.01, horizon=3.0, n_paths=1, seed=13)
        res = simulate_path(p, FLAT, cfg, 0)
        _, r, y = res.samples.T
        n = len(r) - 1
        lin, expk = 0.0, 0.0
        fac_lin = 1.0 - 2.0 * p.beta * cfg.dt
        fac_exp = math.exp(-2.0 * p.beta * cfg.dt)
        for j in range(n):
            sr2 = sigma_r(r[j], p) ** 2
            lin = lin * fac_lin + sr2 * cfg.dt
            expk = expk * fac_exp + sr2 * cfg.dt
        assert y[-1] == pytest.approx(lin, rel=1e-10)
        assert y[-1] == pytest.approx(expk, rel=4.0 * p.beta ** 2 * cfg.dt
                                      * cfg.horizon + 1e-10)

    def test_small_noise_tracks_ode(self):
        p = params(sigma=1e-12, beta=0.1)
        curve = ForwardCurve.tabulated([[0.0, 0.10], [2.0, 0.13], [5.0, 0.11]])
        cfg = SimConfig(dt=0.01, horizon=5.0, n_paths=1, seed=1,
                        record_stride=50)
        res = simulate_path(p, curve, cfg, 0)
        ode = ode_integrate(params(sigma=1e-12, beta=0.1), curve, 5.0,
                            tol=1e-12)
        r_ode = np.interp(res.samples[:, 0], ode.trace[:, 0], ode.trace[:, 1])
        # explicit Euler carries O(dt) global error
        np.testing.assert_allclose(res.samples[:, 1], r_ode, rtol=5e-3)

    def test_halving_dt_moves_mean_by_order_dt(self):
        p = params(beta=0.5)
        means = {}
        for dt in (0.08, 0.04, 0.02):
            cfg = SimConfig(dt=dt, horizon=4.0, n_paths=4000, seed=21)
            batch = simulate_batch(p, FLAT, cfg)
            means[dt] = batch.terminal_r[~batch.exploded].mean()
        assert abs(means[0.08] - means[0.04]) < 0.5 * 0.08
        assert abs(means[0.04] - means[0.02]) < 0.5 * 0.04


class TestExplosion:
    def explosive(self):
        # strong volatility pulls the blow-up inside a short horizon
        return params(sigma=0.5), SimConfig(dt=0.02, horizon=30.0,
                                            n_paths=300, seed=31)

    def test_explosions_detected(self):
        p, cfg = self.explosive()
        batch = simulate_batch(p, FLAT, cfg)
        frac = batch.exploded.mean()
        assert frac > 0.5
        tmax = batch.tau_hat[batch.exploded]
        assert tmax.max() <= cfg.horizon
        assert tmax.min() > 0.0

    def test_exploded_paths_stop_recording(self):
        p, cfg = self.explosive()
        res = None
        batch = simulate_batch(p, FLAT, cfg)
        idx = int(np.flatnonzero(batch.exploded)[0])
        res = simulate_path(p, FLAT, cfg, idx)
        assert res.exploded
        assert res.tau_hat <= cfg.horizon
        assert np.all(res.samples[:, 0] <= res.tau_hat)
        assert np.all(np.isfinite(res.samples))
        assert np.all(res.samples[:, 1:] < cfg.explosion_threshold)

    def test_probability_estimator(self):
        p, cfg = self.explosive()
        est = explosion_probability(p, FLAT, cfg, 30.0)
        assert est.mean > 0.5
        assert est.n == 300
        assert est.n_exploded == round(est.mean * est.n)
        assert est.std_error == pytest.approx(
            math.sqrt(est.mean * (1 - est.mean) / est.n))
        early = explosion_probability(p, FLAT, cfg, 5.0)
        assert early.mean <= est.mean

    def test_single_quiet_path(self):
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=1, seed=4)
        est = explosion_probability(params(), FLAT, cfg, 1.0)
        assert est.mean == 0.0 and est.n_exploded == 0

    def test_t_larger_than_horizon_rejected(self):
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=1, seed=4)
        with pytest.raises(ConfigError):
            explosion_probability(params(), FLAT, cfg, 2.0)

    def test_mean_reversion_orders_explosion_fractions(self):
        # common random numbers: same seed reuses the same noise per path
        cfg = SimConfig(dt=0.02, horizon=30.0, n_paths=400, seed=55)
        free = simulate_batch(params(sigma=0.5, beta=0.0), FLAT, cfg)
        damped = simulate_batch(params(sigma=0.5, beta=0.05), FLAT, cfg)
        for T in (10.0, 20.0, 30.0):
            f0 = (free.tau_hat <= T).mean()
            fb = (damped.tau_hat <= T).mean()
            se = math.sqrt(max(f0 * (1 - f0), 1e-9) / cfg.n_paths)
            assert fb <= f0 + 2.0 * se


class TestExpectation:
    def test_constant_payoff(self):
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=50, seed=6)
        est = expectation_functional(params(), FLAT, cfg, lambda s: 1.0)
        assert est.mean == 1.0
        assert est.std_error == 0.0
        assert not est.diverged

    def test_small_noise_terminal_matches_ode(self):
        p = params(sigma=1e-10, beta=0.1)
        cfg = SimConfig(dt=0.005, horizon=3.0, n_paths=16, seed=8)
        est = expectation_functional(p, FLAT, cfg, lambda s: s.r)
        ode = ode_integrate(p, FLAT, 3.0, tol=1e-12)
        assert est.mean == pytest.approx(ode.terminal[0],
                                         abs=3 * est.std_error + 2e-3 * 0.005)

    def test_diverge_flags_explosions(self):
        p = params(sigma=0.5)
        cfg = SimConfig(dt=0.02, horizon=30.0, n_paths=100, seed=14)
        est = expectation_functional(p, FLAT, cfg, lambda s: s.r,
                                     OnExplosion.DIVERGE)
        assert est.diverged
        assert est.n_exploded > 0
        assert math.isfinite(est.mean)

    def test_exclude_counts_explosions(self):
        p = params(sigma=0.5)
        cfg = SimConfig(dt=0.02, horizon=30.0, n_paths=100, seed=14)
        est = expectation_functional(p, FLAT, cfg, lambda s: s.r,
                                     OnExplosion.EXCLUDE)
        assert not est.diverged
        assert est.n == 100
        assert 0 < est.n_exploded < 100

    def test_exclude_raises_when_nothing_survives(self):
        # threshold low enough that these four paths all cross it
        p = params(sigma=1.0)
        cfg = SimConfig(dt=0.01, horizon=40.0, n_paths=4, seed=15,
                        explosion_threshold=1.0)
        with pytest.raises(EmptySample):
            expectation_functional(p, FLAT, cfg, lambda s: s.r,
                                   OnExplosion.EXCLUDE)

    def test_discount_factors(self):
        p = params(beta=0.3)
        cfg = SimConfig(dt=0.005, horizon=2.0, n_paths=64, seed=16)
        dfs, exploded = pathwise_discount_factors(p, FLAT, cfg, 1.0)
        assert not exploded.any()
        assert np.all((dfs > 0.8) & (dfs < 1.0))


class TestCsv:
    def test_schema_and_reproducibility(self):
        p = params(sigma=0.5)
        cfg = SimConfig(dt=0.02, horizon=10.0, n_paths=5, seed=17,
                        record_stride=100)
        texts = []
        for _ in range(2):
            batch = simulate_batch(p, FLAT, cfg, record=True)
            buf_p, buf_e = io.StringIO(), io.StringIO()
            write_paths_csv(batch, buf_p)
            write_explosions_csv(batch, buf_e)
            texts.append((buf_p.getvalue(), buf_e.getvalue()))
        assert texts[0] == texts[1]
        lines = texts[0][0].splitlines()
        assert lines[0] == "path_index,t,r,y"
        assert len(lines[0].split(",")) == 4
        elines = texts[0][1].splitlines()
        assert elines[0] == "path_index,exploded,tau_hat"
        assert len(elines) == 6
