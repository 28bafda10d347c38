import math

import numpy as np
import pytest

from smallcosts.models import (
    BlackScholesModel, FrictionParams, StochVolModel, activity_rate_path, frictionless_dual_y,
    frictionless_position, memm_density_factor, normalize_q_weights, simulate_ensemble, simulate_under_P,
    simulate_under_Q, stochastic_exponential,
)
from smallcosts.paths import InvalidArgument, RngStream, SamplePath, TimeGrid, realized_cov

from conftest import mean_se


def test_bs_position_and_activity_rate(bs):
    assert frictionless_position(bs, 1.0) == pytest.approx(2.5, rel=1e-14)
    mp = simulate_under_Q(bs, TimeGrid(1, 20), RngStream(0))
    np.testing.assert_allclose(activity_rate_path(bs, mp).values, 6.25, rtol=1e-14)
    np.testing.assert_allclose(mp.eta.values, 6.25, rtol=1e-14)


@pytest.mark.parametrize("kw", [dict(b=0.0, sigma=0.2), dict(b=0.1, sigma=0.0), dict(b=0.1, sigma=0.2, S0=0.0)])
def test_bs_constructor_rejects(kw):
    with pytest.raises(InvalidArgument):
        BlackScholesModel(**kw)


@pytest.mark.parametrize("kw", [
    dict(b0=0.2, b1=0.3, sigma0=0.4, sigma1=0.1),
    dict(b0=0.2, b1=0.0, sigma0=0.1, sigma1=0.1),
    dict(b0=0.2, b1=0.0, sigma0=0.4, sigma1=0.0, xi=-1.0),
])
def test_sv_constructor_rejects(kw):
    with pytest.raises(InvalidArgument):
        StochVolModel(**kw)


def test_friction_params_validation():
    fp = FrictionParams(1e-3, 2.0, -1.0, 3.0, 1.0)
    assert fp.x == 2.0
    assert fp.with_eps(1e-2).eps == 1e-2
    for bad in (dict(eps=0.0), dict(eps=1.0), dict(p=0.0), dict(T=0.0)):
        with pytest.raises(InvalidArgument):
            FrictionParams(**{**dict(eps=1e-3, p=1.0, xB=0.0, xS=1.0, T=1.0), **bad})


def test_constant_sv_position_and_eta():
    m = StochVolModel(0.1, 0.0, 0.2, 0.0)
    mp = simulate_under_Q(m, TimeGrid(1, 50), RngStream(1))
    np.testing.assert_allclose(mp.pi.values, 2.5, rtol=1e-14)
    np.testing.assert_allclose(activity_rate_path(m, mp).values, mp.pi.values**2, rtol=1e-14)


def test_constant_sv_reproduces_black_scholes_pathwise():
    g = TimeGrid(1, 500)
    for i in range(5):
        a = simulate_under_Q(BlackScholesModel(0.1, 0.2), g, RngStream(3, i))
        b = simulate_under_Q(StochVolModel(0.1, 0.0, 0.2, 0.0), g, RngStream(3, i))
        np.testing.assert_allclose(b.S.values, a.S.values, rtol=1e-12)
        np.testing.assert_allclose(b.phi.values, a.phi.values, rtol=1e-12)
        np.testing.assert_allclose(b.eta.values, a.eta.values, rtol=1e-12)


def test_sv_eta_matches_realized_quadratic_variation(sv):
    # int c^{pi,pi} / sigma^2 dt from the realized variation of int dpi / sigma
    def rel_err(n, i):
        g = TimeGrid(1.0, n)
        mp = simulate_under_Q(sv, g, RngStream(5, i))
        c = mp.coeffs
        scaled = SamplePath(g, np.concatenate(([0.0], np.cumsum(mp.pi.increments / c.sigma[:-1]))))
        est_int = np.sum(c.pi[:-1] ** 2) * g.dt + realized_cov(scaled, scaled, window=n).values[-1] * g.T
        exact_int = np.sum(activity_rate_path(sv, mp).values[:-1]) * g.dt
        return abs(est_int / exact_int - 1)

    fine = [rel_err(100_000, i) for i in range(50)]
    coarse = [rel_err(1_000, i) for i in range(50)]
    assert max(fine) <= 0.05
    assert np.mean(fine) < np.mean(coarse)


def test_position_consistency_and_positivity(sv, bs):
    g = TimeGrid(2, 400)
    for model in (bs, sv):
        for i in range(5):
            mp = simulate_under_Q(model, g, RngStream(9, i))
            np.testing.assert_allclose(mp.phi.values * mp.S.values, mp.pi.values, rtol=1e-12)
            assert np.all(mp.eta.values > 0)


def test_bs_price_is_q_martingale(bs):
    g = TimeGrid(1, 8)
    ST = np.array([simulate_under_Q(bs, g, RngStream(12, i)).S.values[-1] for i in range(100_000)])
    m, se = mean_se(ST / bs.S0)
    assert abs(m - 1) <= 3 * se


def test_constant_sv_weights_are_one():
    ens = simulate_ensemble(StochVolModel(0.1, 0.0, 0.2, 0.0), TimeGrid(1, 50), 4, 30)
    np.testing.assert_allclose([m.qWeight for m in ens], 1.0, rtol=1e-12)


def test_sv_gains_and_price_are_q_martingales(sv):
    ens = simulate_ensemble(sv, TimeGrid(1, 100), 17, 20_000)
    w = np.array([m.qWeight for m in ens])
    assert w.mean() == pytest.approx(1.0, rel=1e-12)
    for vals in ([m.frictionless_gains[-1] for m in ens], [m.S.values[-1] - m.S.values[0] for m in ens]):
        v = np.asarray(vals)
        mu = np.sum(w * v) / np.sum(w)
        se = np.sqrt(np.sum((w * (v - mu)) ** 2)) / len(v)
        assert abs(mu) <= 3 * se


def test_normalize_weights_returns_normalizer():
    m = StochVolModel(0.2, -0.05, 0.4, 0.1)
    raw = [simulate_under_Q(m, TimeGrid(1, 50), RngStream(2, i)) for i in range(10)]
    ens, norm = normalize_q_weights(raw)
    np.testing.assert_allclose([e.qWeight * norm for e in ens], [math.exp(r.logWeight) for r in raw], rtol=1e-12)


def test_density_factor_trivial_integrand():
    dW = np.random.default_rng(0).standard_normal(30) * 0.1
    np.testing.assert_array_equal(stochastic_exponential(0.0, dW, 0.01), 1.0)


def test_density_factor_is_p_martingale(bs):
    g = TimeGrid(1, 8)
    Z = np.array([memm_density_factor(bs, simulate_under_P(bs, g, RngStream(13, i))).values
                  for i in range(100_000)])
    assert Z.min() > 0
    m, se = mean_se(Z[:, -1])
    assert abs(m - 1) <= 3 * se


def test_density_factor_requires_p_paths(bs):
    with pytest.raises(InvalidArgument):
        memm_density_factor(bs, simulate_under_Q(bs, TimeGrid(1, 8), RngStream(0)))


def test_dual_y_closed_form(bs):
    fp = FrictionParams(1e-3, 1.0, 0.0, 1.0, 1.0)
    assert frictionless_dual_y(bs, fp) == pytest.approx(math.exp(-1.125), rel=1e-14)
    assert frictionless_dual_y(bs, fp) == pytest.approx(0.32465, abs=5e-6)


def test_dual_y_zero_wealth_tiny_drift():
    fp = FrictionParams(1e-3, 1.0, 0.0, 0.0, 1.0)
    assert frictionless_dual_y(BlackScholesModel(1e-12, 0.2), fp) == pytest.approx(1.0, rel=1e-12)


def test_dual_y_constant_sv_matches_closed_form(bs):
    fp = FrictionParams(1e-3, 1.0, 0.0, 1.0, 1.0)
    y_sv = frictionless_dual_y(StochVolModel(0.1, 0.0, 0.2, 0.0), fp, n_paths=200)
    assert y_sv == pytest.approx(frictionless_dual_y(bs, fp), rel=1e-10)


def test_dual_y_sv_equals_expected_marginal_utility(sv):
    # y = E_P[p exp(-p (x + phi . S_T))] by direct Monte Carlo under P
    fp = FrictionParams(1e-3, 1.0, 0.0, 1.0, 1.0)
    g = TimeGrid(1, 200)
    vals = np.array([
        fp.p * np.exp(-fp.p * (fp.x + simulate_under_P(sv, g, RngStream(31, i)).frictionless_gains[-1]))
        for i in range(20_000)
    ])
    m, se = mean_se(vals)
    assert abs(frictionless_dual_y(sv, fp, n_paths=20_000) - m) <= 3 * se
