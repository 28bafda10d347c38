import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallcosts.paths import (
    InvalidArgument, RngStream, SamplePath, TimeGrid, integrate_ito, make_grid, realized_cov, simulate_bm,
)


def test_grid_points():
    np.testing.assert_array_equal(make_grid(1, 4).times, [0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("T, n", [(1, 1), (0, 10), (-1, 10), (1, 2.5)])
def test_grid_rejects_bad_arguments(T, n):
    with pytest.raises(InvalidArgument):
        make_grid(T, n)


def test_grid_step():
    assert make_grid(2, 100000).dt == pytest.approx(2e-5, rel=1e-15)


def test_sample_path_shape_checked():
    g = make_grid(1, 4)
    with pytest.raises(InvalidArgument):
        SamplePath(g, np.zeros(4))
    with pytest.raises(InvalidArgument):
        SamplePath(g, np.zeros(5), drift=np.zeros(5))


def test_sample_path_is_immutable():
    p = SamplePath(make_grid(1, 4), np.zeros(5))
    with pytest.raises(ValueError):
        p.values[0] = 1.0


def _terminal_bm(n_paths, grid):
    return np.array([simulate_bm(grid, RngStream(11, i)).values for i in range(n_paths)])


def test_bm_starts_at_zero_and_terminal_variance():
    W = _terminal_bm(100_000, make_grid(1, 4))
    assert np.all(W[:, 0] == 0)
    assert abs(W[:, -1].var() - 1.0) <= 0.02


def test_bm_scaling_at_intermediate_times():
    W = _terminal_bm(20_000, make_grid(1, 4))
    n = W.shape[0]
    for k, t in ((1, 0.25), (2, 0.5), (4, 1.0)):
        v = W[:, k].var(ddof=1)
        se = t * np.sqrt(2 / (n - 1))
        assert abs(v - t) <= 3 * se


def test_streams_are_reproducible_and_distinct():
    g = make_grid(1, 50)
    a = simulate_bm(g, RngStream(5, 3)).values
    np.testing.assert_array_equal(a, simulate_bm(g, RngStream(5, 3)).values)
    assert not np.array_equal(a, simulate_bm(g, RngStream(5, 4)).values)
    assert not np.array_equal(a, simulate_bm(g, RngStream(6, 3)).values)


def test_ito_degenerate_cases():
    g = make_grid(2, 10)
    W = simulate_bm(g, RngStream(0))
    np.testing.assert_array_equal(integrate_ito(0.0, 0.0, W, 3.0).values, 3.0)
    assert integrate_ito(1.0, 0.0, W, 0.5).values[-1] == pytest.approx(2.5, abs=1e-14)


def test_ito_length_mismatch():
    g = make_grid(1, 10)
    W = simulate_bm(g, RngStream(0))
    with pytest.raises(InvalidArgument):
        integrate_ito(np.zeros(9), 0.0, W, 0.0)


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.floats(-3, 3))
def test_ito_zero_diffusion_matches_explicit_euler(drift, x0):
    g = make_grid(1.3, 8)
    W = simulate_bm(g, RngStream(1))
    X = integrate_ito(np.array(drift), 0.0, W, x0).values
    ref = [x0]
    for b in drift:
        ref.append(ref[-1] + b * g.dt)
    np.testing.assert_allclose(X, ref, rtol=0, atol=1e-13)


def test_geometric_euler_is_martingale_under_driftless_dynamics():
    # S_{k+1} = S_k (1 + sigma dW_k), the Euler scheme for dS = sigma S dW
    g = make_grid(1, 8)
    sigma = 0.2
    ST = np.empty(100_000)
    for i in range(ST.size):
        dW = simulate_bm(g, RngStream(2, i)).increments
        ST[i] = np.prod(1 + sigma * dW)
    assert abs(ST.mean() - 1.0) <= 0.01


def test_ito_reproduces_stored_coefficient_tracks():
    g = make_grid(1, 200)
    W = simulate_bm(g, RngStream(4))
    X = integrate_ito(0.3, 0.2, W, 1.0)
    Y = integrate_ito(X.drift, X.diffusion, W, 1.0)
    np.testing.assert_array_equal(X.values, Y.values)


def test_realized_cov_of_scaled_bm():
    g = make_grid(1, 100_000)
    W = simulate_bm(g, RngStream(8))
    X = SamplePath(g, 0.2 * W.values)
    c = realized_cov(X, X, window=10_000).values
    assert np.all(np.abs(c[10_000:] - 0.04) < 0.04 * 0.1)
    assert realized_cov(X, X, window=g.n).values[-1] == pytest.approx(0.04, rel=0.02)


def test_realized_cov_finite_variation_vanishes():
    for n in (1_000, 100_000):
        g = make_grid(1, n)
        X = SamplePath(g, np.sin(g.times))
        Y = simulate_bm(g, RngStream(9))
        est = abs(realized_cov(X, Y, window=n).values[-1])
        assert est < 5 / np.sqrt(n)


def test_realized_cov_of_opposite_paths():
    g = make_grid(1, 50_000)
    W = simulate_bm(g, RngStream(3))
    c = realized_cov(W, SamplePath(g, -W.values), window=g.n).values[-1]
    assert c == pytest.approx(-1.0, abs=0.03)


def test_realized_cov_grid_mismatch_and_window():
    a = simulate_bm(make_grid(1, 10), RngStream(0))
    b = simulate_bm(make_grid(1, 11), RngStream(0))
    with pytest.raises(InvalidArgument):
        realized_cov(a, b)
    with pytest.raises(InvalidArgument):
        realized_cov(a, a, window=0)


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 40))
def test_realized_cov_symmetric_and_bilinear(idx, a, b, window):
    g = make_grid(1, 40)
    X = simulate_bm(g, RngStream(21, idx))
    Y = simulate_bm(g, RngStream(22, idx))
    Z = simulate_bm(g, RngStream(23, idx))
    cxy = realized_cov(X, Y, window).values
    np.testing.assert_allclose(cxy, realized_cov(Y, X, window).values, rtol=0, atol=1e-12)
    combo = SamplePath(g, a * X.values + b * Z.values)
    lhs = realized_cov(combo, Y, window).values
    rhs = a * cxy + b * realized_cov(Z, Y, window).values
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1, abs(a), abs(b)))
