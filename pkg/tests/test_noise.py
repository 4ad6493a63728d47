import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slogs.field import make_grid
from slogs.harness.fitting import fit_slope
from slogs.noise import (
    Window,
    build_noise,
    coarse_increment,
    noise_from_basis,
    path_rng,
    sample_path,
    stochastic_convolution,
)

SUM_Q2_R4_K16 = 1.0040773557725302137  # sum_{i<=16} i^-8, mpmath


@pytest.fixture(scope="module")
def grid():
    return make_grid(64, 4 * np.pi)


def test_build_noise_checks(grid):
    with pytest.raises(ValueError):
        build_noise(grid, 0)
    with pytest.raises(ValueError):
        build_noise(grid, 33)
    with pytest.raises(ValueError):
        build_noise(grid, 4, flavor="Complex")
    with pytest.raises(ValueError, match="decay"):
        build_noise(grid, 4, r=2.5)
    with pytest.warns(UserWarning):
        build_noise(grid, 4, r=2.5, allow_slow_decay=True)


@pytest.mark.parametrize("flavor", ["ComplexH", "RealL2"])
def test_trace_equals_sum_of_squared_coefficients(grid, flavor):
    m = build_noise(grid, 16, r=4, amplitude=1.0, flavor=flavor)
    direct = sum(i ** -8.0 for i in range(1, 17))
    assert m.trace() == pytest.approx(direct, abs=1e-14)
    assert m.trace() == pytest.approx(SUM_Q2_R4_K16, abs=1e-14)
    # the mu field integrates to the trace
    assert grid.integrate(m.mu) == pytest.approx(m.trace(), rel=1e-13)


def test_real_flavor_fields(grid):
    m = build_noise(grid, 7, flavor="RealL2")
    assert np.all(m.basis.imag == 0)
    np.testing.assert_array_equal(m.nu, 0.0)
    np.testing.assert_allclose(m.sigma, m.mu, atol=1e-15)
    with pytest.raises(ValueError):
        noise_from_basis(grid, np.exp(1j * grid.points)[None], flavor="RealL2")


def test_constant_mode(grid):
    c = 0.3
    m = noise_from_basis(grid, np.full((1, grid.n), c))
    np.testing.assert_allclose(m.mu, c**2)
    assert m.trace() == pytest.approx(c**2 * grid.length)


def test_none_flavor(grid):
    m = build_noise(grid, 4, flavor="None")
    assert m.K == 0 and m.is_zero
    p = sample_path(m, 1.0, 0.25, seed=1)
    np.testing.assert_array_equal(coarse_increment(p, 0.0, 1.0), 0.0)


def test_same_seed_same_bits(grid):
    m = build_noise(grid, 4)
    a = sample_path(m, 0.5, 2.0**-8, seed=42, n_paths=3)
    b = sample_path(m, 0.5, 2.0**-8, seed=42, n_paths=3)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert a.checksum() == b.checksum()
    c = sample_path(m, 0.5, 2.0**-8, seed=43, n_paths=3)
    assert a.checksum() != c.checksum()


def test_paths_do_not_depend_on_batching(grid):
    m = build_noise(grid, 4)
    full = sample_path(m, 0.25, 2.0**-8, seed=5, n_paths=6)
    tail = sample_path(m, 0.25, 2.0**-8, seed=5, n_paths=2, first_path=4)
    one = sample_path(m, 0.25, 2.0**-8, seed=5, first_path=3)
    np.testing.assert_array_equal(full.increments[4:], tail.increments)
    np.testing.assert_array_equal(full.increments[3], one.increments)


def test_off_lattice_times_are_rejected(grid):
    m = build_noise(grid, 2)
    p = sample_path(m, 1.0, 0.125, seed=0)
    with pytest.raises(ValueError):
        coarse_increment(p, 0.0, 0.3)
    with pytest.raises(ValueError):
        coarse_increment(p, 0.0, 1.5)
    with pytest.raises(ValueError):
        coarse_increment(p, 0.5, 0.25)
    with pytest.raises(ValueError):
        sample_path(m, 1.0, 0.3, seed=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), split=st.integers(1, 31))
def test_coarse_increments_telescope(seed, split):
    g = make_grid(16, 2 * np.pi)
    m = build_noise(g, 3)
    p = sample_path(m, 1.0, 1 / 32, seed)
    whole = coarse_increment(p, 0.0, 1.0)
    parts = coarse_increment(p, 0.0, split / 32) + coarse_increment(p, split / 32, 1.0)
    np.testing.assert_allclose(whole, parts, atol=1e-13)
    steps = sum(coarse_increment(p, k / 32, (k + 1) / 32) for k in range(32))
    np.testing.assert_allclose(whole, steps, atol=1e-13)


def test_dyadic_windows_telescope_bitwise(grid):
    m = build_noise(grid, 4)
    p = sample_path(m, 1.0, 2.0**-10, seed=9, n_paths=2)
    whole = p.window_sums(0, 1024)[..., 0, :]
    halves = p.window_sums(0, 1024, 2)
    np.testing.assert_array_equal(whole, halves[..., 0, :] + halves[..., 1, :])
    quarters = p.window_sums(256, 512, 1)[..., 0, :]
    np.testing.assert_array_equal(quarters, p.window_sums(0, 1024, 4)[..., 1, :])


def test_window_sums_errors(grid):
    p = sample_path(build_noise(grid, 2), 1.0, 0.125, seed=0)
    with pytest.raises(ValueError):
        p.window_sums(0, 6, 4)
    assert p.window_sums(3, 3, 2).shape == (2, 2)


def test_terminal_increment_variance_matches_trace(grid):
    m = build_noise(grid, 6, amplitude=1.5)
    T = 0.5
    p = sample_path(m, T, 0.125, seed=2024, n_paths=10_000)
    w = coarse_increment(p, 0.0, T)
    sq = grid.norm_l2(w) ** 2
    mean, se = sq.mean(), sq.std(ddof=1) / np.sqrt(sq.size)
    assert abs(mean - T * m.trace()) <= 3 * se


def test_mode_increments_are_uncorrelated(grid):
    m = build_noise(grid, 5)
    p = sample_path(m, 1.0, 1.0, seed=3, n_paths=10_000)
    x = p.increments[:, 0, :]
    c = np.corrcoef(x.T)
    off = c[~np.eye(5, dtype=bool)]
    assert np.max(np.abs(off)) <= 4 / np.sqrt(10_000)


def test_path_rng_is_counter_based():
    a = path_rng(7, 3).standard_normal(4)
    b = path_rng(7, 3).standard_normal(4)
    c = path_rng(7, 4).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_convolution_with_constant_mode_is_the_increment(grid):
    m = noise_from_basis(grid, np.full((1, grid.n), 0.7))
    p = sample_path(m, 0.5, 2.0**-6, seed=1)
    conv = stochastic_convolution(p, 0.0, 0.5, M_sub=8)
    np.testing.assert_allclose(conv, coarse_increment(p, 0.0, 0.5), atol=1e-14)


def test_convolution_degenerate_cases(grid):
    m = build_noise(grid, 4)
    p = sample_path(m, 0.5, 2.0**-6, seed=1)
    np.testing.assert_array_equal(stochastic_convolution(p, 0.25, 0.25, M_sub=1), 0.0)
    one = stochastic_convolution(p, 0.0, 2.0**-6, M_sub=1)
    tau = 2.0**-6
    np.testing.assert_allclose(one, grid.free_propagator(coarse_increment(p, 0.0, tau), tau), atol=1e-14)
    with pytest.raises(ValueError):
        stochastic_convolution(p, 0.0, 3 * 2.0**-6, M_sub=2)


def test_convolution_refinement_rate(grid):
    # the left-point rule on a smooth-in-time propagator: the gap between M and 2M sub-steps
    # shrinks like sqrt(window/M) * (window/M)^{1/2}, i.e. linearly in the sub-step
    m = build_noise(grid, 8, amplitude=2.0)
    p = sample_path(m, 0.25, 2.0**-12, seed=11, n_paths=200)
    Ms = np.array([2, 4, 8, 16, 32])
    gaps = []
    for M in Ms:
        d = grid.norm_l2(stochastic_convolution(p, 0.0, 0.25, M) - stochastic_convolution(p, 0.0, 0.25, 2 * M))
        gaps.append(np.sqrt(np.mean(d**2)))
    slope = fit_slope(0.25 / Ms, gaps).slope
    assert 0.85 <= slope <= 1.15


def test_ito_isometry_of_the_convolution(grid):
    m = build_noise(grid, 6, amplitude=1.2)
    T = 0.25
    p = sample_path(m, T, 2.0**-5, seed=77, n_paths=10_000)
    conv = Window(p, 0, p.n_fine).convolution(8)
    sq = grid.norm_l2(conv) ** 2
    assert abs(sq.mean() - T * m.trace()) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)


def test_window_helpers(grid):
    m = build_noise(grid, 3)
    p = sample_path(m, 1.0, 0.125, seed=0, n_paths=2)
    w = Window.from_times(p, 0.25, 0.75)
    assert w.tau == 0.5
    assert w.sub_increments(4).shape == (2, 4, grid.n)
    np.testing.assert_allclose(w.sub_increments(4).sum(axis=-2), w.increment(), atol=1e-14)
