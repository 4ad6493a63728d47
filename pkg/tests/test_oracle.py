import numpy as np
import pytest

from slogs.field import make_grid
from slogs.harness.fitting import fit_slope
from slogs.oracle import (
    BLOWUP_CAP,
    GalerkinSystem,
    dense_laplacian,
    em_reference,
    gauss_legendre_average,
    newton_implicit,
)
from slogs.regularization import RegFamily
from slogs.schemes import solve_implicit

# 40-digit mpmath quadrature of the mean of f_eps over [a, b]
GL_EPS1E4_1E8_50 = 2.909555408862016226412
GL_EPS1E2_0_1E3 = -4.556763208123851324219


def _system(n=8, L=2 * np.pi, K=2):
    x = np.arange(n) * L / n - L / 2
    basis = np.stack([0.3 * np.exp(2j * np.pi * (k + 1) * x / L) for k in range(K)])
    return GalerkinSystem.build(n, L, basis), x


@pytest.mark.parametrize("n", [4, 8, 16])
def test_dense_laplacian_matches_the_symbol(n):
    L = 3.0
    g = make_grid(n, L)
    rng = np.random.default_rng(n)
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    np.testing.assert_allclose(dense_laplacian(n, L) @ u, g.apply_symbol(u, g.laplacian_symbol), atol=1e-11)
    D = dense_laplacian(n, L)
    np.testing.assert_allclose(D, D.T, atol=1e-12)


def test_projection_is_idempotent():
    sys, x = _system()
    rng = np.random.default_rng(0)
    u = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    p = sys.project(u)
    np.testing.assert_allclose(sys.project(p), p, atol=1e-14)
    # only the Nyquist mode is removed
    nyq = np.exp(1j * np.pi * np.arange(8))
    np.testing.assert_allclose(sys.project(nyq), 0.0, atol=1e-14)


def test_system_limits():
    with pytest.raises(ValueError):
        GalerkinSystem.build(32, 1.0, np.ones((1, 32)))
    with pytest.raises(ValueError):
        GalerkinSystem.build(8, 1.0, np.ones((1, 6)))


def test_em_without_noise_converges_to_the_free_flow_at_rate_one():
    _, x = _system()
    sys = GalerkinSystem.build(8, 2 * np.pi, np.zeros((2, 8)))
    g = make_grid(8, 2 * np.pi)
    u0 = sys.project(np.exp(np.cos(x)).astype(complex))
    T = 0.25
    exact = g.free_propagator(u0, T)
    dts = [2.0**-j for j in range(6, 11)]
    incs = np.zeros((int(T / dts[-1]), 2))
    errs = []
    for dt in dts:
        res = em_reference(sys, u0, T, dt, incs, dts[-1], lam=0.0)
        errs.append(g.norm_l2(res.final - exact))
    assert fit_slope(dts, errs).slope == pytest.approx(1.0, abs=0.1)


def test_em_argument_checks():
    sys, x = _system()
    incs = np.zeros((8, 2))
    with pytest.raises(ValueError):
        em_reference(sys, np.ones(8), 0.5, 0.1, incs, 2.0**-4)
    with pytest.raises(ValueError):
        em_reference(sys, np.ones(8), 0.3, 2.0**-3, incs, 2.0**-4)
    with pytest.raises(ValueError):
        em_reference(sys, np.ones(8), 1.0, 2.0**-4, incs, 2.0**-4)


def test_em_flags_blow_up():
    sys, x = _system()
    incs = np.zeros((2, 4, 2))
    incs[1] = 1e7  # a huge additive kick on the second path only
    res = em_reference(sys, np.ones(8, dtype=complex), 0.25, 2.0**-4, incs, 2.0**-4, additive=True, lam=0.0)
    assert res.failed.tolist() == [False, True]
    assert np.all(np.isnan(res.final[1]))
    assert np.all(np.isfinite(res.final[0]))
    assert BLOWUP_CAP == 1e6


def test_newton_without_nonlinearity_is_the_cayley_step():
    sys, x = _system()
    g = make_grid(8, 2 * np.pi)
    v = np.exp(np.sin(x)).astype(complex)
    u = newton_implicit(sys, v, 0.1, 1e-3, lam=0.0)
    np.testing.assert_allclose(u, g.cayley_step(v, 0.1), atol=1e-12)


@pytest.mark.parametrize("averaged", [False, True])
def test_newton_agrees_with_the_fixed_point_solver(averaged):
    sys, x = _system()
    g = make_grid(8, 2 * np.pi)
    rng = np.random.default_rng(4)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    reg = RegFamily(1e-3)
    a = newton_implicit(sys, v, 0.05, 1e-3, lam=-1.0, tol=1e-12, averaged=averaged)
    b, _ = solve_implicit(g, v, 0.05, reg, -1.0, tol=1e-13, averaged=averaged)
    assert g.norm_l2(a - b) <= 1e-10


def test_newton_reports_non_convergence():
    sys, x = _system()
    v = np.exp(1j * x)
    with pytest.raises(RuntimeError, match="did not converge"):
        newton_implicit(sys, v, 50.0, 1e-3, lam=-1e6, max_iter=1)


def test_gauss_legendre_against_high_precision():
    assert gauss_legendre_average(1e-4, 1e-8, 50.0) == pytest.approx(GL_EPS1E4_1E8_50, rel=1e-14)
    assert gauss_legendre_average(1e-2, 0.0, 1e-3) == pytest.approx(GL_EPS1E2_0_1E3, rel=1e-14)
    a = np.array([0.0, 1e-3, 1.0])
    vec = gauss_legendre_average(0.1, a, 2.0)
    np.testing.assert_array_equal(vec, [gauss_legendre_average(0.1, x, 2.0) for x in a])
    assert vec[0] == pytest.approx(-0.19976587414817929496, abs=1e-14)
