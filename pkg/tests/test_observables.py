import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slogs.field import make_grid
from slogs.flows import phi_f
from slogs.noise import build_noise, sample_path
from slogs.observables import (
    CSV_COLUMNS,
    mass_law_residual,
    observe,
    symplectic_form,
    weighted_drift_density,
    write_records_csv,
)
from slogs.regularization import RegFamily
from slogs.schemes import SchemeConfig, run_trajectory

# exp(-x^2/2) on the line, eps = 1e-3, lambda = 1; 30-digit mpmath quadrature
GAUSS_F_EPS1E3 = -2.62888765985558391190528352612
GAUSS_H_EPS1E3 = 1.75755729265417096277718363389


@pytest.fixture(scope="module")
def grid():
    return make_grid(256, 16 * np.pi)


def test_gaussian_functionals_match_the_line_values(grid):
    u = np.exp(-grid.points**2 / 2).astype(complex)
    rec = observe(grid, u, RegFamily(1e-3), lam=1.0)
    assert rec.F_eps == pytest.approx(GAUSS_F_EPS1E3, rel=1e-8)
    assert rec.H_eps == pytest.approx(GAUSS_H_EPS1E3, rel=1e-8)
    assert rec.M == pytest.approx(np.sqrt(np.pi), rel=1e-12)


def test_plane_wave_functionals():
    g = make_grid(64, 2 * np.pi)
    u = np.exp(3j * g.points)
    reg = RegFamily(1e-2)
    rec = observe(g, u, reg, lam=-1.0)
    assert rec.M == pytest.approx(2 * np.pi, rel=1e-13)
    assert rec.F_eps == pytest.approx(2 * np.pi * reg.entropy_integrand(1.0), rel=1e-13)
    assert rec.H_eps == pytest.approx(0.5 * 9 * 2 * np.pi + 0.5 * rec.F_eps, rel=1e-12)
    with pytest.raises(ValueError):
        observe(g, np.stack([u, u]), reg, 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), tau=st.floats(1e-3, 2.0), lam=st.floats(-3, 3))
def test_entropy_is_invariant_under_the_phase_flow(seed, tau, lam):
    g = make_grid(32, 4 * np.pi)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    reg = RegFamily(1e-3)
    v = phi_f(u, tau, reg, lam)
    assert reg.entropy(g, v) == pytest.approx(reg.entropy(g, u), rel=1e-13, abs=1e-13)
    assert g.norm_l2(v) == pytest.approx(g.norm_l2(u), rel=1e-13)


def test_free_energy_is_invariant_under_the_free_flow(grid):
    u = np.exp(-grid.points**2 / 2 + 0.7j * grid.points)
    reg = RegFamily(1e-3)
    e0 = reg.energy(grid, u, 0.0)
    for t in (0.1, 1.0, 5.0):
        v = grid.free_propagator(u, t)
        assert reg.energy(grid, v, 0.0) == pytest.approx(e0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_symplectic_form_is_antisymmetric_and_bilinear(seed, a, b):
    g = make_grid(16, 2 * np.pi)
    rng = np.random.default_rng(seed)
    x, y, z = (rng.standard_normal(16) + 1j * rng.standard_normal(16) for _ in range(3))
    assert symplectic_form(g, x, y) == pytest.approx(-symplectic_form(g, y, x), abs=1e-12)
    assert symplectic_form(g, x, x) == pytest.approx(0.0, abs=1e-12)
    lhs = symplectic_form(g, x, a * y + b * z)
    rhs = a * symplectic_form(g, x, y) + b * symplectic_form(g, x, z)
    assert lhs == pytest.approx(rhs, abs=1e-10)
    # real scalars only: omega(x, i y) is the real inner product
    assert symplectic_form(g, x, 1j * x) == pytest.approx(g.norm_l2(x) ** 2, rel=1e-12)


def test_weighted_drift_matches_finite_difference_in_time(grid):
    u = np.exp(-((grid.points - 1.0) ** 2) / 2 + 0.5j * grid.points)
    alpha = 1.0
    dt = 1e-4
    mp = grid.norm_weighted(grid.free_propagator(u, dt), alpha) ** 2
    mm = grid.norm_weighted(grid.free_propagator(u, -dt), alpha) ** 2
    fd = (mp - mm) / (2 * dt)
    assert weighted_drift_density(grid, u, alpha) == pytest.approx(fd, rel=1e-6)
    # a rightward-moving packet centred right of the origin gains weighted mass
    assert weighted_drift_density(grid, u, alpha) > 0


def test_mass_law_residual_without_noise():
    g = make_grid(32, 4 * np.pi)
    model = build_noise(g, 2, flavor="None")
    u0 = np.exp(-g.points**2).astype(complex)
    worst = []
    for tau in (2.0**-5, 2.0**-6, 2.0**-7):
        path = sample_path(model, 0.25, 2.0**-8, seed=0, n_paths=4)
        cfg = SchemeConfig("LieAdd", lam=-1.0, reg=RegFamily(1e-2), tau=tau, M_sub=2)
        traj = run_trajectory(u0, 0.25, cfg, path, keep_states=True)
        res = mass_law_residual(g, traj.states, model, tau, additive=True, min_paths=2)
        np.testing.assert_allclose(res.mean, 0.0, atol=1e-13)
        np.testing.assert_array_equal(res.stderr, 0.0)
        worst.append(np.max(np.abs(res.weighted_mean)))
    # the weighted law uses a trapezoid drift: the per-step residual is O(tau^2)
    ratios = np.array(worst[:-1]) / np.array(worst[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))
    with pytest.raises(ValueError):
        mass_law_residual(g, traj.states, model, tau, additive=True)


def test_csv_writer_round_trip(grid):
    u = np.exp(-grid.points**2 / 2).astype(complex)
    recs = [observe(grid, u, RegFamily(1e-2), 1.0, t=t) for t in (0.0, 0.5)]
    fh = io.StringIO()
    text = write_records_csv(recs, fh)
    assert fh.getvalue() == text
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert float(lines[2].split(",")[0]) == 0.5
    assert float(lines[1].split(",")[3]) == recs[0].F_eps
