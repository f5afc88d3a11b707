import math

import numpy as np
import pytest
from scipy.optimize import brentq

from mfklab.grids import Field, GridSpec, cell_means_from_cdf, slab_l1
from mfklab.kernel import kernel_for
from mfklab.mild import (
    ball_radius,
    build_slab_stencils,
    estimate_slab_tau,
    freeze_coefficients,
    picard_map,
    plan_grid,
    prepare_slab,
    solve,
    solve_linearized,
    solve_slab,
    weak_residual,
)
from mfklab.oracles import heat_oracle
from mfklab.problems import GaussianDensity, preset, smooth_test_functions


class TestSlabTau:
    def test_mixed_constants_bisection(self):
        tau = estimate_slab_tau(1.0, 1.0, 1.0, 1, 1.0)
        root = brentq(lambda t: 2 * math.sqrt(t) * (t**1.5 + 2.0) - 1.0, 1e-6, 1.0)
        assert tau == pytest.approx(root, abs=1e-9)
        assert tau == pytest.approx(0.0611, abs=1e-3)

    def test_growth_only_closed_form(self):
        tau = estimate_slab_tau(0.0, 1.0, 1.0, 1, 1.0, horizon=10.0)
        assert tau == pytest.approx(math.sqrt(0.5), abs=1e-9)

    def test_trivial_problem_takes_whole_horizon(self):
        assert estimate_slab_tau(0.0, 0.0, 1.0, 1, 1.0, horizon=1.0) == 1.0
        assert estimate_slab_tau(0.0, 0.0, 1.0, 1, 1.0) == math.inf


class TestGridSpec:
    def test_tau_must_divide_horizon(self):
        with pytest.raises(ValueError, match="does not divide"):
            GridSpec(R=1.0, n_x=4, n_t=10, T=1.0, tau=0.3)

    def test_slab_count_must_divide_levels(self):
        with pytest.raises(ValueError, match="divide the time level count"):
            GridSpec(R=1.0, n_x=4, n_t=10, T=1.0, tau=0.25)

    def test_field_rejects_nonfinite(self):
        grid = GridSpec(R=1.0, n_x=4, n_t=2, T=1.0, tau=0.5)
        bad = np.zeros((3, 4))
        bad[1, 2] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Field(grid, bad)


def _small_grid(problem, n_x=257, n_t=32, R=7.0, **kw):
    return plan_grid(problem, R=R, n_x=n_x, n_t_min=n_t, **kw)


class TestPicardMap:
    def test_zero_nonlinearity_maps_to_zero(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        state = prepare_slab(0, 0.0, phi, prob, kern, grid)
        out = picard_map(state, prob, kern)
        assert np.all(out == 0.0)

    def test_constant_growth_mass_identity(self):
        # integral of Pi(0)(t) equals lam * (t - r) * mass(phi) for pc-left sources
        lam = 0.5
        prob = preset("exponential_growth", lam=lam)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=16, T=1.0, tau=0.25)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        state = prepare_slab(0, 0.0, phi, prob, kern, grid)
        out = picard_map(state, prob, kern)
        mass_phi = phi.sum() * grid.dx
        for ell in range(1, grid.levels_per_slab + 1):
            got = out[ell].sum() * grid.dx
            assert got == pytest.approx(lam * ell * grid.dt * mass_phi, abs=1e-8)

    def test_burgers_first_sweep_is_odd(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04)
        kern = kernel_for(prob)
        # odd node count so x -> -x maps the lattice onto itself
        grid = GridSpec(R=7.0, n_x=257, n_t=512, T=1.0, tau=1.0 / 256)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        state = prepare_slab(0, 0.0, phi, prob, kern, grid)
        out = picard_map(state, prob, kern)
        for ell in range(1, grid.levels_per_slab + 1):
            assert np.abs(out[ell] + out[ell][::-1]).max() <= 1e-12


class TestSolveSlab:
    def test_heat_converges_immediately(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        u_slab, state = solve_slab(0.0, grid.tau, phi, prob, kern, grid, tol=1e-10)
        assert state.iterations == 1
        assert np.array_equal(u_slab, state.u0hat)

    def test_growth_slab_mass(self):
        prob = preset("exponential_growth", lam=0.5, T=0.25)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=256, T=0.25, tau=0.25)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        u_slab, _ = solve_slab(0.0, 0.25, phi, prob, kern, grid, tol=1e-10)
        mass_end = u_slab[-1].sum() * grid.dx
        assert mass_end == pytest.approx(math.exp(0.125), abs=1e-4)

    def test_burgers_residuals_decay(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=1024, T=1.0, tau=1.0 / 256)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        _, state = solve_slab(0.0, grid.tau, phi, prob, kern, grid, tol=1e-12, max_iter=60)
        hist = state.residual_history
        assert hist[-1] <= 1e-3 * hist[0]
        # geometric trend from the second iterate on
        assert all(hist[i + 1] <= hist[i] for i in range(1, len(hist) - 1))

    def test_nonconvergence_reports_slab(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=129, n_t=1024, T=1.0, tau=1.0 / 256)
        phi = cell_means_from_cdf(prob.u0.cdf, grid)
        with pytest.raises(RuntimeError, match="slab 3"):
            solve_slab(0.0, grid.tau, phi, prob, kern, grid, tol=1e-14, max_iter=2,
                       slab_index=3)


class TestSolve:
    def test_heat_matches_oracle(self):
        prob = preset("heat", nu=1.0, u0_var=0.04)
        kern = kernel_for(prob)
        grid = _small_grid(prob, n_x=257, n_t=32, kernel=kern)
        u, report = solve(prob, grid, tol=1e-8, kernel=kern)
        x = grid.x_nodes()
        for k in (1, grid.n_t // 2, grid.n_t):
            t = grid.times()[k]
            l1 = np.abs(u.values[k] - heat_oracle(0.0, 0.04, 1.0, t, x)).sum() * grid.dx
            assert l1 <= 4e-3
        assert report.converged

    def test_mass_conserved_without_growth(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        u, _ = solve(prob, grid, kernel=kern)
        for k in range(grid.n_t + 1):
            assert abs(u.mass(k) - 1.0) <= 1e-9

    def test_rejects_oversized_slab(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04)
        grid = GridSpec(R=7.0, n_x=65, n_t=16, T=1.0, tau=0.25)
        with pytest.raises(ValueError, match="tau"):
            solve(prob, grid)

    def test_rejects_horizon_mismatch(self):
        prob = preset("heat", T=2.0)
        grid = GridSpec(R=7.0, n_x=65, n_t=16, T=1.0, tau=1.0)
        with pytest.raises(ValueError, match="horizon"):
            solve(prob, grid)

    def test_deterministic(self):
        prob = preset("exponential_growth", lam=0.3, T=0.5)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=129, n_t=32, T=0.5, tau=0.25)
        u1, _ = solve(prob, grid, kernel=kern)
        u2, _ = solve(prob, grid, kernel=kern)
        assert np.array_equal(u1.values, u2.values)

    def test_perturbed_start_reaches_same_fixed_point(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04, T=0.25)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=512, T=0.25, tau=1.0 / 256)
        tol = 1e-9
        u1, _ = solve(prob, grid, tol=tol, kernel=kern)
        u2, _ = solve(prob, grid, tol=tol, kernel=kern, perturb_initial=0.1)
        assert slab_l1(u1.values - u2.values, grid.dx, grid.dt) <= 2 * tol

    def test_ball_preserved(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04, T=0.25)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=512, T=0.25, tau=1.0 / 256)
        _, report = solve(prob, grid, tol=1e-8, kernel=kern)
        assert report.ball_ok()
        assert report.max_iterate_sup <= report.M
        # two-sweep contraction factor pi C^2 tau is below 1 here, so the
        # monitored residual recursion must hold
        assert report.pi_C2_tau < 1.0
        assert report.contraction_monitor_ok

    def test_slab_refinement_consistency(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04, T=0.25)
        kern = kernel_for(prob)
        tol = 1e-4
        g1 = GridSpec(R=7.0, n_x=257, n_t=512, T=0.25, tau=1.0 / 256)
        g2 = GridSpec(R=7.0, n_x=257, n_t=512, T=0.25, tau=1.0 / 512)
        u1, _ = solve(prob, g1, tol=tol, kernel=kern)
        u2, _ = solve(prob, g2, tol=tol, kernel=kern)
        assert slab_l1(u1.values - u2.values, g1.dx, g1.dt) <= 2 * tol


class TestSolveLinearized:
    def test_zero_coefficients_reduce_to_smoothing(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        zeros = np.zeros((grid.n_t + 1, grid.n_x))
        out = solve_linearized(zeros, zeros, prob.u0, grid, kern, Phi=prob.Phi)
        ref, _ = solve(prob, grid, kernel=kern)
        assert np.abs(out.values - ref.values).max() <= 1e-12

    def test_constant_growth_semigroup(self):
        lam = 0.3
        prob = preset("heat", T=0.5)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=512, T=0.5, tau=0.25)
        zeros = np.zeros((grid.n_t + 1, grid.n_x))
        lam_field = np.full_like(zeros, lam)
        out = solve_linearized(zeros, lam_field, prob.u0, grid, kern, tol=1e-10,
                               Phi=prob.Phi)
        x = grid.x_nodes()
        for k in (grid.n_t // 2, grid.n_t):
            t = grid.times()[k]
            target = math.exp(lam * t) * heat_oracle(0.0, 0.04, 1.0, t, x)
            l1 = np.abs(out.values[k] - target).sum() * grid.dx
            assert l1 <= 5e-4  # left-point time rule bias at this resolution

    def test_reproduces_frozen_nonlinear_solution(self):
        prob = preset("burgers", nu=1.0, u0_var=0.04, T=0.25)
        kern = kernel_for(prob)
        grid = GridSpec(R=7.0, n_x=257, n_t=512, T=0.25, tau=1.0 / 256)
        tol = 1e-9
        u, _ = solve(prob, grid, tol=tol, kernel=kern)
        b_hat, lam_hat = freeze_coefficients(prob, u)
        lin = solve_linearized(b_hat, lam_hat, prob.u0, grid, kern, tol=tol,
                               Phi=prob.Phi)
        assert slab_l1(u.values - lin.values, grid.dx, grid.dt) <= 2 * tol


class TestWeakResidual:
    def test_heat_conservation_residual_small(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        u, _ = solve(prob, grid, kernel=kern)
        wide = smooth_test_functions()[0]
        assert weak_residual(u, wide, 0.5, prob) <= 1e-3

    def test_perturbation_inflates_residual(self):
        prob = preset("heat")
        kern = kernel_for(prob)
        grid = _small_grid(prob, kernel=kern)
        u, _ = solve(prob, grid, kernel=kern)
        tf = smooth_test_functions()[0]
        base = weak_residual(u, tf, 0.5, prob)
        values = u.values.copy()
        values[grid.time_index(0.5)] += 0.1 * np.exp(-grid.x_nodes() ** 2)
        assert weak_residual(Field(grid, values), tf, 0.5, prob) >= 10 * base


def test_ball_radius_envelope():
    prob = preset("burgers", nu=1.0, u0_var=0.04)
    kern = kernel_for(prob)
    M = ball_radius(prob, kern)
    assert M == pytest.approx(prob.u0.max_value * kern.C_u, rel=1e-9)
    prob2 = preset("exponential_growth", lam=0.5)
    assert ball_radius(prob2, kernel_for(prob2)) >= math.exp(0.5)


def test_stencils_cache_shape():
    prob = preset("burgers", nu=1.0, u0_var=0.04)
    kern = kernel_for(prob)
    grid = GridSpec(R=7.0, n_x=65, n_t=8, T=1.0, tau=0.25)
    st = build_slab_stencils(kern, grid, 0.0)
    assert st.A.shape == (2, 2 * 65 - 1)
    assert st.B.shape == (2, 2 * 65)


def test_grid_rejects_higher_dimension():
    with pytest.raises(NotImplementedError):
        GridSpec(R=1.0, n_x=8, n_t=2, T=1.0, tau=0.5, d=2)


def test_field_lookup_conventions():
    grid = GridSpec(R=1.0, n_x=5, n_t=2, T=1.0, tau=0.5)
    vals = np.arange(15, dtype=float).reshape(3, 5)
    f = Field(grid, vals)
    # nearest node in space, left level in time, zero outside the box
    assert f.lookup(np.array([0.3]), np.array([0.49]))[0] == vals[0, 3]
    assert f.lookup(np.array([0.5]), np.array([0.49]))[0] == vals[1, 3]
    assert f.lookup(np.array([0.5]), np.array([5.0]))[0] == 0.0


def test_burgers_mild_matches_closed_form_oracle():
    # triangular cross-validation: the Picard solution, the finite-volume
    # reference and the closed-form expectation formula are three independent
    # routes to the same object
    from mfklab.oracles import burgers_expectation_formula

    prob = preset("burgers", nu=1.0, u0_var=0.04, T=0.5)
    kern = kernel_for(prob)
    grid = plan_grid(prob, R=7.0, n_x=257, n_t_min=512, kernel=kern)
    u, _ = solve(prob, grid, tol=1e-8, kernel=kern)
    x = grid.x_nodes()
    w = np.full(grid.n_x, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    for t in (0.25, 0.5):
        k = grid.time_index(t)
        cf = burgers_expectation_formula(prob.u0, 1.0, t, x, variant="cole_hopf")
        assert float(np.dot(w, np.abs(u.values[k] - cf))) <= 2e-3


def test_base_drift_shifts_the_heat_solution():
    # exercises the drift-shift path of the kernel weights end to end
    from mfklab.problems import GaussianDensity, ProblemSpec

    zero = lambda t, x, z: np.zeros_like(np.asarray(z, dtype=float))
    prob = ProblemSpec("drifted_heat", 1, 1.0, 1.0, zero, zero,
                       GaussianDensity(0.0, 0.04), M_b=0.0, M_Lambda=0.0,
                       L_b=0.0, L_Lambda=0.0, z_max=3.0, b0=0.5)
    kern = kernel_for(prob)
    grid = plan_grid(prob, R=8.0, n_x=512, n_t_min=32, kernel=kern)
    u, _ = solve(prob, grid, tol=1e-8, kernel=kern)
    x = grid.x_nodes()
    w = np.full(grid.n_x, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    for k, t in enumerate(grid.times()):
        oracle = prob.u0.pdf(x) if t == 0 else heat_oracle(0.5 * t, 0.04, 1.0, t, x)
        assert float(np.dot(w, np.abs(u.values[k] - oracle))) <= 2e-3
