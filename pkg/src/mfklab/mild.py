"""Bounded mild solutions by per-slab fixed-point iteration.

On each slab [r, r + tau] the solver iterates the integral map

    Pi(v)(t, x) = int_r^t int p(s, x0, t, x) Lam^(s, x0) dx0 ds
                + int_r^t int d_x0 p(s, x0, t, x) b^(s, x0) dx0 ds,

with Lam^(s, x0) = Lambda(s, x0, w) w and b^(s, x0) = b(s, x0, w) w evaluated
at w = v + u0_hat, u0_hat being the kernel-smoothed slab initial condition.
The slab-local solution u = u0_hat + v_fixed is chained across slabs through
its terminal value, which by the Chapman-Kolmogorov property reproduces the
global mild equation.

Discretization: fields are piecewise constant in time from the left level;
the time integral of the kernel weights over each source interval is computed
in the substituted variable w = sqrt(t - s) (uniform Simpson nodes), which
also removes the 1/sqrt(t - s) kernel-gradient singularity.  Space integrals
use the exactly integrated Gaussian cell weights from the kernel module, so
every sweep is a batch of discrete convolutions.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .grids import Field, GridSpec, cell_means_from_cdf, cell_means_from_pdf, slab_l1
from .kernel import KernelModel, apply_mean_smooth, kernel_for, slope_kernel_weights, smooth_weights
from .problems import ProblemSpec, SmoothTestFunction
from .quadrature import simpson_weights


def estimate_slab_tau(M_b: float, M_Lambda: float, C_u: float, d: int,
                      M: float = 1.0, horizon: float | None = None) -> float:
    """Largest slab width for which the fixed-point map preserves the ball.

    Solves 2 sqrt(tau) (M_Lambda tau^{3/2} + 2 d M_b C_u) <= 1 by bisection on
    the monotone left-hand side; the ball radius M scales out of the
    condition, so it only enters through the documentation of the contract.
    Returns min(tau_max, horizon) when a horizon is given.
    """
    del M  # the bound is homogeneous in the ball radius
    if M_b < 0 or M_Lambda < 0 or C_u <= 0 or d < 1:
        raise ValueError("constants must be nonnegative, C_u positive")

    def bound(tau):
        return 2.0 * np.sqrt(tau) * (M_Lambda * tau**1.5 + 2.0 * d * M_b * C_u)

    if M_b == 0.0 and M_Lambda == 0.0:
        return float("inf") if horizon is None else float(horizon)
    hi = 1.0
    while bound(hi) <= 1.0 and hi < 1e12:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bound(mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    tau_max = lo
    if horizon is not None:
        tau_max = min(tau_max, float(horizon))
    return tau_max


def ball_radius(problem: ProblemSpec, kernel: KernelModel) -> float:
    """Envelope M = max(1, ||u0||_inf C_u, ||u0||_1) e^{M_Lambda T}-inflated."""
    grow = np.exp(problem.M_Lambda * problem.T)
    return max(1.0, problem.u0.max_value * kernel.C_u * grow, 1.0 * grow)


def contraction_constant(problem, kernel, M: float, tau: float) -> float:
    """Constant C with ||Pi(v1)(t) - Pi(v2)(t)|| <= C int (t-s)^{-1/2} ||v1-v2|| ds."""
    return (2.0 * problem.L_Lambda * M + problem.M_Lambda) * np.sqrt(tau) + \
        kernel.C_u * problem.d * (2.0 * problem.L_b * M + problem.M_b)


@dataclass
class SlabStencils:
    """Time-integrated convolution stencils for one slab, indexed by level gap."""

    A: np.ndarray  # (m, 2 n_x - 1): smoothing kernel integrated over one interval
    B: np.ndarray  # (m, 2 n_x): gradient kernel, applied to staggered slopes


def build_slab_stencils(kernel: KernelModel, grid: GridSpec, r: float,
                        n_w: int = 65) -> SlabStencils:
    """Integrate the cell-weight kernels over every source interval of a slab.

    For the target level at gap g, the source interval is
    [t - g dt, t - (g-1) dt]; the integral runs in w = sqrt(t - s) with
    composite Simpson weights carrying the 2w Jacobian, so the w = 0 endpoint
    (kernel degenerating to the identity) has zero weight and is skipped.
    """
    m, n, dx, dt = grid.levels_per_slab, grid.n_x, grid.dx, grid.dt
    if n_w % 2 == 0:
        n_w += 1
    A = np.zeros((m, 2 * n - 1))
    B = np.zeros((m, 2 * n))
    for g in range(1, m + 1):
        t = r + g * dt
        w_lo, w_hi = np.sqrt((g - 1) * dt), np.sqrt(g * dt)
        w = np.linspace(w_lo, w_hi, n_w)
        wt = simpson_weights(n_w, (w_hi - w_lo) / (n_w - 1)) * 2.0 * w
        for wi, wti in zip(w, wt):
            if wti == 0.0:
                continue
            sigma, beta = kernel.sigma_beta(max(t - wi * wi, 0.0), t)
            A[g - 1] += wti * smooth_weights(sigma, beta, dx, n)
            B[g - 1] += wti * slope_kernel_weights(sigma, beta, dx, n)
    return SlabStencils(A, B)


@dataclass
class PicardState:
    """State of the fixed-point iteration on one slab."""

    slab_index: int
    r: float
    tau: float
    grid: GridSpec
    u0hat: np.ndarray  # (m + 1, n_x) kernel-evolved slab initial condition
    v: np.ndarray  # (m + 1, n_x) current iterate, v[0] = 0
    stencils: SlabStencils
    residual_history: list = field(default_factory=list)
    iterations: int = 0


def prepare_slab(slab_index: int, r: float, phi: np.ndarray, problem: ProblemSpec,
                 kernel: KernelModel, grid: GridSpec, stencils: SlabStencils | None = None,
                 n_w: int = 65, v0: np.ndarray | None = None) -> PicardState:
    """Assemble u0_hat and the stencils for the slab starting at r with data phi."""
    m = grid.levels_per_slab
    if stencils is None:
        stencils = build_slab_stencils(kernel, grid, r, n_w=n_w)
    u0hat = np.empty((m + 1, grid.n_x))
    u0hat[0] = phi  # t = r uses the identity, never a kernel evaluation
    for ell in range(1, m + 1):
        sigma, beta = kernel.sigma_beta(r, r + ell * grid.dt)
        u0hat[ell] = apply_mean_smooth(phi, sigma, beta, grid.dx)
    v = np.zeros_like(u0hat) if v0 is None else np.array(v0, dtype=float)
    return PicardState(slab_index, r, grid.tau, grid, u0hat, v, stencils)


def picard_map(state: PicardState, problem: ProblemSpec, kernel: KernelModel) -> np.ndarray:
    """One application of the slab map Pi to the current iterate.

    Returns the next iterate on the slab grid (the caller updates state).
    Inputs in the ball of radius M stay in it for tau below the
    estimate_slab_tau threshold.
    """
    del kernel  # kernel content is baked into the slab stencils
    grid = state.grid
    m, n = grid.levels_per_slab, grid.n_x
    x = grid.x_nodes()
    w = state.v + state.u0hat
    out = np.zeros_like(state.v)

    use_lam = problem.M_Lambda > 0.0
    use_b = problem.M_b > 0.0
    if not (use_lam or use_b):
        return out

    lam_src = np.empty((m, n)) if use_lam else None
    slope_src = np.empty((m, n + 1)) if use_b else None
    for j in range(m):
        t_j = state.r + j * grid.dt
        if use_lam:
            lam_src[j] = np.asarray(problem.Lambda(t_j, x, w[j])) * w[j]
        if use_b:
            b_hat = np.asarray(problem.b(t_j, x, w[j])) * w[j]
            padded = np.concatenate(([0.0], b_hat, [0.0]))
            slope_src[j] = np.diff(padded) / grid.dx

    for ell in range(1, m + 1):
        if use_lam:
            conv = fftconvolve(lam_src[:ell], state.stencils.A[ell - 1 :: -1], axes=-1)
            out[ell] += conv[:, n - 1 : 2 * n - 1].sum(axis=0)
        if use_b:
            conv = fftconvolve(slope_src[:ell], state.stencils.B[ell - 1 :: -1], axes=-1)
            out[ell] += conv[:, n : 2 * n].sum(axis=0)
    return out


def solve_slab(r: float, tau: float, phi: np.ndarray, problem: ProblemSpec,
               kernel: KernelModel, grid: GridSpec, tol: float = 1e-6,
               max_iter: int = 200, stencils: SlabStencils | None = None,
               n_w: int = 65, v0: np.ndarray | None = None, slab_index: int = 0):
    """Iterate the slab map from v = 0 until the successive L1 distance <= tol.

    Returns (u_slab, state) where u_slab = u0_hat + v_fixed on the slab levels
    and state carries the residual history and iteration count.  Raises
    RuntimeError on non-convergence within max_iter, reporting the history.
    """
    if abs(tau - grid.tau) > 1e-12 * max(1.0, grid.tau):
        raise ValueError("tau must match the grid slab width")
    state = prepare_slab(slab_index, r, phi, problem, kernel, grid,
                         stencils=stencils, n_w=n_w, v0=v0)
    for it in range(1, max_iter + 1):
        v_new = picard_map(state, problem, kernel)
        res = slab_l1(v_new - state.v, grid.dx, grid.dt)
        state.v = v_new
        state.iterations = it
        state.residual_history.append(res)
        if res <= tol:
            return state.u0hat + state.v, state
    raise RuntimeError(
        f"slab {slab_index} at r={r:.6g} did not converge in {max_iter} iterations; "
        f"residual history tail {state.residual_history[-5:]} (tau too large or "
        "constants inconsistent)"
    )


@dataclass
class SolveReport:
    """Convergence diagnostics of one mild solve."""

    converged: bool
    tol: float
    slab_iterations: list
    slab_residuals: list
    residual_histories: list
    C_u: float
    c_u: float
    M: float
    tau: float
    n_slabs: int
    contraction_C: float
    pi_C2_tau: float
    contraction_monitor_ok: bool
    max_iterate_per_time_l1: float
    max_iterate_sup: float
    cbar_observed: float
    wall_clock: float
    grid: GridSpec
    notes: str = ""

    def ball_ok(self) -> bool:
        return (self.max_iterate_per_time_l1 <= self.M + 1e-12
                and self.max_iterate_sup <= self.M + 1e-12)

    def to_text(self) -> str:
        lines = [
            f"converged = {self.converged}",
            f"tol = {self.tol:.6g}",
            f"n_slabs = {self.n_slabs}",
            f"tau = {self.tau:.6g}",
            f"C_u = {self.C_u:.6g}",
            f"c_u = {self.c_u:.6g}",
            f"M = {self.M:.6g}",
            f"contraction_C = {self.contraction_C:.6g}",
            f"pi_C2_tau = {self.pi_C2_tau:.6g}",
            f"contraction_monitor_ok = {self.contraction_monitor_ok}",
            f"ball_ok = {self.ball_ok()}",
            f"max_iterate_per_time_l1 = {self.max_iterate_per_time_l1:.6g}",
            f"max_iterate_sup = {self.max_iterate_sup:.6g}",
            f"cbar_observed = {self.cbar_observed:.6g}",
            f"slab_iterations = {self.slab_iterations}",
            f"final_slab_residuals = {[f'{r:.3e}' for r in self.slab_residuals]}",
            f"wall_clock_s = {self.wall_clock:.3f}",
            f"grid = R{self.grid.R} n_x{self.grid.n_x} n_t{self.grid.n_t} T{self.grid.T}",
        ]
        if self.notes:
            lines.append(f"notes = {self.notes}")
        return "\n".join(lines)


def _initial_cell_means(u0, grid: GridSpec) -> np.ndarray:
    if hasattr(u0, "cdf"):
        return cell_means_from_cdf(u0.cdf, grid)
    return cell_means_from_pdf(u0.pdf if hasattr(u0, "pdf") else u0, grid)


def solve(problem: ProblemSpec, grid: GridSpec, tol: float = 1e-6,
          max_iter: int = 200, n_w: int = 65, kernel: KernelModel | None = None,
          perturb_initial: float = 0.0):
    """Glue slab fixed points into the bounded mild solution on [0, T].

    The per-slab stopping threshold is tol * tau / T so that tol bounds the
    accumulated iteration error of the whole run.  perturb_initial != 0 starts
    every slab from that multiple of u0_hat instead of v = 0 (a uniqueness
    check, not the default path).
    """
    if abs(grid.T - problem.T) > 1e-12 * max(1.0, problem.T):
        raise ValueError("grid horizon must match the problem horizon")
    if kernel is None:
        kernel = kernel_for(problem)
    M = ball_radius(problem, kernel)
    tau_max = estimate_slab_tau(problem.M_b, problem.M_Lambda, kernel.C_u,
                                problem.d, M, horizon=problem.T)
    if grid.tau > tau_max * (1.0 + 1e-9):
        raise ValueError(f"slab width tau={grid.tau:.6g} exceeds tau_max={tau_max:.6g}")

    t0 = _time.perf_counter()
    N, m = grid.n_slabs, grid.levels_per_slab
    tol_slab = tol * grid.tau / grid.T
    times = grid.times()
    u = np.empty((grid.n_t + 1, grid.n_x))
    u[0] = _initial_cell_means(problem.u0, grid)

    shared = build_slab_stencils(kernel, grid, 0.0, n_w=n_w) if kernel.time_homogeneous else None
    iters, residuals, histories = [], [], []
    max_l1 = 0.0
    max_sup = 0.0
    monitor_ok = True
    C = contraction_constant(problem, kernel, M, grid.tau)
    rho2 = float(np.pi * C * C * grid.tau)

    for k in range(N):
        r = times[k * m]
        phi = u[k * m]
        stencils = shared if shared is not None else build_slab_stencils(kernel, grid, r, n_w=n_w)
        v0 = None
        if perturb_initial != 0.0:
            state0 = prepare_slab(k, r, phi, problem, kernel, grid, stencils=stencils)
            v0 = perturb_initial * state0.u0hat
        u_slab, state = solve_slab(r, grid.tau, phi, problem, kernel, grid,
                                   tol=tol_slab, max_iter=max_iter,
                                   stencils=stencils, n_w=n_w, v0=v0, slab_index=k)
        u[k * m : (k + 1) * m + 1] = u_slab
        iters.append(state.iterations)
        residuals.append(state.residual_history[-1])
        histories.append(state.residual_history)
        per_time_l1 = np.abs(state.v).sum(axis=1).max() * grid.dx
        max_l1 = max(max_l1, per_time_l1)
        max_sup = max(max_sup, float(np.abs(state.v).max()))
        if rho2 < 1.0:
            h = state.residual_history
            for i in range(len(h) - 2):
                if h[i + 2] > rho2 * max(h[: i + 1]) * (1.0 + 1e-9):
                    monitor_ok = False

    # empirical sup-norm slab constant: ||Pi(v)||_inf <= Cbar sqrt(tau)
    cbar = max_sup / np.sqrt(grid.tau) if max_sup > 0 else 0.0
    report = SolveReport(
        converged=True, tol=tol, slab_iterations=iters, slab_residuals=residuals,
        residual_histories=histories, C_u=kernel.C_u, c_u=kernel.c_u, M=M,
        tau=grid.tau, n_slabs=N, contraction_C=float(C), pi_C2_tau=rho2,
        contraction_monitor_ok=monitor_ok, max_iterate_per_time_l1=float(max_l1),
        max_iterate_sup=float(max_sup), cbar_observed=float(cbar),
        wall_clock=_time.perf_counter() - t0, grid=grid,
    )
    return Field(grid, u), report


@dataclass(frozen=True)
class _FrozenProblem:
    """Adapter exposing frozen coefficient fields through the ProblemSpec surface."""

    name: str
    d: int
    T: float
    Phi: float
    b0: float | None
    u0: object
    b_values: np.ndarray  # (n_t + 1, n_x)
    Lambda_values: np.ndarray
    dt: float
    M_b: float
    M_Lambda: float
    L_b: float = 0.0
    L_Lambda: float = 0.0
    z_max: float = float("inf")

    def _level(self, t):
        return int(round(t / self.dt))

    def b(self, t, x, z):
        return self.b_values[self._level(t)]

    def Lambda(self, t, x, z):
        return self.Lambda_values[self._level(t)]

    def a_fn(self):
        return self.Phi**2

    def b0_fn(self):
        return self.b0


def freeze_coefficients(problem: ProblemSpec, u: Field):
    """Coefficient fields b^(t,x) = b(t,x,u) and Lam^(t,x) = Lambda(t,x,u)."""
    x = u.grid.x_nodes()
    times = u.grid.times()
    b_hat = np.empty_like(u.values)
    lam_hat = np.empty_like(u.values)
    for k, t in enumerate(times):
        b_hat[k] = np.asarray(problem.b(t, x, u.values[k]))
        lam_hat[k] = np.asarray(problem.Lambda(t, x, u.values[k]))
    return b_hat, lam_hat


def solve_linearized(b_hat: np.ndarray, Lambda_hat: np.ndarray, u0, grid: GridSpec,
                     kernel: KernelModel, tol: float = 1e-6, max_iter: int = 200,
                     n_w: int = 65, Phi: float | None = None) -> Field:
    """Measure-mild solution of the frozen-coefficient linear equation.

    b_hat and Lambda_hat are bounded fields on the grid levels; the fixed
    point is linear in the unknown and additive in u0.  The same slab
    machinery applies with the z-dependence replaced by field lookups.
    """
    b_hat = np.asarray(b_hat, dtype=float)
    Lambda_hat = np.asarray(Lambda_hat, dtype=float)
    shape = (grid.n_t + 1, grid.n_x)
    if b_hat.shape != shape or Lambda_hat.shape != shape:
        raise ValueError(f"frozen coefficient fields must have shape {shape}")
    if Phi is None:
        Phi = float(np.sqrt(kernel.covariance(0.0, grid.T)[0, 0] / grid.T))
    frozen = _FrozenProblem(
        name="frozen", d=1, T=grid.T, Phi=Phi, b0=None, u0=u0,
        b_values=b_hat, Lambda_values=Lambda_hat, dt=grid.dt,
        M_b=float(np.abs(b_hat).max()), M_Lambda=float(np.abs(Lambda_hat).max()),
    )
    field_out, _ = solve(frozen, grid, tol=tol, max_iter=max_iter, n_w=n_w, kernel=kernel)
    return field_out


def weak_residual(u: Field, phi_test: SmoothTestFunction, t: float, problem: ProblemSpec) -> float:
    """Absolute defect of the weak-form identity at time t for one test function.

    Both sides are evaluated by trapezoid quadrature in space and time on the
    field's grid; the true mild solution has zero defect, so the returned
    value bounds the discretization error.
    """
    grid = u.grid
    k = grid.time_index(t)
    x = grid.x_nodes()
    wx = np.full(grid.n_x, grid.dx)
    wx[0] = wx[-1] = 0.5 * grid.dx
    a = problem.a_fn()
    b0 = problem.b0 if problem.b0 is not None else 0.0
    gen_phi = 0.5 * a * phi_test.d2f(x) + b0 * phi_test.df(x)

    lhs = float(np.dot(wx, phi_test.f(x) * u.values[k]))
    rhs = float(np.dot(wx, phi_test.f(x) * problem.u0.pdf(x)))

    times = grid.times()[: k + 1]
    integrand = np.empty(k + 1)
    for j, tj in enumerate(times):
        z = u.values[j]
        bz = np.asarray(problem.b(tj, x, z))
        lz = np.asarray(problem.Lambda(tj, x, z))
        integrand[j] = float(
            np.dot(wx, z * gen_phi + phi_test.df(x) * bz * z + phi_test.f(x) * lz * z)
        )
    if k >= 1:
        rhs += float(np.trapezoid(integrand, times))
    return abs(lhs - rhs)


def plan_grid(problem: ProblemSpec, R: float, n_x: int, n_t_min: int,
              kernel: KernelModel | None = None, levels_per_slab_min: int = 2,
              min_slabs: int = 1, align: int = 4) -> GridSpec:
    """Pick a slab decomposition: the fewest slabs with tau under the bound,
    then the smallest multiple of that count reaching n_t_min levels with the
    total level count a multiple of align (so quarter-horizon comparison
    times land on levels)."""
    if kernel is None:
        kernel = kernel_for(problem)
    M = ball_radius(problem, kernel)
    tau_max = estimate_slab_tau(problem.M_b, problem.M_Lambda, kernel.C_u,
                                problem.d, M, horizon=problem.T)
    N0 = max(min_slabs, int(np.ceil(problem.T / tau_max - 1e-12)))
    for N in range(N0, 4 * N0 + align + 1):
        m = max(levels_per_slab_min, int(np.ceil(n_t_min / N)))
        if (N * m) % align == 0:
            return GridSpec(R=R, n_x=n_x, n_t=N * m, T=problem.T, tau=problem.T / N)
    raise ValueError("no aligned slab decomposition found")
