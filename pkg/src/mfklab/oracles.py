"""Independent reference solutions for cross-validation.

Closed forms for the heat and constant-growth presets, the explicit Burgers
expectation formula evaluated by Gauss-Hermite quadrature, and a conservative
finite-volume reference solver for viscous Burgers.  The finite-volume solver
is the arbiter for Burgers acceptance: it is independently checkable through
exact mass conservation and grid self-convergence, whereas the expectation
formula ships in two scalings (see burgers_expectation_formula) that must be
compared against it before trust.
"""

from __future__ import annotations

import math

import numpy as np

from .grids import Field, GridSpec

GH_NODES_DEFAULT = 200


def heat_oracle(u0_mean: float, u0_var: float, nu: float, t: float, x) -> np.ndarray | float:
    """Density of the heat evolution of a Gaussian: N(u0_mean, u0_var + nu t) at x."""
    if nu <= 0 or u0_var <= 0:
        raise ValueError("nu and u0_var must be positive")
    var = u0_var + nu * t
    z = (np.asarray(x, dtype=float) - u0_mean)
    out = np.exp(-0.5 * z * z / var) / math.sqrt(2.0 * math.pi * var)
    return float(out) if np.ndim(x) == 0 else out


def exp_mass_oracle(lam: float, t: float) -> float:
    """Total mass e^{lam t} forced by a constant growth rate."""
    return math.exp(lam * t)


def burgers_expectation_formula(u0, nu: float, t: float, x,
                                quad_nodes: int = GH_NODES_DEFAULT,
                                variant: str = "nu_squared") -> np.ndarray | float:
    """Explicit Burgers solution as a ratio of Gaussian expectations.

    variant="nu_squared" evaluates E[u0(x + nu B_t) e^{-U0(x + nu B_t)/nu^2}]
    over E[e^{-U0(x + nu B_t)/nu^2}]; variant="cole_hopf" uses x + sqrt(nu) B_t
    and exponent U0/nu.  The two coincide at nu = 1 and are compared against
    the finite-volume reference to decide which one solves
    u_t = (nu/2) u_xx - u u_x (the answer is recorded by the test suite:
    cole_hopf matches; nu_squared solves the nu^2-viscosity equation).
    u0 must expose pdf and cdf; t must be positive.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if variant == "nu_squared":
        scale, denom = nu, nu**2
    elif variant == "cole_hopf":
        scale, denom = math.sqrt(nu), nu
    else:
        raise ValueError("variant must be 'nu_squared' or 'cole_hopf'")
    xg, wg = np.polynomial.hermite.hermgauss(quad_nodes)
    shift = scale * math.sqrt(2.0 * t) * xg  # nodes of N(0, scale^2 t)
    x = np.asarray(x, dtype=float)
    args = x[..., None] + shift
    expo = -u0.cdf(args) / denom
    expo -= expo.max(axis=-1, keepdims=True)  # guard the exponent range
    weights = wg * np.exp(expo)
    den = weights.sum(axis=-1)
    if np.any(den <= 0) or not np.all(np.isfinite(den)):
        raise FloatingPointError("denominator underflow in the Burgers formula")
    out = (weights * u0.pdf(args)).sum(axis=-1) / den
    return float(out) if out.ndim == 0 else out


def burgers_fd_reference(u0, nu: float, grid: GridSpec, T: float | None = None,
                         refine: int = 4, cfl: float = 0.45,
                         max_steps: int = 20_000_000) -> Field:
    """Conservative finite-volume solve of u_t + d_x(u^2/2 - (nu/2) u_x) = 0.

    Runs on a grid refined `refine`-fold in space with an internally chosen
    stable explicit step, zero flux through the box boundary (telescoping
    fluxes conserve mass exactly), then restricts cell averages back to the
    requested grid at its time levels.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    T = grid.T if T is None else T
    n_f = refine * (grid.n_x - 1) + 1
    dx = 2.0 * grid.R / (n_f - 1)
    x = np.linspace(-grid.R, grid.R, n_f)
    if hasattr(u0, "cdf"):
        edges = np.concatenate((x - 0.5 * dx, [x[-1] + 0.5 * dx]))
        u = np.diff(u0.cdf(edges)) / dx
    else:
        u = np.asarray(u0.pdf(x), dtype=float)

    umax = max(float(np.abs(u).max()), 1e-12)
    dt_level = T / grid.n_t
    dt_stable = cfl * min(dx * dx / nu, dx / umax)
    steps_per_level = max(1, int(np.ceil(dt_level / dt_stable)))
    if steps_per_level * grid.n_t > max_steps:
        raise RuntimeError(
            f"stability requires {steps_per_level * grid.n_t} steps at this "
            "resolution; coarsen the grid or raise max_steps"
        )
    dt = dt_level / steps_per_level

    out = np.empty((grid.n_t + 1, grid.n_x))
    out[0] = _restrict(u, refine, grid.n_x)
    for k in range(grid.n_t):
        for _ in range(steps_per_level):
            flux = 0.25 * (u[:-1] ** 2 + u[1:] ** 2) - (0.5 * nu) * np.diff(u) / dx
            u[1:-1] -= (dt / dx) * np.diff(flux)
            u[0] -= (dt / dx) * flux[0]
            u[-1] += (dt / dx) * flux[-1]
        out[k + 1] = _restrict(u, refine, grid.n_x)
    return Field(grid, out)


def _restrict(fine: np.ndarray, refine: int, n_coarse: int) -> np.ndarray:
    """Average fine cell means onto coarse cells (exact overlap weights)."""
    if refine == 1:
        return fine.copy()
    half = refine // 2
    out = np.empty(n_coarse)
    for j in range(n_coarse):
        c = refine * j
        lo = max(c - half, 0)
        hi = min(c + half, len(fine) - 1)
        w = np.ones(hi - lo + 1)
        if refine % 2 == 0:  # even refine: the outermost fine cells overlap halfway
            if lo == c - half:
                w[0] = 0.5
            if hi == c + half:
                w[-1] = 0.5
        out[j] = np.dot(w, fine[lo : hi + 1]) / w.sum()
    return out
