"""Stationary profiles: decaying ground profile, trapped bound states and
mass-constrained minimizers.

Every solver returns the exact solution of the *discrete* stationary system
(Newton-polished), so the reported residual is the sup-norm of the discrete
operator applied to the profile, not an ODE-sampling artifact.

The shooting stage brackets the center amplitude by bisection on
"profile crosses zero" (amplitude too large) versus "profile turns back up"
(amplitude too small), starting the integration off the origin with a
two-term series that accounts for the r^(2-b) behavior of the source.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .core import (GridMismatchError, ModelParams, ParameterError, RadialField,
                   RadialGrid, apply_laplacian, grad_norm_sq, mass, variance)
from .functionals import energy as _energy
from .functionals import potential

__all__ = [
    "ConvergenceError", "BracketError", "EnergyUnboundedError",
    "ConstraintEmptyError", "OutsideHypothesesError",
    "GroundStateResult", "UniquenessReport",
    "solve_soliton", "solve_bound_state", "constrained_minimizer",
    "stationary_residuals", "uniqueness_report",
    "save_profile", "load_profile", "soliton_grid",
]


class ConvergenceError(RuntimeError):
    """A solver failed to reach its tolerance."""


class BracketError(ConvergenceError):
    """The shooting bisection could not bracket decay versus blow-up."""


class EnergyUnboundedError(ConvergenceError):
    """Monotone divergence of the descent: the energy is unbounded below."""


class ConstraintEmptyError(ParameterError):
    """The mass/ball constraint set is empty (q > ball_radius / (gamma N))."""


class OutsideHypothesesError(ParameterError):
    """Parameters outside the hypotheses of the uniqueness criterion."""


@dataclass(frozen=True)
class GroundStateResult:
    """Converged stationary profile plus its diagnostics.

    omega is the frequency of the stationary equation actually solved:
    1 for the free decaying profile, the input frequency for bound states,
    and the extracted Lagrange multiplier for constrained flows.
    pohozaev_1/2 are the residuals of the two stationarity identities
    (pairing with u and with x . grad u) for that same equation.
    """

    profile: RadialField
    omega: float
    residual_sup: float
    pohozaev_1: float
    pohozaev_2: float
    mass: float
    energy: float
    iterations: int
    converged: bool = True
    status: str = "converged"


# ----------------------------------------------------------------- shooting

def _series_start(a, r0, b, p, dim, omega_eff):
    """Two-term expansion around the origin: a + A r^(2-b) + B r^2."""
    A = -a ** p / ((2.0 - b) * (dim - b))
    B = omega_eff * a / (2.0 * dim)
    u = a + A * r0 ** (2.0 - b) + B * r0 ** 2
    w = (2.0 - b) * A * r0 ** (1.0 - b) + 2.0 * B * r0
    return u, w


def _integrate(a, grid, b, p, omega_eff, gamma_eff, cap):
    """Fixed-step RK4 along the nodes; returns (samples, outcome, k_last).

    outcome is "crossed" (u hit zero), "diverged" (u exceeded cap * a) or
    "end" (reached rmax without an event).
    """
    dim = grid.dim
    h = grid.h
    n = grid.n
    nm1 = dim - 1.0
    g2 = gamma_eff * gamma_eff
    pm1 = p - 1.0

    def f(r, u, w):
        du = w
        dw = (-nm1 / r * w + (omega_eff + g2 * r * r) * u
              - r ** (-b) * abs(u) ** pm1 * u)
        return du, dw

    r0 = 0.5 * h
    u, w = _series_start(a, r0, b, p, dim, omega_eff)
    us = np.empty(n)
    us[0] = u
    bound = cap * a
    for k in range(n - 1):
        r = r0 + k * h
        k1u, k1w = f(r, u, w)
        k2u, k2w = f(r + 0.5 * h, u + 0.5 * h * k1u, w + 0.5 * h * k1w)
        k3u, k3w = f(r + 0.5 * h, u + 0.5 * h * k2u, w + 0.5 * h * k2w)
        k4u, k4w = f(r + h, u + h * k3u, w + h * k3w)
        u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        w = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        us[k + 1] = u
        if u <= 0.0:
            return us[:k + 2], "crossed", k + 1
        if u > bound:
            return us[:k + 2], "diverged", k + 1
    return us, "end", n - 1


def _shoot(grid, b, p, omega_eff, gamma_eff, a_guess=1.0, cap=3.0,
           bisect_iters=54):
    """Bisect the center amplitude; returns (a_star, node initial guess)."""

    def outcome(a):
        _, out, _ = _integrate(a, grid, b, p, omega_eff, gamma_eff, cap)
        return out

    lo = hi = None
    a = a_guess
    for _ in range(60):
        out = outcome(a)
        if out == "crossed":
            hi = a
            a *= 0.5
        else:
            lo = a
            a *= 2.0
        if lo is not None and hi is not None:
            break
        if a < 1e-12 or a > 1e12:
            break
    if lo is None or hi is None:
        raise BracketError("no sign change bracket for the center amplitude")
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        if outcome(mid) == "crossed":
            hi = mid
        else:
            lo = mid
    a_star = 0.5 * (lo + hi)
    us, out, k_last = _integrate(a_star, grid, b, p, omega_eff, gamma_eff, cap)

    # Truncate where the trajectory departs from monotone decay, then
    # continue with the asymptotic decay of the linearized far field.
    guess = np.zeros(grid.n)
    m = len(us)
    dep = m
    for k in range(1, m):
        if us[k] <= 0.0 or us[k] > us[k - 1]:
            dep = k
            break
    dep = max(dep, 2)
    guess[:dep] = us[:dep]
    if dep < grid.n:
        rc = grid.r[dep - 1]
        uc = max(us[dep - 1], 1e-300)
        rr = grid.r[dep:]
        if gamma_eff > 0.0:
            tail = uc * np.exp(-gamma_eff * (rr ** 2 - rc ** 2) / 2.0)
        else:
            kappa = math.sqrt(max(omega_eff, 1e-12))
            tail = uc * np.exp(-kappa * (rr - rc))
        guess[dep:] = tail
    return a_star, guess


# ------------------------------------------------------------------- Newton

def _newton(u, linear_coeff, grid, b, p, tol, max_iter=60):
    """Newton iteration for -Lap u + linear_coeff u - r^(-b)|u|^(p-1)u = 0."""
    lap = grid.laplacian_bands()
    r = grid.r
    rb = r ** (-b)
    res_prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        F = (-apply_laplacian(u, grid) + linear_coeff * u
             - rb * np.abs(u) ** (p - 1.0) * u)
        res = float(np.max(np.abs(F)))
        if res < tol * 1e-3 or (res >= 0.7 * res_prev and res < tol):
            return u, res, it
        res_prev = res
        bands = np.empty((3, grid.n))
        bands[0] = -lap[0]
        bands[1] = -lap[1] + linear_coeff - p * rb * np.abs(u) ** (p - 1.0)
        bands[2] = -lap[2]
        step = solve_banded((1, 1), bands, -F)
        scale = 1.0
        for _ in range(12):
            u_try = u + scale * step
            F_try = (-apply_laplacian(u_try, grid) + linear_coeff * u_try
                     - rb * np.abs(u_try) ** (p - 1.0) * u_try)
            if np.max(np.abs(F_try)) < res or scale < 1e-3:
                break
            scale *= 0.5
        u = u + scale * step
    F = (-apply_laplacian(u, grid) + linear_coeff * u
         - rb * np.abs(u) ** (p - 1.0) * u)
    return u, float(np.max(np.abs(F))), it


def _identity_residuals(u: RadialField, b, p, omega_eff, gamma_eff):
    """Residuals of the two stationarity identities for the given equation."""
    dim = u.grid.dim
    g = grad_norm_sq(u)
    m = mass(u)
    v = variance(u)
    rb = u.grid.r ** (-b)
    P = float(np.sum(u.grid.weights * rb * np.abs(u.values) ** (p + 1.0)))
    id1 = g + omega_eff * m + gamma_eff ** 2 * v - P
    id2 = ((2.0 - dim) / 2.0 * g - dim * omega_eff / 2.0 * m
           - (dim + 2.0) / 2.0 * gamma_eff ** 2 * v + (dim - b) / (p + 1.0) * P)
    return id1, id2


def _check_shape(u):
    if not np.all(u > 0.0):
        raise ConvergenceError("profile is not strictly positive on the grid")
    if not np.all(np.diff(u) <= 0.0):
        raise ConvergenceError("profile is not monotone nonincreasing")


def soliton_grid(params: ModelParams, h: float = 2e-3,
                 rmax: float = 20.0) -> RadialGrid:
    """Default mesh for the free decaying profile.

    The free profile decays like exp(-r), so the truncation radius must be
    large enough that exp(-2 rmax) is negligible; rmax = 20 matches the
    exp(-40) truncation budget of the trapped default mesh.
    """
    return RadialGrid(h=h, rmax=rmax, dim=params.dim)


def solve_soliton(params: ModelParams, grid: RadialGrid | None = None,
                  tol: float = 1e-8) -> GroundStateResult:
    """Positive decaying radial solution of -Lap Q + Q = |x|^(-b) Q^p.

    Defined at the critical power p = 1 + (4-2b)/N; its squared L^2 norm is
    the critical mass separating global existence from collapse.
    """
    if not params.is_critical:
        raise ParameterError(
            f"the decaying ground profile is used at the critical power "
            f"{params.p_critical}; got p = {params.p}")
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    if grid is None:
        grid = soliton_grid(params)
    if grid.dim != params.dim:
        raise GridMismatchError("grid dim differs from params dim")
    _, guess = _shoot(grid, params.b, params.p, omega_eff=1.0, gamma_eff=0.0)
    u, res, iters = _newton(guess, np.ones(grid.n), grid, params.b, params.p, tol)
    if res > tol:
        raise ConvergenceError(
            f"stationary residual {res:.3e} above tolerance {tol:.1e}")
    _check_shape(u)
    prof = RadialField(grid, u)
    id1, id2 = _identity_residuals(prof, params.b, params.p, 1.0, 0.0)
    return GroundStateResult(
        profile=prof, omega=1.0, residual_sup=res,
        pohozaev_1=id1, pohozaev_2=id2, mass=mass(prof),
        energy=0.5 * grad_norm_sq(prof) - potential(prof, params) / (params.p + 1.0),
        iterations=iters)


def solve_bound_state(params: ModelParams, grid: RadialGrid | None = None,
                      tol: float = 1e-8) -> GroundStateResult:
    """Positive decaying solution of the trapped stationary equation at the
    frequency params.omega > -gamma N."""
    omega = params.require_omega()
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    if grid is None:
        from .core import default_grid
        grid = default_grid(params)
    if grid.dim != params.dim:
        raise GridMismatchError("grid dim differs from params dim")
    _, guess = _shoot(grid, params.b, params.p, omega_eff=omega,
                      gamma_eff=params.gamma)
    coeff = omega + params.gamma ** 2 * grid.r ** 2
    u, res, iters = _newton(guess, coeff, grid, params.b, params.p, tol)
    if res > tol:
        raise ConvergenceError(
            f"stationary residual {res:.3e} above tolerance {tol:.1e}")
    _check_shape(u)
    prof = RadialField(grid, u)
    id1, id2 = _identity_residuals(prof, params.b, params.p, omega, params.gamma)
    return GroundStateResult(
        profile=prof, omega=omega, residual_sup=res,
        pohozaev_1=id1, pohozaev_2=id2, mass=mass(prof),
        energy=_energy(prof, params), iterations=iters)


def stationary_residuals(u: RadialField, params: ModelParams):
    """Residuals of the two trapped stationarity identities of u.

    First: pairing the stationary equation with u (vanishes identically for
    any discrete stationary state).  Second: the x . grad u pairing.
    """
    omega = params.require_omega()
    return _identity_residuals(u, params.b, params.p, omega, params.gamma)


# ------------------------------------------------- constrained minimization

def _flow_step_matrix(grid, coeff, dtau):
    lap = grid.laplacian_bands()
    bands = np.empty((3, grid.n))
    bands[0] = -dtau * lap[0]
    bands[1] = 1.0 - dtau * lap[1] + dtau * coeff
    bands[2] = -dtau * lap[2]
    return bands


def _bordered_newton(u, omega, q, grid, params, tol, max_iter=40):
    """Newton on the stationary system with unknown multiplier, at fixed mass."""
    lap = grid.laplacian_bands()
    r = grid.r
    rb = r ** (-params.b)
    trap = params.gamma ** 2 * r ** 2
    w = grid.weights
    p = params.p
    for it in range(1, max_iter + 1):
        F = (-apply_laplacian(u, grid) + (trap + omega) * u
             - rb * np.abs(u) ** (p - 1.0) * u)
        C = float(np.sum(w * u * u)) - q
        res = float(np.max(np.abs(F)))
        if res < tol and abs(C) < 1e-12 * q:
            return u, omega, res, it
        bands = np.empty((3, grid.n))
        bands[0] = -lap[0]
        bands[1] = -lap[1] + trap + omega - p * rb * np.abs(u) ** (p - 1.0)
        bands[2] = -lap[2]
        x0 = solve_banded((1, 1), bands, -F)
        x1 = solve_banded((1, 1), bands, -u)
        denom = 2.0 * float(np.sum(w * u * x1))
        if denom == 0.0:
            raise ConvergenceError("singular bordered system")
        domega = (-C - 2.0 * float(np.sum(w * u * x0))) / denom
        u = u + x0 + domega * x1
        omega = omega + domega
    return u, omega, res, max_iter


def constrained_minimizer(q: float, params: ModelParams,
                          grid: RadialGrid | None = None,
                          ball_radius: float | None = None,
                          tol: float = 1e-8,
                          max_iter: int = 40000,
                          dtau: float = 0.5,
                          energy_trace: list | None = None) -> GroundStateResult:
    """Energy minimizer at prescribed mass q by normalized gradient descent.

    Semi-implicit treatment of the stiff linear operator, explicit
    nonlinearity, renormalization to mass q each step; a bordered Newton
    polish removes the remaining flow error.  The multiplier is extracted
    from the inner-product identity omega q = P - ||grad u||^2
    - gamma^2 ||x u||^2, which is exact at stationarity.

    With ball_radius set this is the local variational problem on the ball
    ||u||_H^2 <= ball_radius; the constraint set is nonempty iff
    q <= ball_radius / (gamma N), and the minimizer must end up strictly
    inside the ball (checked a posteriori with a 1% margin).
    """
    if q <= 0.0:
        raise ParameterError("the mass target q must be positive")
    if grid is None:
        from .core import default_grid
        grid = default_grid(params)
    if ball_radius is not None and q > ball_radius / (params.gamma * params.dim):
        raise ConstraintEmptyError(
            f"constraint set empty: q = {q} exceeds ball_radius/(gamma N) = "
            f"{ball_radius / (params.gamma * params.dim)}")
    supercritical_free = (params.criticality == "supercritical"
                          and ball_radius is None)

    r = grid.r
    w = grid.weights
    rb = r ** (-params.b)
    trap_coeff = params.gamma ** 2 * r ** 2
    p = params.p

    u = np.exp(-params.gamma * r ** 2 / 2.0)
    u *= math.sqrt(q / float(np.sum(w * u * u)))

    def energy_of(x):
        d = np.diff(x)
        g = grid.sphere * (np.sum(grid.face_w[1:grid.n] * d * d) / grid.h
                           + grid.face_w[grid.n] * 2.0 * x[-1] ** 2 / grid.h)
        v = float(np.sum(w * r ** 2 * x * x))
        P = float(np.sum(w * rb * np.abs(x) ** (p + 1.0)))
        return 0.5 * g + 0.5 * params.gamma ** 2 * v - P / (p + 1.0), g, v, P

    # Multiplier-shifted semi-implicit step: with the current multiplier in
    # the implicit operator, discrete stationary states are exact fixed
    # points of the normalized step (the unshifted variant stalls at an
    # O(dtau)-biased profile).
    E_prev, g0, v0, P0 = energy_of(u)
    omega = (P0 - g0 - params.gamma ** 2 * v0) / q
    g_prev = g0
    grow = 0
    flow_tol = max(math.sqrt(tol), 100.0 * tol)
    it = 0
    status = "converged"
    res = math.inf
    res_mark = math.inf
    while it < max_iter:
        it += 1
        shift = trap_coeff + max(omega, -params.gamma * params.dim)
        bands = _flow_step_matrix(grid, shift, dtau)
        rhs = u + dtau * rb * np.abs(u) ** (p - 1.0) * u
        u_new = solve_banded((1, 1), bands, rhs)
        u_new *= math.sqrt(q / float(np.sum(w * u_new * u_new)))
        E_new, g, v, P = energy_of(u_new)
        if E_new > E_prev + 1e-10 * max(1.0, abs(E_prev)):
            if dtau <= 1e-8:
                break
            dtau *= 0.5
            continue
        if g > g_prev * (1.0 + 1e-10) and g > 25.0 * g0:
            grow += 1
        else:
            grow = 0
        g_prev = g
        # gentle monotone divergence, or a catastrophic dive onto a
        # grid-concentrated state (the unbounded direction collapses within
        # a few steps and then saturates at the mesh scale)
        diverged = grow >= 50 or g > 1e4 * g0 or E_new < -1e8 * (1.0 + abs(g0))
        if diverged:
            if supercritical_free:
                raise EnergyUnboundedError(
                    "energy unbounded: the descent diverges (supercritical "
                    "power without a ball constraint)")
            if params.is_critical and ball_radius is None:
                status = "gradient_diverging"
                u = u_new
                break
            raise ConvergenceError(
                "descent diverged; the mass target is outside the "
                "admissible range for this constraint")
        u = u_new
        E_prev = E_new
        if energy_trace is not None:
            energy_trace.append(E_new)
        omega = (P - g - params.gamma ** 2 * v) / q
        F = (-apply_laplacian(u, grid) + (trap_coeff + omega) * u
             - rb * np.abs(u) ** (p - 1.0) * u)
        res = float(np.max(np.abs(F)))
        if res < flow_tol:
            break
        if it % 200 == 0:
            # hand a plateaued flow to Newton rather than spinning
            if res > 0.999 * res_mark:
                break
            res_mark = res
    else:
        raise ConvergenceError(
            f"nonconvergence: {max_iter} descent steps without stationarity")

    _, g, v, P = energy_of(u)
    omega = (P - g - params.gamma ** 2 * v) / q
    if status == "converged":
        u, omega, res, newton_iters = _bordered_newton(
            u, omega, q, grid, params, tol)
        if res > tol:
            raise ConvergenceError(
                f"stationary residual {res:.3e} above tolerance {tol:.1e}")
        _check_shape(u)
        it += newton_iters
    else:
        F = (-apply_laplacian(u, grid) + (trap_coeff + omega) * u
             - rb * np.abs(u) ** (p - 1.0) * u)
        res = float(np.max(np.abs(F)))

    prof = RadialField(grid, u)
    if status == "converged" and ball_radius is not None:
        hsq = grad_norm_sq(prof) + params.gamma ** 2 * variance(prof)
        if hsq > 0.99 * ball_radius:
            raise ConvergenceError(
                f"minimizer not strictly inside the ball: ||u||_H^2 = {hsq} "
                f"vs ball_radius = {ball_radius}")
    id1, id2 = _identity_residuals(prof, params.b, params.p, omega, params.gamma)
    return GroundStateResult(
        profile=prof, omega=omega, residual_sup=res,
        pohozaev_1=id1, pohozaev_2=id2, mass=mass(prof),
        energy=_energy(prof, params), iterations=it,
        converged=(status == "converged"), status=status)


# --------------------------------------------------------------- uniqueness

@dataclass(frozen=True)
class UniquenessReport:
    """Sign diagnostics of the sign-change polynomial G(r) = A r^2 + B r + C
    underlying the uniqueness criterion for the trapped stationary equation
    (valid for N >= 3, 0 < b < 1, trap strength normalized to 1)."""

    A: float
    B: float
    C: float
    k: float
    r_samples: np.ndarray
    a_of_r: np.ndarray
    beta_of_r: np.ndarray
    c_of_r: np.ndarray
    conditions_hold: bool


def uniqueness_report(params: ModelParams,
                      r_samples: np.ndarray | None = None) -> UniquenessReport:
    """Assemble the uniqueness-criterion coefficients and auxiliary weights.

    The criterion normalizes the trap strength to 1; for other gamma the
    frequency enters as omega / gamma.  Raises OutsideHypothesesError for
    N < 3 or b >= 1, where the criterion is not available.
    """
    if params.dim < 3 or params.b >= 1.0:
        raise OutsideHypothesesError(
            "outside appendix hypotheses: need N >= 3 and 0 < b < 1")
    omega = params.require_omega() / params.gamma
    N, b, p = params.dim, params.b, params.p

    A = -(p + 3.0) ** 2 * (2.0 * b + N * (p - 1.0) + 4.0)
    B = omega * (p + 3.0) ** 2 * (2.0 * N - (2.0 + b))
    C = ((b - 2.0 * N + 2.0) * (p * (N - 2.0) + b + N - 4.0)
         * (p * (N - 2.0) + 2.0 * b - N - 2.0))

    disc = B * B - 4.0 * A * C
    k = (-B - math.sqrt(max(disc, 0.0))) / (2.0 * A)

    if r_samples is None:
        r_samples = np.linspace(0.05, 10.0, 200)
    r_samples = np.asarray(r_samples, dtype=float)
    exp_a = 2.0 * (b + (N - 1.0) * (p + 1.0)) / (p + 3.0)
    a_of_r = r_samples ** exp_a
    coef_beta = (2.0 * (N - 1.0) - b) / (p + 3.0)
    beta_of_r = coef_beta * r_samples ** (exp_a - 1.0)
    c_of_r = coef_beta * (N - 1.0 - (exp_a - 1.0)) * r_samples ** (exp_a - 2.0)

    conditions = (A < 0.0) and (C >= 0.0) and (k >= 0.0)
    return UniquenessReport(A=A, B=B, C=C, k=k, r_samples=r_samples,
                            a_of_r=a_of_r, beta_of_r=beta_of_r,
                            c_of_r=c_of_r, conditions_hold=conditions)


# ------------------------------------------------------------ serialization

def save_profile(path, result_or_field, params: ModelParams,
                 omega: float | None = None,
                 extra_header: dict | None = None) -> None:
    """Write a real radial profile as two-column text with a header.

    The header records the model parameters, the mesh, the stationary
    frequency and any extra metadata; values carry 17 significant digits.
    """
    if isinstance(result_or_field, GroundStateResult):
        field = result_or_field.profile
        if omega is None:
            omega = result_or_field.omega
    else:
        field = result_or_field
    vals = field.values
    if np.max(np.abs(vals.imag)) > 1e-12 * max(np.max(np.abs(vals)), 1e-300):
        raise ValueError("profile serialization is defined for real profiles")
    g = field.grid
    lines = ["# gpelab radial profile"]
    for key, val in params.as_dict().items():
        lines.append(f"# {key} = {val!r}")
    lines.append(f"# grid_h = {g.h!r}")
    lines.append(f"# grid_rmax = {g.rmax!r}")
    lines.append(f"# stationary_omega = {omega!r}")
    for key, val in (extra_header or {}).items():
        if key not in ("dim", "b", "p", "gamma", "omega"):
            lines.append(f"# {key} = {val!r}")
    lines.append("# columns: r value")
    for ri, vi in zip(g.r, vals.real):
        lines.append(f"{ri:.17g} {vi:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_profile(path):
    """Read a profile written by save_profile; returns (field, header dict)."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    header[key.strip()] = ast.literal_eval(val.strip())
                continue
            a, bcol = line.split()
            rows.append((float(a), float(bcol)))
    data = np.array(rows)
    grid = RadialGrid(h=header["grid_h"],
                      rmax=header["grid_rmax"],
                      dim=int(header["dim"]))
    if len(data) != grid.n or not np.allclose(data[:, 0], grid.r):
        raise GridMismatchError("profile nodes do not match the header grid")
    return RadialField(grid, data[:, 1]), header
