"""Model parameters, radial grids, fields, quadrature and the basic norms.

Everything here is radially symmetric: a field u(r) on a cell-centered mesh
stands for the function u(|x|) on R^N, and integrals carry the surface
measure of the unit sphere times r^(N-1).

All objects are immutable after construction; the operations are pure
functions, so they are safe to call from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn
from typing import Callable, Mapping

import numpy as np

CRITICALITY_TOL = 1e-12

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"


class ParameterError(ValueError):
    """A model, grid or solver parameter violates its admissible range."""


class GridMismatchError(ValueError):
    """Fields or sample arrays live on incompatible grids."""


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^(dim-1) in R^dim."""
    return 2.0 * np.pi ** (dim / 2.0) / _gamma_fn(dim / 2.0)


@dataclass(frozen=True)
class ModelParams:
    """Physical and analytic parameters of the trapped inhomogeneous NLS.

    dim    spatial dimension N >= 1
    b      singularity exponent of the |x|^(-b) factor, 0 < b < min(2, N)
    p      nonlinearity power, 1 < p < p_max
    gamma  trap strength, > 0
    omega  frequency of the stationary problems; optional, must satisfy
           omega > -gamma*N when present
    """

    dim: int
    b: float
    p: float
    gamma: float = 1.0
    omega: float | None = None

    def __post_init__(self):
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ParameterError(f"dim must be an integer >= 1, got {self.dim!r}")
        bmax = min(2.0, float(self.dim))
        if not (0.0 < self.b < bmax):
            raise ParameterError(
                f"b must satisfy 0 < b < min(2, N) = {bmax}, got b = {self.b}")
        if not (1.0 < self.p < self.p_max):
            raise ParameterError(
                f"p must satisfy 1 < p < {self.p_max}, got p = {self.p}")
        if not self.gamma > 0.0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.omega is not None and not self.omega > -self.gamma * self.dim:
            raise ParameterError(
                f"omega must exceed -gamma*N = {-self.gamma * self.dim}, "
                f"got omega = {self.omega}")

    @property
    def p_max(self) -> float:
        """Upper admissible power: 1 + (4-2b)/(N-2) for N >= 3, else inf."""
        if self.dim >= 3:
            return 1.0 + (4.0 - 2.0 * self.b) / (self.dim - 2)
        return np.inf

    @property
    def p_critical(self) -> float:
        """Mass-critical power 1 + (4-2b)/N."""
        return 1.0 + (4.0 - 2.0 * self.b) / self.dim

    @property
    def criticality(self) -> str:
        d = self.p - self.p_critical
        if abs(d) <= CRITICALITY_TOL:
            return CRITICAL
        return SUBCRITICAL if d < 0 else SUPERCRITICAL

    @property
    def is_critical(self) -> bool:
        return self.criticality == CRITICAL

    @property
    def omega_min(self) -> float:
        """Open lower bound for admissible frequencies."""
        return -self.gamma * self.dim

    def with_omega(self, omega: float) -> "ModelParams":
        return ModelParams(self.dim, self.b, self.p, self.gamma, omega)

    def require_omega(self) -> float:
        if self.omega is None:
            raise ParameterError("this operation needs params.omega")
        return self.omega

    def as_dict(self) -> dict:
        return {"dim": self.dim, "b": self.b, "p": self.p,
                "gamma": self.gamma, "omega": self.omega}


def validate_params(raw: Mapping | None = None, **kwargs) -> ModelParams:
    """Build ModelParams from a mapping, rejecting unknown keys.

    Reports the critical power and the admissible upper power through the
    returned object (p_critical, p_max); raises ParameterError naming the
    violated bound otherwise.
    """
    data = dict(raw or {})
    data.update(kwargs)
    allowed = {"dim", "b", "p", "gamma", "omega"}
    unknown = set(data) - allowed
    if unknown:
        raise ParameterError(f"unknown parameter(s): {sorted(unknown)}")
    missing = {"dim", "b", "p"} - set(data)
    if missing:
        raise ParameterError(f"missing parameter(s): {sorted(missing)}")
    dim = data["dim"]
    if isinstance(dim, float):
        if dim != int(dim):
            raise ParameterError(f"dim must be an integer, got {dim}")
        dim = int(dim)
    return ModelParams(dim=dim,
                       b=float(data["b"]),
                       p=float(data["p"]),
                       gamma=float(data.get("gamma", 1.0)),
                       omega=None if data.get("omega") is None
                       else float(data["omega"]))


class RadialGrid:
    """Uniform cell-centered radial mesh on (0, rmax], excluding the origin.

    Nodes sit at r_i = (i + 1/2) h, so the factor r^(-b) is evaluable
    everywhere; the domain boundary rmax = n*h is a cell face where the
    Dirichlet condition u(rmax) = 0 is imposed.
    """

    def __init__(self, h: float, rmax: float, dim: int):
        if h <= 0 or rmax <= 0:
            raise ParameterError("h and rmax must be positive")
        n = int(round(rmax / h))
        if n < 4 or abs(n * h - rmax) > 1e-9 * rmax:
            raise ParameterError(
                f"rmax = {rmax} must be an integer multiple (>= 4) of h = {h}")
        if not (isinstance(dim, int) and dim >= 1):
            raise ParameterError(f"dim must be an integer >= 1, got {dim!r}")
        self.h = float(h)
        self.rmax = n * self.h
        self.dim = dim
        self.n = n
        self.r = (np.arange(n) + 0.5) * self.h
        self.face_r = np.arange(n + 1) * self.h
        self.sphere = sphere_area(dim)
        # node quadrature weights: omega_N r^(N-1) h  (midpoint rule)
        self.weights = self.sphere * self.r ** (dim - 1) * self.h
        # face weights r_f^(N-1) for the conservative gradient/Laplacian
        self.face_w = self.face_r ** (dim - 1)
        for a in (self.r, self.face_r, self.weights, self.face_w):
            a.setflags(write=False)
        self._lap_bands = None

    def __eq__(self, other):
        return (isinstance(other, RadialGrid)
                and self.h == other.h and self.n == other.n
                and self.dim == other.dim)

    def __hash__(self):
        return hash((self.h, self.n, self.dim))

    def __repr__(self):
        return f"RadialGrid(h={self.h}, rmax={self.rmax}, dim={self.dim})"

    def compatible(self, other: "RadialGrid") -> None:
        if self != other:
            raise GridMismatchError(f"grids differ: {self} vs {other}")

    def laplacian_bands(self) -> np.ndarray:
        """Banded (3, n) form of the radial Laplacian, solve_banded layout.

        Row 0 holds the super-diagonal (shifted right), row 1 the diagonal,
        row 2 the sub-diagonal (shifted left).  The operator is the
        conservative flux form of u'' + (N-1)/r u' with a zero-flux face at
        the origin and an odd-extension ghost enforcing u(rmax) = 0; it is
        self-adjoint under the node quadrature weights.
        """
        if self._lap_bands is None:
            n, h = self.n, self.h
            denom = self.r ** (self.dim - 1) * h * h
            aw = self.face_w
            bands = np.zeros((3, n))
            bands[0, 1:] = aw[1:n] / denom[:-1]          # super-diagonal
            bands[1] = -(aw[1:] + aw[:-1]) / denom       # diagonal
            bands[1, -1] = -(2.0 * aw[n] + aw[n - 1]) / denom[-1]
            bands[2, :-1] = aw[1:n] / denom[1:]          # sub-diagonal
            bands.setflags(write=False)
            self._lap_bands = bands
        return self._lap_bands


class RadialField:
    """Complex radial profile sampled on a RadialGrid.

    Values are frozen at construction; build new fields instead of mutating.
    The Dirichlet convention u(rmax) = 0 is part of the discretization (the
    boundary is a face, not a node), so only interior samples are stored.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n,):
            raise GridMismatchError(
                f"expected {grid.n} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values.copy()
        self.values.setflags(write=False)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable) -> "RadialField":
        return cls(grid, fn(grid.r))

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n))

    def __mul__(self, c) -> "RadialField":
        return RadialField(self.grid, self.values * complex(c))

    __rmul__ = __mul__

    def __add__(self, other: "RadialField") -> "RadialField":
        self.grid.compatible(other.grid)
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        self.grid.compatible(other.grid)
        return RadialField(self.grid, self.values - other.values)

    def is_real(self, tol: float = 0.0) -> bool:
        return np.max(np.abs(self.values.imag)) <= tol

    def real_values(self) -> np.ndarray:
        return self.values.real.copy()


def integrate_radial(samples, grid: RadialGrid):
    """Integral over R^N of a radial integrand sampled at the nodes.

    Midpoint rule with weights omega_N r^(N-1) h; linear in the samples.
    Returns a float for real input, complex otherwise.
    """
    samples = np.asarray(samples)
    if samples.shape != (grid.n,):
        raise GridMismatchError(
            f"expected {grid.n} samples, got shape {samples.shape}")
    total = np.sum(grid.weights * samples)
    if np.iscomplexobj(samples):
        return complex(total)
    return float(total)


def mass(u: RadialField) -> float:
    """Squared L^2 norm of the field."""
    return float(np.sum(u.grid.weights * np.abs(u.values) ** 2))


def variance(u: RadialField) -> float:
    """Squared weighted norm ||x u||_{L^2}^2."""
    g = u.grid
    return float(np.sum(g.weights * g.r ** 2 * np.abs(u.values) ** 2))


def grad_norm_sq(u: RadialField) -> float:
    """Squared L^2 norm of the gradient.

    Staggered (face) differences: this is exactly the quadratic form of the
    discrete Laplacian, so pairing the stationary equation with u closes to
    machine precision.  The boundary face carries the half-cell Dirichlet
    contribution 2|u_{n-1}|^2 / h.
    """
    g = u.grid
    d = np.diff(u.values)
    s = np.sum(g.face_w[1:g.n] * np.abs(d) ** 2) / g.h
    s += g.face_w[g.n] * 2.0 * np.abs(u.values[-1]) ** 2 / g.h
    return float(g.sphere * s)


def sigma_norm_sq(u: RadialField) -> float:
    """Squared Sigma norm ||grad u||^2 + ||x u||^2 (trap-strength free)."""
    return grad_norm_sq(u) + variance(u)


def sigma_inner(u: RadialField, v: RadialField) -> complex:
    """Sesquilinear Sigma inner product <u, v> (conjugate on v)."""
    u.grid.compatible(v.grid)
    g = u.grid
    du = np.diff(u.values)
    dv = np.diff(v.values)
    s = np.sum(g.face_w[1:g.n] * du * np.conj(dv)) / g.h
    s += g.face_w[g.n] * 2.0 * u.values[-1] * np.conj(v.values[-1]) / g.h
    s *= g.sphere
    s += np.sum(g.weights * g.r ** 2 * u.values * np.conj(v.values))
    return complex(s)


def node_derivative(u: RadialField) -> np.ndarray:
    """Radial derivative at the nodes by centered differences.

    Ghost values: even extension through the origin (radial regularity
    u'(0) = 0) and odd extension past rmax (Dirichlet).
    """
    g = u.grid
    vals = u.values
    out = np.empty(g.n, dtype=complex)
    out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * g.h)
    out[0] = (vals[1] - vals[0]) / (2.0 * g.h)
    out[-1] = (-vals[-1] - vals[-2]) / (2.0 * g.h)
    return out


def apply_laplacian(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Apply the conservative radial Laplacian to node samples."""
    bands = grid.laplacian_bands()
    out = bands[1] * values
    out[:-1] += bands[0, 1:] * values[1:]
    out[1:] += bands[2, :-1] * values[:-1]
    return out


def default_grid(params: ModelParams, h: float = 2e-3,
                 rmax: float = 8.0) -> RadialGrid:
    """Default trapped-problem mesh; gamma*rmax^2 >= 40 keeps the Gaussian
    truncation error below the quadrature error."""
    return RadialGrid(h=h, rmax=rmax, dim=params.dim)
