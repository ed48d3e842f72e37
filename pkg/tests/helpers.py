"""Shared verification helpers: independent residual oracles."""

import numpy as np

from gpelab.core import apply_laplacian


def gp_residual_l2(field_at, t, params, grid, free=False, coupling=1.0,
                   dt=1e-6, window=(0.05, 7.9)):
    """Weighted L2 residual of the time-dependent equation for a closed-form
    family, with the time derivative by centered differences of the family.

    field_at(t) must return a RadialField on `grid`.  The window (fixed
    across refinements) drops the b-singular origin cells, where the
    three-point stencil cannot be second order, and the truncation wall
    cell, where the Dirichlet ghost disagrees with a non-vanishing closed
    form.
    """
    up = field_at(t + dt).values
    um = field_at(t - dt).values
    u = field_at(t).values
    dudt = (up - um) / (2.0 * dt)
    lap = apply_laplacian(u, grid)
    res = 1j * dudt + lap
    if not free:
        res = res - params.gamma ** 2 * grid.r ** 2 * u
    res = res + coupling * grid.r ** (-params.b) * np.abs(u) ** (params.p - 1.0) * u
    mask = (grid.r >= window[0]) & (grid.r <= window[1])
    return float(np.sqrt(np.sum((grid.weights * np.abs(res) ** 2)[mask])))


def rel_err(x, ref):
    return abs(x - ref) / abs(ref)
