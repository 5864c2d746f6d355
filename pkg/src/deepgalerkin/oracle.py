"""Finite-difference reference solvers for the two supported 2-d shapes.

Both discretise the Laplacian with the 5-point stencil on a uniform
grid (second-order accurate). The stationary solver handles
laplace(u) = q with Dirichlet data; the evolution solver handles
u_t = laplace(u) + q(x, y) with zero Dirichlet walls via Crank-Nicolson
steps, also second order. Grids include the boundary nodes.
"""

from typing import NamedTuple

import numpy as np
from scipy.sparse import identity, kron, diags
from scipy.sparse.linalg import splu, spsolve

from .expr import eval_pointwise

__all__ = ["GridError", "grid_axes", "solve_poisson_fd", "solve_heat_fd", "grid_error", "subsample"]

_MIN_GRID = 9


class GridError(NamedTuple):
    linf: float
    rms: float


def grid_axes(domain, grid_n):
    return [np.linspace(a, b, grid_n) for a, b in domain.bounds]


def _eval_grid(e, xs, ys, t=None):
    out = np.empty((xs.size, ys.size))
    point = {} if t is None else {"t": t}
    for i, x in enumerate(xs):
        point["x"] = x
        for j, y in enumerate(ys):
            point["y"] = y
            out[i, j] = eval_pointwise(e, point)
    return out


def _laplacian(m, hx, hy):
    main = np.full(m, -2.0)
    off = np.ones(m - 1)
    dxx = diags([off, main, off], (-1, 0, 1)) / hx ** 2
    dyy = diags([off, main, off], (-1, 0, 1)) / hy ** 2
    eye = identity(m)
    return kron(dxx, eye) + kron(eye, dyy)  # flattening: k = ix * m + iy


def solve_poisson_fd(q, g, domain, grid_n):
    """Solve laplace(u) = q, u = g on the boundary; (grid_n, grid_n) values."""
    if len(domain.bounds) != 2 or domain.time is not None:
        raise ValueError("the stationary oracle needs a 2-d spatial domain")
    if grid_n < _MIN_GRID:
        raise ValueError(f"grid_n must be at least {_MIN_GRID}")
    xs, ys = grid_axes(domain, grid_n)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    m = grid_n - 2

    u = _eval_grid(g, xs, ys)  # interior values are overwritten below
    rhs = _eval_grid(q, xs[1:-1], ys[1:-1])
    rhs[0, :] -= u[0, 1:-1] / hx ** 2
    rhs[-1, :] -= u[-1, 1:-1] / hx ** 2
    rhs[:, 0] -= u[1:-1, 0] / hy ** 2
    rhs[:, -1] -= u[1:-1, -1] / hy ** 2

    interior = spsolve(_laplacian(m, hx, hy).tocsc(), rhs.ravel())
    u[1:-1, 1:-1] = interior.reshape(m, m)
    return u


def solve_heat_fd(q, u0, domain, grid_n, time_steps):
    """Crank-Nicolson for u_t = laplace(u) + q(x, y), zero Dirichlet walls.

    Returns the full space-time grid, shape (time_steps + 1, grid_n, grid_n);
    slice 0 is u0 evaluated on the grid.
    """
    if len(domain.bounds) != 2 or domain.time is None:
        raise ValueError("the evolution oracle needs a 2-d spatial domain with a time interval")
    if grid_n < _MIN_GRID or time_steps < 1:
        raise ValueError(f"need grid_n >= {_MIN_GRID} and time_steps >= 1")
    xs, ys = grid_axes(domain, grid_n)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    t0, t1 = domain.time
    dt = (t1 - t0) / time_steps
    m = grid_n - 2

    lap = _laplacian(m, hx, hy)
    eye = identity(m * m, format="csc")
    stepper = splu((eye - 0.5 * dt * lap).tocsc())
    explicit = (eye + 0.5 * dt * lap).tocsr()
    source = dt * _eval_grid(q, xs[1:-1], ys[1:-1], t=t0).ravel()

    out = np.zeros((time_steps + 1, grid_n, grid_n))
    out[0] = _eval_grid(u0, xs, ys)
    state = out[0, 1:-1, 1:-1].ravel().copy()
    for k in range(1, time_steps + 1):
        state = stepper.solve(explicit @ state + source)
        out[k, 1:-1, 1:-1] = state.reshape(m, m)
    return out


def grid_error(values, reference):
    """L-infinity and RMS differences between two same-shape grids."""
    a = np.asarray(values, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return GridError(float(np.max(np.abs(diff))), float(np.sqrt(np.mean(diff * diff))))


def subsample(grid, target_n):
    """Restrict a fine grid to a coarse one with aligned nodes."""
    grid = np.asarray(grid)
    step, rem = divmod(grid.shape[-1] - 1, target_n - 1)
    if rem != 0:
        raise ValueError(f"grid of {grid.shape[-1]} nodes does not contain {target_n} aligned nodes")
    slicer = (Ellipsis,) + (slice(None, None, step),) * 2
    return grid[slicer]
