"""Exact binding of boundary and initial conditions.

The trial function is written as A = multiplier * net + addendum. The
multiplier vanishes on the spatial boundary (product of per-dimension
bump factors) and, for evolution problems, at t0 with the right rate
(ramp factor, squared for second-order problems). The addendum carries
the prescribed data, so A satisfies the conditions for any parameters.
"""

from dataclasses import dataclass

import numpy as np

from .expr import (
    Const, TIME_VAR, TrialFn, Var, add, collect_vars, eval_pointwise, mul, power, sub, trial,
)
from .problem import ConfigError
from .sampler import sample_boundary

__all__ = ["AnsatzParts", "CompatibilityError", "build_multiplier", "build_addendum", "build_parts", "wrap"]

_PROBE_COUNT = 256
_PROBE_TOL = 1e-8


class CompatibilityError(ConfigError):
    """Boundary and initial data disagree; exact binding is impossible."""


@dataclass(frozen=True)
class AnsatzParts:
    multiplier: object
    addendum: object
    time_order: int


def build_multiplier(domain, variables, time_order):
    """Bump profile over the box: 4(x-a)(b-x)/(b-a)^2 per spatial dimension,
    times ((t-t0)/(T-t0))^time_order for evolution problems."""
    m = None
    for name, (a, b) in zip(variables.spatial, domain.bounds):
        factor = mul(
            Const(4.0 / (b - a) ** 2),
            mul(sub(Var(name), Const(a)), sub(Const(b), Var(name))),
        )
        m = factor if m is None else mul(m, factor)
    if time_order >= 1:
        t0, t1 = domain.time
        ramp = mul(Const(1.0 / (t1 - t0)), sub(Var(TIME_VAR), Const(t0)))
        if time_order == 2:
            ramp = power(ramp, 2)
        m = mul(m, ramp)
    return m


def _boundary_probes(problem):
    pts = sample_boundary(problem.domain, _PROBE_COUNT, np.random.default_rng(7))
    names = problem.variables.names
    return [dict(zip(names, row)) for row in pts]


def build_addendum(problem):
    """The data-carrying part: g for BVPs, u0 (+ (t-t0)*u0') for evolution.

    Exact binding needs compatible data, so u0 is probed against g on the
    boundary (and u0' against zero for second-order problems); mismatches
    raise CompatibilityError directing the user to soft mode.
    """
    if problem.time_order == 0:
        return problem.boundary
    if TIME_VAR in collect_vars(problem.boundary):
        raise CompatibilityError(
            "pde.boundary_condition",
            "time-dependent boundary values cannot be bound exactly; use soft mode")
    probes = _boundary_probes(problem)
    mismatch = max(
        abs(eval_pointwise(problem.initial, p) - eval_pointwise(problem.boundary, p))
        for p in probes
    )
    if mismatch > _PROBE_TOL:
        raise CompatibilityError(
            "pde.initial_condition",
            f"initial and boundary conditions disagree on the spatial boundary "
            f"(max |u0 - g| = {mismatch:.3e}); use soft mode")
    if problem.time_order == 1:
        return problem.initial
    rate_residual = max(abs(eval_pointwise(problem.initial_rate, p)) for p in probes)
    if rate_residual > _PROBE_TOL:
        raise CompatibilityError(
            "pde.initial_rate",
            f"the initial rate must vanish on the spatial boundary "
            f"(max |u0'| = {rate_residual:.3e}); use soft mode")
    t0 = problem.domain.time[0]
    return add(problem.initial, mul(sub(Var(TIME_VAR), Const(t0)), problem.initial_rate))


def build_parts(problem):
    return AnsatzParts(
        multiplier=build_multiplier(problem.domain, problem.variables, problem.time_order),
        addendum=build_addendum(problem),
        time_order=problem.time_order,
    )


def wrap(parts, net=None):
    """The bound trial expression: multiplier * net + addendum."""
    if net is None:
        net = trial()
    return add(mul(parts.multiplier, net), parts.addendum)
