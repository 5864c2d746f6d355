"""Problem data model: rectangular domain, parsed PDE and its side conditions."""

from dataclasses import dataclass

import numpy as np

from .expr import (
    Const, EvalError, OrderLimitError, ParseError, TIME_VAR, VarList,
    collect_tags, collect_vars, parse,
)

__all__ = ["ConfigError", "Domain", "PdeProblem", "build_problem", "spatial_names"]


class ConfigError(ValueError):
    """Invalid configuration; `key` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box: spatial bounds plus an optional time interval."""

    bounds: tuple  # ((a_1, b_1), ..., (a_d, b_d))
    time: tuple | None = None  # (t0, T)

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        if not self.bounds:
            raise ValueError("domain needs at least one spatial dimension")
        for a, b in self.bounds:
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise ValueError(f"invalid spatial bounds ({a}, {b})")
        if self.time is not None:
            t0, t1 = float(self.time[0]), float(self.time[1])
            if not (np.isfinite(t0) and np.isfinite(t1) and t0 < t1):
                raise ValueError(f"invalid time interval ({t0}, {t1})")
            object.__setattr__(self, "time", (t0, t1))

    @property
    def spatial_dim(self):
        return len(self.bounds)

    @property
    def total_dim(self):
        return len(self.bounds) + (1 if self.time is not None else 0)

    @property
    def all_bounds(self):
        """Per-input-variable bounds, time last when present."""
        return self.bounds + ((self.time,) if self.time is not None else ())


def spatial_names(k):
    if k <= 3:
        return ("x", "y", "z")[:k]
    return tuple(f"x{i + 1}" for i in range(k))


@dataclass
class PdeProblem:
    """A PDE residual form over a box, with boundary/initial data.

    `variables` orders the network inputs (spatial names, then `t` for
    evolution problems); `time_order` is the highest time-derivative
    order appearing in `form` (0 for a pure boundary-value problem).
    """

    variables: VarList
    form: object
    domain: Domain
    boundary: object            # g, defined on the whole domain
    initial: object = None      # u0
    initial_rate: object = None
    time_order: int = 0

    @property
    def is_evolution(self):
        return self.variables.has_time

    def var_bounds(self):
        return self.domain.all_bounds


def _parse_field(cfg, key, variables, default=None):
    raw = cfg.get(key, default)
    if raw is None:
        return None
    try:
        return parse(str(raw), variables)
    except (ParseError, OrderLimitError) as err:
        raise ConfigError(f"pde.{key}", str(err)) from None


def build_problem(pde_cfg):
    """Build a validated PdeProblem from the `pde` config block."""
    if not isinstance(pde_cfg, dict):
        raise ConfigError("pde", "must be an object")
    known = {"n_dims", "form", "domain", "boundary_condition", "initial_condition", "initial_rate"}
    for key in pde_cfg:
        if key not in known:
            raise ConfigError(f"pde.{key}", "unknown key")

    n_dims = pde_cfg.get("n_dims")
    if not isinstance(n_dims, int) or n_dims < 1:
        raise ConfigError("pde.n_dims", "must be a positive integer")
    form_src = pde_cfg.get("form")
    if not isinstance(form_src, str) or not form_src.strip():
        raise ConfigError("pde.form", "required (a non-empty string)")

    # Parse against the widest vocabulary, then settle whether `t` makes
    # this an evolution problem (in which case it counts toward n_dims).
    vocabulary = VarList(spatial_names(n_dims) + (TIME_VAR,))
    try:
        form = parse(form_src, vocabulary)
    except (ParseError, OrderLimitError) as err:
        raise ConfigError("pde.form", str(err)) from None

    used = collect_vars(form)
    evolution = TIME_VAR in used
    names = spatial_names(n_dims - 1) + (TIME_VAR,) if evolution else spatial_names(n_dims)
    extra = used - set(names)
    if extra:
        raise ConfigError(
            "pde.form",
            f"variable '{sorted(extra)[0]}' does not fit n_dims={n_dims}"
            + (" with a time variable" if evolution else ""),
        )
    variables = VarList(names)

    time_order = max((sum(1 for v in tag if v == TIME_VAR) for tag in collect_tags(form)), default=0)
    if evolution and time_order == 0:
        raise ConfigError("pde.form", "'t' appears but the form has no time derivative D(., t)")

    raw_domain = pde_cfg.get("domain", [[0.0, 1.0]] * n_dims)
    if not isinstance(raw_domain, (list, tuple)) or len(raw_domain) != n_dims:
        raise ConfigError("pde.domain", f"expected {n_dims} [low, high] pairs")
    try:
        pairs = [(float(lo), float(hi)) for lo, hi in raw_domain]
        if evolution:
            domain = Domain(tuple(pairs[:-1]), time=pairs[-1])
        else:
            domain = Domain(tuple(pairs))
    except (TypeError, ValueError) as err:
        raise ConfigError("pde.domain", str(err)) from None

    if evolution and n_dims < 2:
        raise ConfigError("pde.n_dims", "a time-dependent problem needs at least one spatial dimension")

    boundary_vars = variables if evolution else VarList(variables.spatial)
    boundary = _parse_field(pde_cfg, "boundary_condition", boundary_vars, default=0)
    spatial_vars = VarList(variables.spatial)
    initial = _parse_field(pde_cfg, "initial_condition", spatial_vars)
    initial_rate = _parse_field(pde_cfg, "initial_rate", spatial_vars)

    if evolution and initial is None:
        raise ConfigError("pde.initial_condition", "required for a time-dependent problem")
    if not evolution and initial is not None:
        raise ConfigError("pde.initial_condition", "only meaningful for a time-dependent problem")
    if time_order == 2 and initial_rate is None:
        raise ConfigError("pde.initial_rate", "required when the form has a second time derivative")
    if time_order < 2 and initial_rate is not None:
        raise ConfigError("pde.initial_rate", "only meaningful with a second time derivative")

    return PdeProblem(
        variables=variables,
        form=form,
        domain=domain,
        boundary=boundary if boundary is not None else Const(0.0),
        initial=initial,
        initial_rate=initial_rate,
        time_order=time_order,
    )
