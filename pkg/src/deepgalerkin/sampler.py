"""Sampler algebra for collocation points.

Base samplers (uniform, truncated gaussian, exponential) emit points in
the unit cube; Product concatenates dimensions, Mixture draws components
by weight, and AffineMap rescales into the problem domain. BoundaryFace
and InitialSlice sample the domain's spatial boundary and the t = t0
slice. Everything is driven by a single numpy Generator, so a fixed seed
fixes the point stream.
"""

from dataclasses import dataclass

import numpy as np

from .problem import ConfigError, Domain

__all__ = [
    "SamplingError", "Uniform", "TruncatedGaussian", "Exponential", "Mixture",
    "Product", "AffineMap", "BoundaryFace", "InitialSlice",
    "dim", "sample", "sample_boundary", "sample_initial", "scaled_to", "sampler_from_config",
]

_REJECTION_CAP = 1_000_000
_WEIGHT_TOL = 1e-12


class SamplingError(RuntimeError):
    """Sampling could not produce the requested points."""


@dataclass(frozen=True)
class Uniform:
    dim: int = 1


@dataclass(frozen=True)
class TruncatedGaussian:
    mean: tuple
    sd: tuple
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mean", _per_dim(self.mean, self.dim))
        object.__setattr__(self, "sd", _per_dim(self.sd, self.dim))
        if any(s <= 0 for s in self.sd):
            raise ValueError("sd must be positive")


@dataclass(frozen=True)
class Exponential:
    rate: float
    dim: int = 1

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class Mixture:
    components: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.components) < 1 or len(self.components) != len(self.weights):
            raise ValueError("mixture needs matching components and weights")
        if any(w < 0 for w in self.weights):
            raise ValueError("mixture weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {sum(self.weights)!r}, expected 1")
        dims = {dim(c) for c in self.components}
        if len(dims) != 1:
            raise ValueError("mixture components must share one dimension")


@dataclass(frozen=True)
class Product:
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("product needs at least one component")


@dataclass(frozen=True)
class AffineMap:
    child: object
    scale: tuple
    shift: tuple

    def __post_init__(self):
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))
        if len(self.scale) != dim(self.child) or len(self.shift) != dim(self.child):
            raise ValueError("scale/shift length must match the child dimension")


@dataclass(frozen=True)
class BoundaryFace:
    domain: Domain


@dataclass(frozen=True)
class InitialSlice:
    domain: Domain

    def __post_init__(self):
        if self.domain.time is None:
            raise ValueError("initial slice needs a domain with a time interval")


def _per_dim(value, d):
    values = tuple(float(v) for v in value) if np.ndim(value) else (float(value),) * d
    if len(values) != d:
        raise ValueError(f"expected {d} per-dimension values, got {len(values)}")
    return values


def dim(spec):
    """Dimensionality of the points a sampler emits."""
    if isinstance(spec, (Uniform, TruncatedGaussian, Exponential)):
        return spec.dim
    if isinstance(spec, Mixture):
        return dim(spec.components[0])
    if isinstance(spec, Product):
        return sum(dim(c) for c in spec.components)
    if isinstance(spec, AffineMap):
        return dim(spec.child)
    if isinstance(spec, (BoundaryFace, InitialSlice)):
        return spec.domain.total_dim
    raise TypeError(f"not a sampler spec: {spec!r}")


def _rejection(draw, n, d):
    """Redraw until every point lands in [0,1]^d, capped per point."""
    out = np.empty((n, d))
    unfilled = np.arange(n)
    for _ in range(_REJECTION_CAP):
        candidates = draw(len(unfilled))
        ok = np.all((candidates >= 0.0) & (candidates <= 1.0), axis=1)
        out[unfilled[ok]] = candidates[ok]
        unfilled = unfilled[~ok]
        if unfilled.size == 0:
            return out
    raise SamplingError(f"rejection sampling exceeded {_REJECTION_CAP} attempts per point")


def sample(spec, n, rng):
    """Draw n points from a sampler spec; (n, dim) float64 array."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    if isinstance(spec, Uniform):
        return rng.random((n, spec.dim))
    if isinstance(spec, TruncatedGaussian):
        mean, sd = np.asarray(spec.mean), np.asarray(spec.sd)
        return _rejection(lambda k: rng.normal(mean, sd, (k, spec.dim)), n, spec.dim)
    if isinstance(spec, Exponential):
        return _rejection(lambda k: rng.exponential(1.0 / spec.rate, (k, spec.dim)), n, spec.dim)
    if isinstance(spec, Mixture):
        chosen = rng.choice(len(spec.components), size=n, p=spec.weights)
        out = np.empty((n, dim(spec)))
        for i, component in enumerate(spec.components):
            mask = chosen == i
            if mask.any():
                out[mask] = sample(component, int(mask.sum()), rng)
        return out
    if isinstance(spec, Product):
        return np.hstack([sample(c, n, rng) for c in spec.components])
    if isinstance(spec, AffineMap):
        return sample(spec.child, n, rng) * np.asarray(spec.scale) + np.asarray(spec.shift)
    if isinstance(spec, BoundaryFace):
        return sample_boundary(spec.domain, n, rng)
    if isinstance(spec, InitialSlice):
        return sample_initial(spec.domain, n, rng)
    raise TypeError(f"not a sampler spec: {spec!r}")


def sample_boundary(domain, n, rng):
    """Uniform points on the spatial boundary, faces weighted by measure.

    Each point has exactly one spatial coordinate pinned to its bound;
    for evolution domains a uniform time coordinate is appended.
    """
    n = int(n)
    bounds = np.asarray(domain.bounds)
    d = len(bounds)
    lengths = bounds[:, 1] - bounds[:, 0]
    face_measure = np.prod(lengths) / lengths  # opposite faces share a measure
    probs = np.repeat(face_measure, 2)
    probs = probs / probs.sum()
    face = rng.choice(2 * d, size=n, p=probs)
    pts = bounds[:, 0] + rng.random((n, d)) * lengths
    pinned_dim = face // 2
    pts[np.arange(n), pinned_dim] = np.where(face % 2 == 0, bounds[pinned_dim, 0], bounds[pinned_dim, 1])
    if domain.time is not None:
        t0, t1 = domain.time
        pts = np.column_stack([pts, t0 + rng.random(n) * (t1 - t0)])
    return pts


def sample_initial(domain, n, rng):
    """Uniform spatial points on the t = t0 slice (t set exactly)."""
    if domain.time is None:
        raise SamplingError("the problem has no time variable")
    n = int(n)
    bounds = np.asarray(domain.bounds)
    pts = bounds[:, 0] + rng.random((n, len(bounds))) * (bounds[:, 1] - bounds[:, 0])
    return np.column_stack([pts, np.full(n, domain.time[0])])


def scaled_to(child, domain):
    """Affine wrapper taking unit-cube output onto the domain box."""
    bounds = domain.all_bounds
    if dim(child) != len(bounds):
        raise ValueError(f"sampler dimension {dim(child)} does not match the domain ({len(bounds)})")
    return AffineMap(child, scale=tuple(b - a for a, b in bounds), shift=tuple(a for a, _ in bounds))


def sampler_from_config(cfg, key="sampler"):
    """Build a sampler tree from its config block (unit-cube coordinates)."""
    if not isinstance(cfg, dict):
        raise ConfigError(key, "must be an object")
    kind = cfg.get("kind")
    try:
        if kind == "uniform":
            _check_keys(cfg, {"kind", "dim"}, key)
            return Uniform(dim=_positive_int(cfg.get("dim", 1), f"{key}.dim"))
        if kind == "truncated_gaussian":
            _check_keys(cfg, {"kind", "dim", "mean", "sd"}, key)
            d = _positive_int(cfg.get("dim", 1), f"{key}.dim")
            return TruncatedGaussian(mean=cfg.get("mean", 0.5), sd=cfg.get("sd", 0.25), dim=d)
        if kind == "exponential":
            _check_keys(cfg, {"kind", "dim", "rate"}, key)
            d = _positive_int(cfg.get("dim", 1), f"{key}.dim")
            return Exponential(rate=float(cfg.get("rate", 1.0)), dim=d)
        if kind == "mixture":
            _check_keys(cfg, {"kind", "components", "weights"}, key)
            components = tuple(
                sampler_from_config(c, f"{key}.components[{i}]")
                for i, c in enumerate(cfg.get("components", ()))
            )
            return Mixture(components=components, weights=tuple(cfg.get("weights", ())))
        if kind == "product":
            _check_keys(cfg, {"kind", "components"}, key)
            components = tuple(
                sampler_from_config(c, f"{key}.components[{i}]")
                for i, c in enumerate(cfg.get("components", ()))
            )
            return Product(components=components)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(key, str(err)) from None
    raise ConfigError(f"{key}.kind", f"unknown sampler kind {kind!r}")


def _check_keys(cfg, allowed, key):
    for k in cfg:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}", "unknown key")


def _positive_int(value, key):
    if not isinstance(value, int) or value < 1:
        raise ConfigError(key, "must be a positive integer")
    return value
