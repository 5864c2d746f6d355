"""Dense networks built from layout strings, with exact input derivatives.

A layout reads left to right: 'f' is a dense layer (consumes the next
entry of `units`), 'a' an activation (consumes the next entry of
`activations`), 'R' saves the current tensor and '+' adds it back
(one residual connection open at a time; widths must match). Spaces
are cosmetic.

Input derivatives are propagated as jets: for every multi-index in the
downward closure of the request, each layer maps the incoming derivative
values exactly. Dense layers act linearly; activations combine lower
jets through the chain rule for orders 1..3. The propagation is written
on autodiff Tensors, so parameter gradients flow through derivative
evaluations unchanged.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "ACTIVATIONS", "NetworkSpec", "LayoutError", "CheckpointError", "DerivativeOrderError",
    "parse_layout", "n_params", "init_params", "unpack_params", "forward",
    "forward_jets", "input_derivatives", "tag_closure", "save_checkpoint", "load_checkpoint",
]

ACTIVATIONS = ("tanh", "sigmoid", "relu", "sin")
_MAGIC = "GFDG1"


class LayoutError(ValueError):
    """Malformed layout string or mismatched units/activations."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


class DerivativeOrderError(ValueError):
    """Requested input-derivative tag outside the supported orders."""


@dataclass(frozen=True)
class NetworkSpec:
    layout: str
    units: tuple
    activations: tuple
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(int(u) for u in self.units))
        object.__setattr__(self, "activations", tuple(str(a) for a in self.activations))
        if not isinstance(self.input_dim, int) or self.input_dim < 1:
            raise LayoutError("input_dim must be a positive integer")
        if any(u < 1 for u in self.units):
            raise LayoutError("units must be positive integers")
        parse_layout(self)  # validates the layout eagerly


@dataclass(frozen=True)
class LayerPlan:
    steps: tuple   # ('dense', i) | ('act', name) | ('save',) | ('add',)
    shapes: tuple  # (fan_in, fan_out) per dense layer
    n_params: int


def parse_layout(spec):
    """Expand a NetworkSpec into an executable layer plan."""
    width = spec.input_dim
    steps, shapes = [], []
    saved_width = None
    fi = ai = 0
    for ch in spec.layout:
        if ch == " ":
            continue
        if ch == "f":
            if fi >= len(spec.units):
                raise LayoutError(f"layout has more 'f' layers than units ({len(spec.units)})")
            shapes.append((width, spec.units[fi]))
            steps.append(("dense", fi))
            width = spec.units[fi]
            fi += 1
        elif ch == "a":
            if ai >= len(spec.activations):
                raise LayoutError(f"layout has more 'a' slots than activations ({len(spec.activations)})")
            name = spec.activations[ai]
            if name not in ACTIVATIONS:
                raise LayoutError(f"unknown activation '{name}' (choose from {', '.join(ACTIVATIONS)})")
            steps.append(("act", name))
            ai += 1
        elif ch == "R":
            if saved_width is not None:
                raise LayoutError("layout nests residual connections ('R' while one is open)")
            saved_width = width
            steps.append(("save",))
        elif ch == "+":
            if saved_width is None:
                raise LayoutError("layout has '+' without a preceding 'R'")
            if width != saved_width:
                raise LayoutError(f"layout joins residual width {saved_width} with width {width}")
            steps.append(("add",))
            saved_width = None
        else:
            raise LayoutError(f"unknown layout symbol '{ch}'")
    if saved_width is not None:
        raise LayoutError("layout has 'R' without a matching '+'")
    if fi != len(spec.units):
        raise LayoutError(f"layout has {fi} 'f' layers but {len(spec.units)} units")
    if ai != len(spec.activations):
        raise LayoutError(f"layout has {ai} 'a' slots but {len(spec.activations)} activations")
    if not shapes:
        raise LayoutError("layout contains no dense layer")
    return LayerPlan(tuple(steps), tuple(shapes), sum(i * o + o for i, o in shapes))


def n_params(spec):
    return parse_layout(spec).n_params


def init_params(spec, seed):
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in parse_layout(spec).shapes:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unpack_params(spec, theta):
    """Split a flat parameter vector into per-layer (W, b) views."""
    theta = np.asarray(theta, dtype=np.float64)
    plan = parse_layout(spec)
    if theta.shape != (plan.n_params,):
        raise ValueError(f"expected {plan.n_params} parameters, got {theta.shape}")
    out = []
    offset = 0
    for fan_in, fan_out in plan.shapes:
        w = theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta[offset:offset + fan_out]
        offset += fan_out
        out.append((w, b))
    return out


_ACT_NP = {
    "tanh": np.tanh,
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    "relu": lambda z: np.maximum(z, 0.0),
    "sin": np.sin,
}


def forward(spec, theta, points):
    """Plain forward pass; returns a (batch, out_width) float64 array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != spec.input_dim:
        raise ValueError(f"points must have shape (batch, {spec.input_dim})")
    params = unpack_params(spec, theta)
    plan = parse_layout(spec)
    h = pts
    saved = None
    for step in plan.steps:
        if step[0] == "dense":
            w, b = params[step[1]]
            h = h @ w + b
        elif step[0] == "act":
            h = _ACT_NP[step[1]](h)
        elif step[0] == "save":
            saved = h
        else:
            h = h + saved
    return h


# -- jet propagation ----------------------------------------------------------

def tag_closure(tags, input_dim):
    """Downward closure of derivative tags, sorted by total order."""
    closed = {()}
    for tag in tags:
        tag = tuple(sorted(tag))
        if len(tag) > 3:
            raise DerivativeOrderError(f"derivative order {len(tag)} exceeds the supported maximum of 3")
        if any(not 0 <= i < input_dim for i in tag):
            raise DerivativeOrderError(f"derivative tag {tag} references an input beyond dim {input_dim}")
        for r in range(len(tag) + 1):
            closed.update(itertools.combinations(tag, r))
    return sorted(closed, key=lambda t: (len(t), t))


@lru_cache(maxsize=None)
def _set_partitions(items):
    """Set partitions of the positions of `items`, as sorted block tags."""
    if not items:
        return ((),)
    first, rest = items[0], items[1:]
    result = []
    for part in _set_partitions(rest):
        for i in range(len(part)):
            grown = tuple(sorted(part[i] + (first,)))
            result.append(part[:i] + (grown,) + part[i + 1:])
        result.append(part + ((first,),))
    return tuple(result)


def _tanh_sigma(z, order):
    s = ad.tanh(z)
    out = [s]
    if order >= 1:
        p = 1.0 - s * s
        out.append(p)
    if order >= 2:
        out.append(-2.0 * s * p)
    if order >= 3:
        out.append(-2.0 * p * (p - 2.0 * s * s))
    return out


def _sigmoid_sigma(z, order):
    s = ad.sigmoid(z)
    out = [s]
    if order >= 1:
        p = s * (1.0 - s)
        out.append(p)
    if order >= 2:
        out.append(p * (1.0 - 2.0 * s))
    if order >= 3:
        out.append(p * (1.0 - 6.0 * s + 6.0 * s * s))
    return out


def _sin_sigma(z, order):
    s = ad.sin(z)
    out = [s]
    if order >= 1:
        c = ad.cos(z)
        out.append(c)
    if order >= 2:
        out.append(-s)
    if order >= 3:
        out.append(-c)
    return out


def _relu_sigma(z, order):
    # Derivatives hold almost everywhere; second order and up vanish, so
    # relu is rejected upstream for forms that need them.
    out = [ad.relu(z)]
    if order >= 1:
        out.append(Tensor((z.data > 0.0).astype(np.float64)))
    for _ in range(max(0, order - 1)):
        out.append(Tensor(np.zeros_like(z.data)))
    return out


_ACT_SIGMA = {"tanh": _tanh_sigma, "sigmoid": _sigmoid_sigma, "sin": _sin_sigma, "relu": _relu_sigma}


def _activation_jets(name, jets, closed):
    max_order = max(len(t) for t in closed)
    sigma = _ACT_SIGMA[name](jets[()], max_order)
    out = {(): sigma[0]}
    for tag in closed:
        if tag == ():
            continue
        total = None
        for blocks in _set_partitions(tag):
            term = sigma[len(blocks)]
            for block in blocks:
                term = term * jets[block]
            total = term if total is None else total + term
        out[tag] = total
    return out


def forward_jets(spec, params, points, tags):
    """Network value and exact input derivatives for every requested tag.

    `params` is a per-dense-layer list of (W, b) Tensors; `tags` are
    multi-indices over input positions (sorted tuples, total order <= 3).
    Returns {tag: Tensor of shape (batch, out_width)} covering the full
    downward closure of the request.
    """
    plan = parse_layout(spec)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != spec.input_dim:
        raise ValueError(f"points must have shape (batch, {spec.input_dim})")
    closed = tag_closure(tags, spec.input_dim)
    batch = pts.shape[0]

    jets = {(): Tensor(pts)}
    for tag in closed:
        if tag == ():
            continue
        seed = np.zeros((batch, spec.input_dim))
        if len(tag) == 1:
            seed[:, tag[0]] = 1.0
        jets[tag] = Tensor(seed)

    saved = None
    for step in plan.steps:
        if step[0] == "dense":
            w, b = params[step[1]]
            jets = {tag: (z @ w + b if tag == () else z @ w) for tag, z in jets.items()}
        elif step[0] == "act":
            jets = _activation_jets(step[1], jets, closed)
        elif step[0] == "save":
            saved = jets
        else:
            jets = {tag: jets[tag] + saved[tag] for tag in jets}
            saved = None
    return jets


def input_derivatives(spec, theta, points, tags):
    """Exact derivatives of the network output w.r.t. its inputs.

    Returns {tag: array}, shaped (batch,) for single-output networks and
    (batch, out_width) otherwise.
    """
    params = [(Tensor(w), Tensor(b)) for w, b in unpack_params(spec, theta)]
    tags = [tuple(sorted(tag)) for tag in tags]
    jets = forward_jets(spec, params, points, tags)
    out = {}
    for tag in tags:
        data = jets[tag].data
        out[tag] = data[:, 0] if data.shape[1] == 1 else data
    return out


# -- checkpoint io -------------------------------------------------------------

def save_checkpoint(spec, theta, path):
    """One ASCII header line, then the flat parameters as little-endian float64."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (n_params(spec),):
        raise ValueError(f"expected {n_params(spec)} parameters, got {theta.shape}")
    header = (
        f"{_MAGIC} {spec.input_dim} {spec.layout} "
        f"{','.join(str(u) for u in spec.units)} {','.join(spec.activations)}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(theta.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace")
        blob = fh.read()
    fields = header.rstrip("\n").split(" ")
    if len(fields) < 5 or fields[0] != _MAGIC:
        raise CheckpointError(f"not a {_MAGIC} checkpoint")
    try:
        spec = NetworkSpec(
            layout=" ".join(fields[2:-2]),
            units=tuple(int(u) for u in fields[-2].split(",")),
            activations=tuple(a for a in fields[-1].split(",") if a),
            input_dim=int(fields[1]),
        )
    except (ValueError, LayoutError) as err:
        raise CheckpointError(f"bad checkpoint header: {err}") from None
    theta = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if theta.shape != (n_params(spec),):
        raise CheckpointError(f"checkpoint holds {theta.size} parameters, layout needs {n_params(spec)}")
    return spec, theta
