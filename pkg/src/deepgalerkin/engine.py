"""Residual programs: batched loss evaluation and parameter gradients.

A ResidualProgram pairs a residual expression (TrialFn leaves refer to
the network and its input derivatives) with the variable ordering and
the network spec. Losses are means of squared residuals over the batch;
gradients come from one reverse-mode sweep through both the expression
evaluation and the jet propagation, rebuilt at every call.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .expr import (
    Binary, Const, EvalError, TrialFn, Unary, Var, collect_tags, collect_vars, intern_expr,
)
from .network import forward_jets, n_params, unpack_params
from .problem import ConfigError

__all__ = ["ResidualProgram", "LossReport", "loss_and_grad", "soft_loss_and_grad", "evaluate_expr"]


@dataclass
class LossReport:
    loss: float
    terms: dict
    grad: np.ndarray


@dataclass
class ResidualProgram:
    expr: object
    variables: object  # VarList
    net: object        # NetworkSpec
    name_tags: tuple = field(init=False)
    index_tags: dict = field(init=False)

    def __post_init__(self):
        self.expr = intern_expr(self.expr)
        if self.net.input_dim != len(self.variables):
            raise ConfigError("body", f"network input_dim {self.net.input_dim} does not match "
                                      f"the {len(self.variables)} problem variables")
        if self.net.units[-1] != 1:
            raise ConfigError("body.units", "last layer width must be 1 for a scalar PDE")
        unknown = collect_vars(self.expr) - set(self.variables.names)
        if unknown:
            raise ConfigError("pde.form", f"expression uses undeclared variable '{sorted(unknown)[0]}'")
        self.name_tags = tuple(sorted(collect_tags(self.expr)))
        index = {name: i for i, name in enumerate(self.variables.names)}
        self.index_tags = {tag: tuple(sorted(index[v] for v in tag)) for tag in self.name_tags}
        max_order = max((len(t) for t in self.name_tags), default=0)
        if max_order >= 2 and "relu" in self.net.activations:
            raise ConfigError("body.activations",
                              "relu cannot supply the second-order input derivatives this form "
                              "needs; use tanh, sigmoid or sin")


def evaluate_expr(e, env, trial_values):
    """Evaluate an Expr over a batch of Tensors; shared subtrees evaluate once."""
    cache = {}

    def rec(node):
        key = id(node)
        if key in cache:
            return cache[key]
        if isinstance(node, Const):
            value = Tensor(node.value)
        elif isinstance(node, Var):
            value = env[node.name]
        elif isinstance(node, TrialFn):
            value = trial_values[node.tag]
        elif isinstance(node, Unary):
            child = rec(node.child)
            if node.op == "neg":
                value = -child
            elif node.op == "sin":
                value = ad.sin(child)
            elif node.op == "cos":
                value = ad.cos(child)
            elif node.op == "exp":
                value = ad.exp(child)
            elif node.op == "log":
                value = ad.log(child)
            else:
                value = ad.sqrt(child)
        elif node.op == "pow":
            value = rec(node.left) ** int(node.right.value)
        else:
            left, right = rec(node.left), rec(node.right)
            if node.op == "+":
                value = left + right
            elif node.op == "-":
                value = left - right
            elif node.op == "*":
                value = left * right
            else:
                value = left / right
        cache[key] = value
        return value

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return rec(e)


def make_param_tensors(spec, theta, requires_grad=True):
    return [(Tensor(w, requires_grad), Tensor(b, requires_grad)) for w, b in unpack_params(spec, theta)]


def flatten_grads(spec, params):
    chunks = []
    for w, b in params:
        chunks.append((w.grad if w.grad is not None else np.zeros(w.data.shape)).ravel())
        chunks.append(b.grad if b.grad is not None else np.zeros(b.data.shape))
    return np.concatenate(chunks)


def _check_finite(values, label):
    bad = ~np.isfinite(values)
    if bad.any():
        raise EvalError(f"non-finite {label} at point index {int(np.flatnonzero(bad)[0])}")


def _residual_tensor(prog, params, batch):
    pts = np.asarray(batch, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != len(prog.variables):
        raise ValueError(f"batch must have shape (n, {len(prog.variables)})")
    env = {name: Tensor(pts[:, i]) for i, name in enumerate(prog.variables.names)}
    trial_values = {}
    if prog.name_tags:
        jets = forward_jets(prog.net, params, pts, set(prog.index_tags.values()))
        for name_tag, index_tag in prog.index_tags.items():
            trial_values[name_tag] = jets[index_tag].reshape((pts.shape[0],))
    return evaluate_expr(prog.expr, env, trial_values)


def loss_and_grad(prog, theta, batch):
    """Mean squared residual over the batch, and its gradient in theta."""
    params = make_param_tensors(prog.net, theta)
    residual = _residual_tensor(prog, params, batch)
    _check_finite(residual.data, "residual")
    loss = (residual * residual).mean()
    loss.backward()
    value = float(loss.data)
    return LossReport(value, {"residual": value}, flatten_grads(prog.net, params))


def soft_loss_and_grad(progs, theta, batches, weights=(1.0, 1.0, 1.0)):
    """Weighted interior/boundary/initial penalty loss and its gradient.

    Inactive terms (program or batch missing) contribute zero; the
    reported breakdown holds the unweighted per-term values.
    """
    labels = ("residual", "boundary", "initial")
    active = [p for p in progs if p is not None]
    if not active:
        raise ValueError("soft loss needs at least one program")
    net = active[0].net
    params = make_param_tensors(net, theta)
    total = None
    terms = {}
    for label, prog, batch, weight in zip(labels, progs, batches, weights):
        if prog is None or batch is None or len(batch) == 0:
            terms[label] = 0.0
            continue
        residual = _residual_tensor(prog, params, batch)
        _check_finite(residual.data, f"{label} term")
        term = (residual * residual).mean()
        terms[label] = float(term.data)
        weighted = term * float(weight)
        total = weighted if total is None else total + weighted
    total.backward()
    return LossReport(float(total.data), terms, flatten_grads(net, params))
