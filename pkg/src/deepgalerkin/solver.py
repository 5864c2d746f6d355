"""Training loop: stochastic collocation batches driving Adam or SGD.

Two modes. "ansatz" trains the single interior residual of the bound
trial A = multiplier * net + addendum, so boundary/initial conditions
hold exactly. "soft" trains the sum of interior, boundary and initial
penalty terms on separate batches. Optimizer state is reset on every
fit() call; parameters persist, so staged runs chain fit() calls.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import sampler as smp
from .ansatz import build_parts, wrap
from .engine import (
    ResidualProgram, evaluate_expr, loss_and_grad, soft_loss_and_grad,
)
from .autodiff import Tensor
from .expr import EvalError, substitute_trial, sub as expr_sub, trial
from .network import forward, init_params
from .problem import ConfigError

__all__ = ["TrainConfig", "AdamState", "TrainingError", "adam_step", "sgd_step", "DGModel", "write_loss_csv"]

MODES = ("ansatz", "soft")
OPTIMIZERS = ("adam", "sgd")


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or a failed evaluation)."""


@dataclass
class TrainConfig:
    mode: str = "ansatz"
    batch_size: int = 200
    boundary_batch_size: int = 50
    initial_batch_size: int = 50
    n_iters: int = 1000
    optimizer: str = "adam"
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    weights: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("train.mode", f"must be one of {MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("train.optimizer", f"must be one of {OPTIMIZERS}")
        for key in ("batch_size", "boundary_batch_size", "initial_batch_size", "n_iters"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 1:
                raise ConfigError(f"train.{key}", "must be a positive integer")
        if not self.learning_rate > 0:
            raise ConfigError("train.learning_rate", "must be positive")
        for key in ("beta1", "beta2"):
            if not 0 <= getattr(self, key) < 1:
                raise ConfigError(f"train.{key}", "must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError("train.eps", "must be positive")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("train.seed", "must be a non-negative integer")
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ConfigError("train.weights", "must be three non-negative numbers")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(theta, grad, state, cfg):
    """One Adam update with bias correction; returns (theta', state')."""
    step = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return theta, AdamState(m, v, step)


def sgd_step(theta, grad, cfg):
    return theta - cfg.learning_rate * grad


class DGModel:
    """Trial-function model: a network plus (in ansatz mode) exact binding."""

    def __init__(self, problem, net, mode="ansatz", seed=0):
        if mode not in MODES:
            raise ConfigError("train.mode", f"must be one of {MODES}")
        if net.input_dim != len(problem.variables):
            raise ConfigError("body", f"network input_dim {net.input_dim} does not match "
                                      f"the {len(problem.variables)} problem variables")
        self.problem = problem
        self.net = net
        self.mode = mode
        self.theta = init_params(net, seed)
        self.history = []
        self.term_history = []
        self.parts = None
        self._cache = {}
        self._program_set(mode)  # fail fast on incompatible configuration

    def _program_set(self, mode):
        if mode not in self._cache:
            problem = self.problem
            if mode == "ansatz":
                parts = build_parts(problem)
                bound = wrap(parts)
                residual = substitute_trial(problem.form, bound)
                prog = ResidualProgram(residual, problem.variables, self.net)
                self._cache[mode] = (prog, parts, bound)
            else:
                interior = ResidualProgram(problem.form, problem.variables, self.net)
                boundary = ResidualProgram(expr_sub(trial(), problem.boundary),
                                           problem.variables, self.net)
                initial = None
                if problem.is_evolution:
                    initial = ResidualProgram(expr_sub(trial(), problem.initial),
                                              problem.variables, self.net)
                self._cache[mode] = (interior, boundary, initial)
        return self._cache[mode]

    def fit(self, sampler_spec, cfg):
        """Run cfg.n_iters optimizer steps; returns this call's loss history."""
        if smp.dim(sampler_spec) != len(self.problem.variables):
            raise ConfigError("sampler", f"dimension {smp.dim(sampler_spec)} does not match "
                                         f"the {len(self.problem.variables)} problem variables")
        self.mode = cfg.mode
        programs = self._program_set(cfg.mode)
        self.parts = programs[1] if cfg.mode == "ansatz" else None
        rng = np.random.default_rng(cfg.seed)
        state = AdamState(np.zeros_like(self.theta), np.zeros_like(self.theta))
        lo, hi = self._domain_box()
        domain = self.problem.domain
        losses = []
        for iteration in range(cfg.n_iters):
            try:
                interior = sample_batch = smp.sample(sampler_spec, cfg.batch_size, rng)
                self._check_support(sample_batch, lo, hi)
                if cfg.mode == "ansatz":
                    report = loss_and_grad(programs[0], self.theta, interior)
                else:
                    boundary = smp.sample_boundary(domain, cfg.boundary_batch_size, rng)
                    initial = (smp.sample_initial(domain, cfg.initial_batch_size, rng)
                               if programs[2] is not None else None)
                    report = soft_loss_and_grad(programs, self.theta,
                                                (interior, boundary, initial), cfg.weights)
            except EvalError as err:
                raise TrainingError(f"iteration {iteration}: {err}") from None
            if not np.isfinite(report.loss):
                raise TrainingError(f"non-finite loss at iteration {iteration}")
            if cfg.optimizer == "adam":
                self.theta, state = adam_step(self.theta, report.grad, state, cfg)
            else:
                self.theta = sgd_step(self.theta, report.grad, cfg)
            losses.append(report.loss)
            self.history.append(report.loss)
            if cfg.mode == "soft":
                self.term_history.append((report.terms["residual"],
                                          report.terms["boundary"],
                                          report.terms["initial"]))
        return losses

    def evaluate(self, points):
        """Trial-function values at `points`; (n,) float64 array."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != len(self.problem.variables):
            raise ValueError(f"points must have shape (n, {len(self.problem.variables)})")
        lo, hi = self._domain_box()
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            warnings.warn("evaluating outside the problem domain; the trial function extrapolates",
                          stacklevel=2)
        net_values = forward(self.net, self.theta, pts)[:, 0]
        if self.mode != "ansatz":
            return net_values
        _, _, bound = self._program_set("ansatz")
        env = {name: Tensor(pts[:, i]) for i, name in enumerate(self.problem.variables.names)}
        return evaluate_expr(bound, env, {(): Tensor(net_values)}).data

    def _domain_box(self):
        box = np.asarray(self.problem.var_bounds(), dtype=np.float64)
        return box[:, 0], box[:, 1]

    @staticmethod
    def _check_support(points, lo, hi):
        if np.any(points < lo - 1e-12) or np.any(points > hi + 1e-12):
            raise ConfigError("sampler", "sampler produced points outside the problem domain")


def write_loss_csv(path, history, term_history=None):
    """Per-iteration losses: `iter,loss`, plus per-term columns in soft mode."""
    with open(path, "w", encoding="ascii") as fh:
        if term_history:
            fh.write("iter,loss,residual,boundary,initial\n")
            for i, (loss, terms) in enumerate(zip(history, term_history)):
                fh.write(f"{i},{loss!r},{terms[0]!r},{terms[1]!r},{terms[2]!r}\n")
        else:
            fh.write("iter,loss\n")
            for i, loss in enumerate(history):
                fh.write(f"{i},{loss!r}\n")
