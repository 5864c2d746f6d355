"""Command-line entry points: `solve` trains and writes run artifacts,
`compare` checks a checkpoint against a finite-difference reference.

Exit codes: 0 success, 2 configuration validation failure, 3 numeric
failure during training, 4 problem shape unsupported by the oracle.
"""

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .expr import Const, collect_tags, eval_pointwise, neg, substitute_trial, to_source
from .network import CheckpointError, LayoutError, NetworkSpec, load_checkpoint, save_checkpoint
from .oracle import grid_error, solve_heat_fd, solve_poisson_fd, subsample
from .problem import ConfigError, build_problem
from .report import save_compare_figure, save_loss_figure, save_solution_figure
from .sampler import dim as sampler_dim, sample_boundary, sampler_from_config, scaled_to
from .solver import DGModel, TrainConfig, TrainingError, write_loss_csv

__all__ = ["main", "run_solve", "run_compare", "load_setup"]

_TRAIN_KEYS = {
    "mode", "batch_size", "boundary_batch_size", "initial_batch_size", "n_iters",
    "optimizer", "learning_rate", "beta1", "beta2", "eps", "seed", "weights",
}


@dataclass
class RunSetup:
    problem: object
    net: NetworkSpec
    train: TrainConfig
    sampler: object          # affine-wrapped, emits points in the domain
    out_dir: Path
    grid: int
    time: float | None
    resolved: dict


def _as_int(value, key):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(key, "must be an integer")
    return value


def load_setup(config_path, overrides=None):
    """Read, override, validate and resolve a run configuration."""
    try:
        raw = json.loads(Path(config_path).read_text())
    except OSError as err:
        raise ConfigError("config", f"cannot read {config_path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    for key in raw:
        if key not in {"pde", "body", "train", "sampler", "output"}:
            raise ConfigError(key, "unknown top-level block")

    pde = dict(raw.get("pde") or {})
    body = dict(raw.get("body") or {})
    train = dict(raw.get("train") or {})
    sampler_cfg = raw.get("sampler")
    output = dict(raw.get("output") or {})

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        block, name = key.split(".")
        {"train": train, "output": output}[block][name] = value

    problem = build_problem(pde)
    n_vars = len(problem.variables)

    for key in ("layout", "units", "activations"):
        if key not in body:
            raise ConfigError(f"body.{key}", "required")
    for key in body:
        if key not in {"layout", "units", "activations"}:
            raise ConfigError(f"body.{key}", "unknown key")
    try:
        net = NetworkSpec(
            layout=str(body["layout"]),
            units=tuple(body["units"]),
            activations=tuple(body["activations"]),
            input_dim=n_vars,
        )
    except LayoutError as err:
        key = "body.activations" if "activation" in str(err) else "body.layout"
        raise ConfigError(key, str(err)) from None
    except (TypeError, ValueError) as err:
        raise ConfigError("body", str(err)) from None

    for key in train:
        if key not in _TRAIN_KEYS:
            raise ConfigError(f"train.{key}", "unknown key")
    try:
        train_cfg = TrainConfig(**train)
    except TypeError as err:
        raise ConfigError("train", str(err)) from None

    if sampler_cfg is None:
        sampler_cfg = {"kind": "uniform", "dim": n_vars}
    unit_sampler = sampler_from_config(sampler_cfg)
    if sampler_dim(unit_sampler) != n_vars:
        raise ConfigError("sampler", f"dimension {sampler_dim(unit_sampler)} does not match "
                                     f"the {n_vars} problem variables")
    sampler = scaled_to(unit_sampler, problem.domain)

    for key in output:
        if key not in {"out_dir", "grid", "time"}:
            raise ConfigError(f"output.{key}", "unknown key")
    out_dir = Path(str(output.get("out_dir", "runs/latest")))
    grid = _as_int(output.get("grid", 51), "output.grid")
    if grid < 2:
        raise ConfigError("output.grid", "must be at least 2")
    at_time = output.get("time")
    if at_time is not None:
        if not problem.is_evolution:
            raise ConfigError("output.time", "only meaningful for a time-dependent problem")
        at_time = float(at_time)
        t0, t1 = problem.domain.time
        if not t0 <= at_time <= t1:
            raise ConfigError("output.time", f"{at_time} outside the time interval [{t0}, {t1}]")

    resolved = {
        "pde": {k: pde[k] for k in ("n_dims", "form", "domain", "boundary_condition",
                                    "initial_condition", "initial_rate") if k in pde},
        "body": {"layout": net.layout, "units": list(net.units), "activations": list(net.activations)},
        "train": {
            "mode": train_cfg.mode, "batch_size": train_cfg.batch_size,
            "boundary_batch_size": train_cfg.boundary_batch_size,
            "initial_batch_size": train_cfg.initial_batch_size,
            "n_iters": train_cfg.n_iters, "optimizer": train_cfg.optimizer,
            "learning_rate": train_cfg.learning_rate, "beta1": train_cfg.beta1,
            "beta2": train_cfg.beta2, "eps": train_cfg.eps, "seed": train_cfg.seed,
            "weights": list(train_cfg.weights),
        },
        "sampler": sampler_cfg,
        "output": {"out_dir": str(out_dir), "grid": grid, **({"time": at_time} if at_time is not None else {})},
    }
    resolved["pde"].setdefault("domain", [list(b) for b in problem.var_bounds()])
    resolved["pde"].setdefault("boundary_condition", to_source(problem.boundary))

    return RunSetup(problem, net, train_cfg, sampler, out_dir, grid, at_time, resolved)


def solution_grid(problem, grid_n, at_time=None):
    """Regular evaluation grid over the spatial box, at one time if evolving."""
    axes = [np.linspace(a, b, grid_n) for a, b in problem.domain.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    columns = [m.ravel() for m in mesh]
    if problem.is_evolution:
        t = problem.domain.time[1] if at_time is None else at_time
        columns.append(np.full(columns[0].size, t))
    return axes, np.column_stack(columns)


def write_grid_csv(path, names, columns):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- oracle shape detection ----------------------------------------------------

def _linear_coefficients(problem, rng):
    """Trial-value coefficients of the form, or None if not affine/constant."""
    form = problem.form
    tags = sorted(collect_tags(form))
    names = problem.variables.names
    box = problem.var_bounds()
    points = [
        {name: lo + rng.random() * (hi - lo) for name, (lo, hi) in zip(names, box)}
        for _ in range(8)
    ]
    coeffs = {}
    for tag in tags:
        probe = [
            eval_pointwise(form, p, lambda tg, _p, t=tag: 1.0 if tg == t else 0.0)
            - eval_pointwise(form, p, lambda tg, _p: 0.0)
            for p in points
        ]
        if max(probe) - min(probe) > 1e-9:
            return None
        coeffs[tag] = probe[0]
    for p in points:
        values = {tag: float(rng.standard_normal()) for tag in tags}
        full = eval_pointwise(form, p, lambda tg, _p: values.get(tg, 0.0))
        base = eval_pointwise(form, p, lambda tg, _p: 0.0)
        linear = sum(coeffs[tag] * values[tag] for tag in tags)
        if abs(full - base - linear) > 1e-8 * max(1.0, abs(full)):
            return None
    return coeffs


def detect_oracle_shape(problem):
    """'poisson' | 'heat' when a reference solver applies, else None."""
    spatial = problem.variables.spatial
    if len(spatial) != 2:
        return None
    x, y = spatial
    rng = np.random.default_rng(11)
    coeffs = _linear_coefficients(problem, rng)
    if coeffs is None:
        return None
    if not problem.is_evolution:
        want = {(x, x): 1.0, (y, y): 1.0}
        shape = "poisson"
    elif problem.time_order == 1:
        want = {("t",): 1.0, tuple(sorted((x, x))): -1.0, (y, y): -1.0}
        shape = "heat"
    else:
        return None
    if set(coeffs) != set(want) or any(abs(coeffs[t] - want[t]) > 1e-9 for t in want):
        return None
    if shape == "heat":
        source = neg(substitute_trial(problem.form, Const(0.0)))
        probe = {x: 0.3819, y: 0.6180}
        t0, t1 = problem.domain.time
        early = eval_pointwise(source, {**probe, "t": t0 + 0.25 * (t1 - t0)})
        late = eval_pointwise(source, {**probe, "t": t0 + 0.75 * (t1 - t0)})
        if abs(early - late) > 1e-10 * max(1.0, abs(early)):
            return None  # time-dependent source
        walls = sample_boundary(problem.domain, 64, np.random.default_rng(3))
        g = problem.boundary
        if any(abs(eval_pointwise(g, dict(zip(problem.variables.names, p)))) > 1e-12 for p in walls):
            return None  # oracle assumes zero Dirichlet walls
    return shape


# -- subcommands ----------------------------------------------------------------

def run_solve(args):
    try:
        setup = load_setup(args.config, _overrides(args))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    model = DGModel(setup.problem, setup.net, mode=setup.train.mode, seed=setup.train.seed)
    try:
        model.fit(setup.sampler, setup.train)
    except TrainingError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3

    out = setup.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_loss_csv(out / "loss.csv", model.history,
                   model.term_history if setup.train.mode == "soft" else None)
    save_checkpoint(setup.net, model.theta, out / "model.ckpt")
    (out / "resolved_config.json").write_text(json.dumps(setup.resolved, indent=2) + "\n")

    axes, points = solution_grid(setup.problem, setup.grid, setup.time)
    values = model.evaluate(points)
    names = list(setup.problem.variables.names) + ["u"]
    columns = [points[:, i] for i in range(points.shape[1])] + [values]
    write_grid_csv(out / "solution.csv", names, columns)

    if not args.no_figures:
        save_loss_figure(out / "loss.png", model.history,
                         model.term_history if setup.train.mode == "soft" else None)
        shape = tuple(len(a) for a in axes)
        title = "solution"
        if setup.problem.is_evolution:
            t = setup.time if setup.time is not None else setup.problem.domain.time[1]
            title = f"solution at t = {t:g}"
        save_solution_figure(out / "solution.png", axes, values.reshape(shape),
                             setup.problem.variables.spatial, title)

    print(f"finished {setup.train.n_iters} iterations; final loss {model.history[-1]:.6e}")
    print(f"artifacts written to {out}")
    return 0


def run_compare(args):
    try:
        setup = load_setup(args.config, _overrides(args))
        ckpt_spec, theta = load_checkpoint(args.model)
    except (ConfigError, CheckpointError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if ckpt_spec != setup.net:
        print("error: body: checkpoint network does not match the config body block", file=sys.stderr)
        return 2

    problem = setup.problem
    shape = detect_oracle_shape(problem)
    if shape is None:
        print("error: no finite-difference oracle covers this problem shape "
              "(supported: 2-d stationary diffusion, 2-d evolution with zero walls)", file=sys.stderr)
        return 4

    model = DGModel(problem, setup.net, mode=setup.train.mode, seed=setup.train.seed)
    model.theta = theta
    grid_n = setup.grid
    source = neg(substitute_trial(problem.form, Const(0.0)))

    if shape == "poisson":
        oracle_n = 4 * (grid_n - 1) + 1
        reference = subsample(solve_poisson_fd(source, problem.boundary, problem.domain, oracle_n), grid_n)
        at_time = None
    else:
        t0, t1 = problem.domain.time
        steps = 200
        dt = (t1 - t0) / steps
        requested = setup.time if setup.time is not None else t1
        index = int(round((requested - t0) / dt))
        at_time = t0 + index * dt
        oracle_n = 2 * (grid_n - 1) + 1
        history = solve_heat_fd(source, problem.initial, problem.domain, oracle_n, steps)
        reference = subsample(history[index], grid_n)

    axes, points = solution_grid(problem, grid_n, at_time)
    values = model.evaluate(points).reshape(grid_n, grid_n)
    err = grid_error(values, reference)

    out = setup.out_dir
    out.mkdir(parents=True, exist_ok=True)
    names = list(problem.variables.names) + ["model", "oracle", "abs_diff"]
    columns = [points[:, i] for i in range(points.shape[1])]
    columns += [values.ravel(), reference.ravel(), np.abs(values - reference).ravel()]
    write_grid_csv(out / "compare.csv", names, columns)
    if not args.no_figures:
        title = "model vs oracle" + (f" at t = {at_time:g}" if at_time is not None else "")
        save_compare_figure(out / "compare.png", axes, values, reference, title)

    print(f"Linf {err.linf!r}")
    print(f"RMS {err.rms!r}")
    return 0


def _overrides(args):
    return {
        "train.seed": args.seed,
        "train.n_iters": args.iters,
        "train.batch_size": args.batch_size,
        "train.mode": args.mode,
        "output.out_dir": args.out_dir,
        "output.grid": args.grid,
        "output.time": args.time,
    }


def _add_shared_flags(parser):
    parser.add_argument("--config", required=True, help="path to the run configuration (JSON)")
    parser.add_argument("--out-dir", default=None, help="artifact directory (overrides output.out_dir)")
    parser.add_argument("--seed", type=int, default=None, help="training seed (overrides train.seed)")
    parser.add_argument("--iters", type=int, default=None, help="iteration count (overrides train.n_iters)")
    parser.add_argument("--batch-size", type=int, default=None, help="interior batch size")
    parser.add_argument("--grid", type=int, default=None, help="evaluation grid nodes per axis")
    parser.add_argument("--time", type=float, default=None, help="evaluation time for evolution problems")
    parser.add_argument("--mode", choices=("ansatz", "soft"), default=None, help="training mode")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="deepgalerkin",
        description="Train neural PDE solutions on random collocation points and "
                    "verify them against finite-difference references.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    solve = commands.add_parser("solve", help="train a model and write run artifacts")
    _add_shared_flags(solve)
    compare = commands.add_parser("compare", help="compare a checkpoint against the oracle")
    _add_shared_flags(compare)
    compare.add_argument("--model", required=True, help="path to a model checkpoint")
    args = parser.parse_args(argv)
    return run_solve(args) if args.command == "solve" else run_compare(args)


if __name__ == "__main__":
    sys.exit(main())
