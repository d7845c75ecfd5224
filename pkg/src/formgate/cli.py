"""Command-line surface tying the pipeline together.

Subcommands: search, build, bench, stability, orbit, gradcheck. Every run
writes a resolved-config snapshot beside its outputs; re-running a command
with ``--config <snapshot>`` reproduces the result (wall-clock timing fields
aside) because the snapshot pins every seed and the step counts actually
executed. Configuration precedence: flag > config file > default, with
unknown config keys rejected. Exit codes: 0 success, 1 validation error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import save_model
from .data import load_csv, split_and_standardize
from .errors import ConfigError, FormgateError, NumericalDivergenceError
from .grad import gradcheck_suite
from .model import ModelConfig
from .network import NetworkSpec, save_network, train_network
from .orbit import approximate_function, tent_map, unimodalize
from .rng import spawn_seed
from .search import SearchConfig, run_search
from .stability import StabilityConfig, run_stability
from .structure import FormulaStructure
from .synthetic import (
    MODES,
    SyntheticSpec,
    run_bench,
    synthetic_splits,
    write_bench_csv,
)

_SEARCH_DEFAULTS = {
    "synthetic": "hybrid:0",
    "csv": None,
    "target": None,
    "task": "regression",
    "dim": 10,
    "n": 2500,
    "noise": 0.0,
    "seed": None,
    "lambda_l0": 0.05,
    "warmup_steps": 800,
    "phase2_steps": 1200,
    "batch_size": 256,
    "learning_rate": 1e-2,
    "gate_lr_mult": 10.0,
    "budget_s": 60.0,
    "k_max": 5,
    "m_max": 4,
    "rank": 8,
    "include_sin": True,
    "gate_threshold": 0.5,
    "log_alpha_init": 1.0,
}

_BUILD_DEFAULTS = {
    "formula": None,
    "synthetic": "hybrid:0",
    "csv": None,
    "target": None,
    "task": "regression",
    "dim": 10,
    "n": 2500,
    "noise": 0.0,
    "seed": None,
    "widths": "10,16,1",
    "epochs": 100,
    "learning_rate": 1e-3,
    "batch_size": 64,
    "r2": 8,
    "patience_steps": None,
    "optimizer": None,
}

_BENCH_DEFAULTS = {
    "modes": "pure,interact,hybrid",
    "dims": "10",
    "ids": "0,1,2,3,4",
    "trials": 1,
    "n": 2500,
    "noise": 0.0,
    "seed": None,
    "budget_s": 60.0,
    "lambda_l0": 0.05,
    "warmup_steps": 800,
    "phase2_steps": 1200,
    "batch_size": 256,
    "learning_rate": 1e-2,
    "gate_lr_mult": 10.0,
}

_STABILITY_DEFAULTS = {
    "synthetic": "hybrid:0",
    "csv": None,
    "target": None,
    "task": "regression",
    "dim": 10,
    "n": 2500,
    "seed": None,
    "n_seeds": 10,
    "noise_levels": "0.01,0.025,0.05,0.1",
    "epochs": 20,
    "lambda_l0": 0.05,
    "batch_size": 256,
    "learning_rate": 1e-2,
    "gate_lr_mult": 10.0,
    "budget_s": None,
    "k_max": 5,
    "m_max": 4,
    "rank": 8,
    "include_sin": True,
}

_ORBIT_DEFAULTS = {
    "target": "x2",
    "k": 16,
    "eps": 2.0 ** -7,
    "max_iters": 1_000_000,
    "poly": None,
}

_GRADCHECK_DEFAULTS = {
    "n_configs": 20,
    "step": 1e-5,
    "tol": 1e-4,
    "seed": None,
}


def _resolve(command: str, defaults: dict, args: argparse.Namespace) -> dict:
    params = dict(defaults)
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        file_params = doc.get("params", doc)  # accept bare dicts or snapshots
        if "command" in doc and doc["command"] != command:
            raise ConfigError("command", f"snapshot is for {doc['command']!r}, not {command!r}")
        for key, val in file_params.items():
            if key not in params:
                raise ConfigError(f"{command}.{key}", "unknown key")
            params[key] = val
    for key in params:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            params[key] = val
    if "seed" in params and params["seed"] is None:
        params["seed"] = int(os.environ.get("NSTD_SEED", "0"))
    return params


def _write_snapshot(out: Path, command: str, params: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "version": __version__, "params": params}
    (out / "resolved_config.json").write_text(json.dumps(doc, indent=2))


def _parse_synthetic(text: str) -> tuple[str, int]:
    try:
        mode, fid = text.split(":")
        if mode not in MODES:
            raise ValueError
        return mode, int(fid)
    except ValueError:
        raise ConfigError("synthetic", f"expected '<mode>:<id>' with mode in {MODES}, got {text!r}") from None


def _load_splits(params: dict):
    """(train, val, test) from either a synthetic spec or a CSV path."""
    seed = params["seed"]
    if params.get("csv"):
        if not params.get("target"):
            raise ConfigError("target", "required with --csv")
        kind = "regression" if params.get("task", "regression") == "regression" else "classification"
        ds = load_csv(params["csv"], params["target"], kind)
        return split_and_standardize(ds, (0.8, 0.1, 0.1), seed=spawn_seed(seed, "split"))
    mode, fid = _parse_synthetic(params["synthetic"])
    spec = SyntheticSpec(
        mode=mode, formula_id=fid, d=params["dim"], n=params["n"],
        noise_sigma=params.get("noise", 0.0),
        coeff_seed=spawn_seed(seed, "coeff"), data_seed=spawn_seed(seed, "data"),
    )
    train, val, test, _ = synthetic_splits(spec)
    return train, val, test


def _search_config(params: dict) -> SearchConfig:
    return SearchConfig(
        lambda_l0=params["lambda_l0"],
        warmup_steps=params["warmup_steps"],
        phase2_steps=params["phase2_steps"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        gate_lr_mult=params["gate_lr_mult"],
        time_budget_s=params.get("budget_s"),
        seed=spawn_seed(params["seed"], "search"),
        gate_threshold=params.get("gate_threshold", 0.5),
        log_alpha_init=params.get("log_alpha_init", 1.0),
    )


def _cmd_search(args) -> int:
    params = _resolve("search", _SEARCH_DEFAULTS, args)
    out = Path(args.out)
    train, _, _ = _load_splits(params)
    model_cfg = ModelConfig(
        d=train.d, k_max=params["k_max"], m_max=params["m_max"],
        r=params["rank"], include_sin=params["include_sin"],
    )
    model, structure, report = run_search(train, _search_config(params), model_cfg)

    # pin executed step counts so a snapshot re-run is budget-independent
    params["warmup_steps"] = report.steps_phase1
    params["phase2_steps"] = report.steps_phase2
    params["budget_s"] = None
    _write_snapshot(out, "search", params)

    formula = structure.to_dict()
    formula["source"] = {"command": "search", "version": __version__, "params": params}
    (out / "formula.json").write_text(json.dumps(formula, indent=2))
    report.save_json(out / "train_report.json")
    report.save_gate_csv(out / "gate_trajectory.csv")
    save_model(model, out / "model.json")
    print(f"discovered structure: {structure.canonical_string}")
    print(f"wrote {out}/formula.json, train_report.json, gate_trajectory.csv, model.json")
    return 0


def _cmd_build(args) -> int:
    params = _resolve("build", _BUILD_DEFAULTS, args)
    if not params["formula"]:
        raise ConfigError("formula", "path to formula.json is required")
    out = Path(args.out)
    structure = FormulaStructure.from_dict(json.loads(Path(params["formula"]).read_text()))
    train, val, test = _load_splits(params)

    widths = tuple(int(w) for w in str(params["widths"]).split(","))
    if widths[0] != train.d:
        widths = (train.d,) + widths[1:]
    task = train.task if params["task"] != "regression" else "regression"
    n_classes = train.n_classes if task == "multiclass" else None
    spec = NetworkSpec(
        layer_widths=widths,
        structure=structure,
        task=task,
        n_classes=n_classes,
        optimizer=params["optimizer"],
        learning_rate=params["learning_rate"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        seed=spawn_seed(params["seed"], "stage2"),
        r2=params["r2"],
        patience_steps=params["patience_steps"],
    )
    net, report = train_network(spec, train, val, test)
    _write_snapshot(out, "build", params)
    report.save_json(out / "eval_report.json")
    save_network(net, out / "network.json")
    print(f"{report.metric_name} = {report.metric_value:.6f} "
          f"({report.params} params, {report.flops_per_sample} flops/sample)")
    return 0


def _pool_map(jobs: int):
    if jobs <= 1:
        return None
    pool = ProcessPoolExecutor(max_workers=jobs)
    return pool.map


def _cmd_bench(args) -> int:
    params = _resolve("bench", _BENCH_DEFAULTS, args)
    out = Path(args.out)
    template = SearchConfig(
        lambda_l0=params["lambda_l0"],
        warmup_steps=params["warmup_steps"],
        phase2_steps=params["phase2_steps"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        gate_lr_mult=params["gate_lr_mult"],
        time_budget_s=params["budget_s"],
        seed=0,
    )
    rows, aggregate = run_bench(
        modes=tuple(params["modes"].split(",")),
        dims=tuple(int(d) for d in str(params["dims"]).split(",")),
        trials=params["trials"],
        search_template=template,
        base_seed=params["seed"],
        formula_ids=tuple(int(i) for i in str(params["ids"]).split(",")),
        n=params["n"],
        noise_sigma=params["noise"],
        map_fn=_pool_map(args.jobs),
    )
    _write_snapshot(out, "bench", params)
    write_bench_csv(rows, out / "results.csv")
    (out / "aggregate.json").write_text(json.dumps(aggregate, indent=2))
    for mode, per_dim in aggregate.items():
        for d, cell in per_dim.items():
            print(f"{mode} d={d}: mean MSE {cell['mean_mse']:.4f} (sem {cell['sem']:.4f})")
    return 0


def _cmd_stability(args) -> int:
    params = _resolve("stability", _STABILITY_DEFAULTS, args)
    out = Path(args.out)
    train, _, _ = _load_splits(params)
    model_cfg = ModelConfig(
        d=train.d, k_max=params["k_max"], m_max=params["m_max"],
        r=params["rank"], include_sin=params["include_sin"],
    )
    search = SearchConfig(
        lambda_l0=params["lambda_l0"],
        batch_size=params["batch_size"],
        learning_rate=params["learning_rate"],
        gate_lr_mult=params["gate_lr_mult"],
        time_budget_s=params["budget_s"],
        seed=0,
    )
    cfg = StabilityConfig(
        n_seeds=params["n_seeds"],
        noise_levels=tuple(float(s) for s in str(params["noise_levels"]).split(",")),
        epochs=params["epochs"],
        seed=spawn_seed(params["seed"], "stability"),
    )
    report = run_stability(train, cfg, search, model_cfg, map_fn=_pool_map(args.jobs))
    _write_snapshot(out, "stability", params)
    report.save_epoch_csv(out / "epoch_diversity.csv")
    report.save_cumulative_csv(out / "cumulative_diversity.csv")
    for sigma in cfg.noise_levels:
        print(f"noise {sigma}: final epoch-wise diversity {report.final_unique[sigma]}, "
              f"final cumulative {report.cumulative[(sigma, cfg.epochs)]:.2f}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


_ORBIT_TARGETS = {
    "x2": lambda x: x ** 2,
    "x": lambda x: x,
    "sin": lambda x: np.sin(np.pi * x),
    "cos-bump": lambda x: 0.5 - 0.5 * np.cos(2 * np.pi * x),
}


def _cmd_orbit(args) -> int:
    params = _resolve("orbit", _ORBIT_DEFAULTS, args)
    out = Path(args.out)
    name = str(params["target"])
    if name.startswith("const:"):
        c = float(name.split(":")[1])
        f = lambda x: np.full_like(np.asarray(x, dtype=float), c)  # noqa: E731
    elif name in _ORBIT_TARGETS:
        f = _ORBIT_TARGETS[name]
    else:
        raise ConfigError("target", f"unknown target {name!r}")
    umap = tent_map() if not params["poly"] else unimodalize(
        [float(c) for c in str(params["poly"]).split(",")]
    )
    approx, report = approximate_function(
        f, int(params["k"]), float(params["eps"]), umap, max_iters=int(params["max_iters"])
    )
    _write_snapshot(out, "orbit", params)
    grid = np.linspace(0.0, 1.0, 10 * int(params["k"]))
    with (out / "orbit.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "f", "h"])
        hx = approx(grid)
        fx = np.asarray(f(grid), dtype=float)
        for xi, fi, hi in zip(grid, fx, hx):
            w.writerow([repr(float(xi)), repr(float(fi)), repr(float(hi))])
    (out / "orbit_report.json").write_text(json.dumps(report, indent=2))
    print(f"K={report['K']} eps={report['eps']:.6g} seed {report['seed_label']} "
          f"sup_error={report['sup_error']:.6g} params={report['param_count']}")
    return 0


def _cmd_gradcheck(args) -> int:
    params = _resolve("gradcheck", _GRADCHECK_DEFAULTS, args)
    results = gradcheck_suite(
        n_configs=params["n_configs"], seed=params["seed"], step=params["step"]
    )
    worst = 0.0
    for i, res in enumerate(results):
        c = res["config"]
        print(
            f"config {i:2d} d={c['d']:3d} k={c['k_max']} m={c['m_max']} r={c['r']} "
            f"sin={int(c['include_sin'])} {res['loss']}: "
            f"max rel err {res['max_relative_error']:.3e}"
        )
        worst = max(worst, res["max_relative_error"])
    ok = worst < params["tol"]
    print(f"worst relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at tol {params['tol']})")
    return 0 if ok else 1


def _add_common(p: argparse.ArgumentParser, with_out: bool = True):
    p.add_argument("--config", help="JSON config or resolved snapshot; flags override")
    p.add_argument("--seed", type=int, default=None, help="global seed (env NSTD_SEED fallback)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    if with_out:
        p.add_argument("--out", default=None, help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="formgate", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="stage-1 structure discovery")
    _add_common(p)
    p.add_argument("--synthetic", help="synthetic generator '<mode>:<id>'")
    p.add_argument("--csv")
    p.add_argument("--target")
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--lambda-l0", dest="lambda_l0", type=float)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--phase2-steps", dest="phase2_steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--gate-lr-mult", dest="gate_lr_mult", type=float)
    p.add_argument("--budget", dest="budget_s", type=float)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--rank", type=int)
    p.set_defaults(func=_cmd_search, default_out="runs/search")

    p = sub.add_parser("build", help="stage-2 network training from a formula.json")
    _add_common(p)
    p.add_argument("--formula")
    p.add_argument("--synthetic")
    p.add_argument("--csv")
    p.add_argument("--target")
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--widths")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--r2", type=int)
    p.add_argument("--patience", dest="patience_steps", type=int)
    p.add_argument("--optimizer", choices=["adam", "rmsprop"])
    p.set_defaults(func=_cmd_build, default_out="runs/build")

    p = sub.add_parser("bench", help="synthetic sweep: modes x ids x dims x trials")
    _add_common(p)
    p.add_argument("--modes")
    p.add_argument("--dims")
    p.add_argument("--ids")
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--budget", dest="budget_s", type=float)
    p.add_argument("--lambda-l0", dest="lambda_l0", type=float)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--phase2-steps", dest="phase2_steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--gate-lr-mult", dest="gate_lr_mult", type=float)
    p.set_defaults(func=_cmd_bench, default_out="runs/bench")

    p = sub.add_parser("stability", help="multi-seed, multi-noise diversity experiment")
    _add_common(p)
    p.add_argument("--synthetic")
    p.add_argument("--csv")
    p.add_argument("--target")
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--noise-levels", dest="noise_levels")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda-l0", dest="lambda_l0", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--gate-lr-mult", dest="gate_lr_mult", type=float)
    p.add_argument("--budget", dest="budget_s", type=float)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--rank", type=int)
    p.set_defaults(func=_cmd_stability, default_out="runs/stability")

    p = sub.add_parser("orbit", help="dense-orbit approximation demo")
    _add_common(p)
    p.add_argument("--target", help="x2 | x | sin | cos-bump | const:<v>")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--poly", help="comma-separated ascending coefficients; default tent map")
    p.set_defaults(func=_cmd_orbit, default_out="runs/orbit")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p, with_out=False)
    p.add_argument("--n-configs", dest="n_configs", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_gradcheck, default_out=None)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "default_out", None) is not None and args.out is None:
        args.out = args.default_out
    try:
        return args.func(args)
    except NumericalDivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FormgateError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def orbit_demo_main(argv: list[str] | None = None) -> int:
    """Console alias: ``orbit-demo`` == ``formgate orbit``."""
    return main(["orbit"] + (argv if argv is not None else sys.argv[1:]))


if __name__ == "__main__":
    sys.exit(main())
