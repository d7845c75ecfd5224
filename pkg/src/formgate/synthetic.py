"""Synthetic function families and the two-stage search/evaluate protocol.

Three generator modes: pure element-wise polynomials P_k(x) = sum_j x_j^k,
interaction products I_k(x) = prod_{m=1..k} (w_m . x) with w_m entries
drawn N(0, 1/sqrt(d)) (variance 1/sqrt(d)), and hybrids mixing both. Most
coefficients are N(0,1); a few cells use fixed high-contrast values (e.g.
10 vs 0.5) so a weak term must be found in the shadow of a dominant one.

Evaluation is two-stage: discover a structure under a wall-clock budget,
then refit the constants from scratch with a fresh single identity layer
and report held-out MSE, so only the quality of the discovered structure
is scored.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, split_and_standardize
from .network import NetworkSpec, train_network
from .model import ModelConfig
from .rng import spawn_seed, substream
from .search import SearchConfig, run_search
from .structure import FormulaStructure, classify_match

MODES = ("pure", "interact", "hybrid")

# (kind, order, coefficient); None means draw the coefficient from N(0, 1)
_TABLE: dict[str, list[list[tuple[str, int, float | None]]]] = {
    "pure": [
        [("P", 2, None)],
        [("P", 3, None)],
        [("P", 1, 10.0), ("P", 2, 0.5)],
        [("P", 2, 5.0), ("P", 4, 0.5)],
        [("P", 5, None)],
    ],
    "interact": [
        [("I", 2, None)],
        [("I", 2, None), ("I", 3, None)],
        [("I", 2, 8.0), ("I", 3, 0.5)],
        [("I", 2, None), ("I", 4, None)],
        [("I", 4, None)],
    ],
    "hybrid": [
        [("P", 2, None), ("I", 2, None)],
        [("P", 1, None), ("I", 2, None)],
        [("P", 3, 5.0), ("I", 2, 0.5)],
        [("P", 2, 0.5), ("I", 3, 5.0)],
        [("P", 2, None), ("I", 2, None), ("I", 3, None)],
    ],
}


@dataclass(frozen=True)
class SyntheticSpec:
    mode: str
    formula_id: int
    d: int
    n: int = 2500
    split: float = 0.8
    coeff_seed: int = 0
    data_seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 <= self.formula_id <= 4:
            raise ValueError("formula_id must be in 0..4")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "formula_id": self.formula_id,
            "d": self.d,
            "n": self.n,
            "split": self.split,
            "coeff_seed": self.coeff_seed,
            "data_seed": self.data_seed,
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


@dataclass
class GroundTruth:
    """The generating formula: structure, coefficients, interaction factors."""

    structure: FormulaStructure
    coefficients: dict[str, float]             # "P2" / "I3" -> coefficient
    interaction_weights: dict[int, np.ndarray]  # k -> (k, d) factor rows


def ground_truth_for(spec: SyntheticSpec) -> GroundTruth:
    """Coefficients and interaction factors implied by the spec's seeds."""
    rng = substream(spec.coeff_seed, "coeffs")
    terms = _TABLE[spec.mode][spec.formula_id]
    coeffs: dict[str, float] = {}
    weights: dict[int, np.ndarray] = {}
    for kind, order, fixed in terms:
        c = float(rng.normal()) if fixed is None else fixed
        coeffs[f"{kind}{order}"] = c
        if kind == "I":
            # factor entries ~ N(0, 1/sqrt(d)) with 1/sqrt(d) the variance, so
            # (w . x) ~ N(0, sqrt(d)) and interaction terms keep a variance
            # share comparable to the element-wise terms at every d
            weights[order] = rng.normal(0.0, spec.d ** -0.25, size=(order, spec.d))
    poly = tuple(o for k, o, _ in terms if k == "P")
    inter = tuple(o for k, o, _ in terms if k == "I")
    return GroundTruth(FormulaStructure(poly, inter, False), coeffs, weights)


def evaluate_ground_truth(truth: GroundTruth, X: np.ndarray) -> np.ndarray:
    """Raw (unstandardized) targets of the generating formula."""
    y = np.zeros(X.shape[0])
    for name, c in truth.coefficients.items():
        order = int(name[1:])
        if name.startswith("P"):
            y += c * (X ** order).sum(axis=1)
        else:
            y += c * np.prod(X @ truth.interaction_weights[order].T, axis=1)
    return y


def generate(spec: SyntheticSpec) -> tuple[Dataset, GroundTruth]:
    """Sample X ~ N(0, I_d), evaluate the formula, add optional noise.

    Targets are returned raw; standardization by training-split statistics
    happens at split time. Fully determined by (coeff_seed, data_seed).
    """
    truth = ground_truth_for(spec)
    X = substream(spec.data_seed, "X").normal(size=(spec.n, spec.d))
    y = evaluate_ground_truth(truth, X)
    if spec.noise_sigma > 0:
        y = y + substream(spec.data_seed, "noise").normal(0.0, spec.noise_sigma, size=spec.n)
    return Dataset(X, y, task="regression"), truth


def synthetic_splits(spec: SyntheticSpec) -> tuple[Dataset, Dataset, Dataset, GroundTruth]:
    """Generate and split: test gets 1-split, a 1/8 slice of the training
    portion is held out for validation-based early stopping."""
    ds, truth = generate(spec)
    test_frac = 1.0 - spec.split
    val_frac = spec.split * 0.125
    train_frac = spec.split - val_frac
    train, val, test = split_and_standardize(
        ds, (train_frac, val_frac, test_frac), seed=spawn_seed(spec.data_seed, "split")
    )
    return train, val, test, truth


def two_stage_eval(
    spec: SyntheticSpec,
    search_config: SearchConfig,
    model_config: ModelConfig | None = None,
    stage2_epochs: int = 400,
    stage2_lr: float = 1e-2,
    stage2_batch: int = 64,
) -> dict:
    """Search for a structure, refit its constants from scratch, score it.

    Returns the discovered structure, whether it exactly matches / strictly
    contains / misses the generating structure, and the held-out MSE of the
    refit (single identity layer, MSE loss, patience 50 steps on validation).
    """
    train, val, test, truth = synthetic_splits(spec)
    if model_config is None:
        model_config = ModelConfig(d=train.d)
    t0 = time.perf_counter()
    _, structure, report = run_search(train, search_config, model_config)
    search_wall = time.perf_counter() - t0

    net_spec = NetworkSpec(
        layer_widths=(train.d, 1),
        structure=structure,
        task="regression",
        optimizer="rmsprop",
        learning_rate=stage2_lr,
        epochs=stage2_epochs,
        batch_size=stage2_batch,
        seed=spawn_seed(search_config.seed, "stage2"),
        patience_steps=50,
    )
    _, eval_report = train_network(net_spec, train, val, test)
    return {
        "spec": spec.to_dict(),
        "structure": structure.to_dict(),
        "structure_match": classify_match(structure, truth.structure),
        "test_mse": eval_report.metric_value,
        "search_wall_s": search_wall,
        "search_steps": report.steps_phase1 + report.steps_phase2,
        "stage2": eval_report.to_dict(),
    }


def _run_bench_cell(cell: tuple[str, int, int, int, SyntheticSpec, SearchConfig]) -> dict:
    mode, fid, d, trial, spec, cfg = cell
    res = two_stage_eval(spec, cfg)
    return {
        "mode": mode,
        "formula_id": fid,
        "d": d,
        "trial": trial,
        "structure": res["structure"]["canonical"],
        "match": res["structure_match"],
        "test_mse": res["test_mse"],
        "search_wall_s": res["search_wall_s"],
    }


def run_bench(
    modes: tuple[str, ...],
    dims: tuple[int, ...],
    trials: int,
    search_template: SearchConfig,
    base_seed: int = 0,
    formula_ids: tuple[int, ...] = (0, 1, 2, 3, 4),
    n: int = 2500,
    noise_sigma: float = 0.0,
    map_fn=None,
) -> tuple[list[dict], dict]:
    """Sweep (mode, formula_id, dim, trial) cells; aggregate per (mode, dim).

    Every cell derives its own coefficient/data/search seeds from the base
    seed, so the sweep is reproducible cell by cell and cells can run on a
    worker pool (``map_fn``); rows are merged in deterministic cell order.
    Aggregation reports the mean test MSE over formula ids per trial, then
    mean and SEM over trials.
    """
    cells = []
    for mode in modes:
        for d in dims:
            for trial in range(trials):
                for fid in formula_ids:
                    tag = f"{mode}-{fid}-{d}-{trial}"
                    spec = SyntheticSpec(
                        mode=mode, formula_id=fid, d=d, n=n, noise_sigma=noise_sigma,
                        coeff_seed=spawn_seed(base_seed, tag, "coeff"),
                        data_seed=spawn_seed(base_seed, tag, "data"),
                    )
                    cfg = replace(search_template, seed=spawn_seed(base_seed, tag, "search"))
                    cells.append((mode, fid, d, trial, spec, cfg))
    mapper = map_fn if map_fn is not None else map
    rows = list(mapper(_run_bench_cell, cells))
    aggregate: dict = {}
    for mode in modes:
        agg_mode: dict = {}
        for d in dims:
            per_trial = []
            for trial in range(trials):
                cell = [
                    r["test_mse"]
                    for r in rows
                    if r["mode"] == mode and r["d"] == d and r["trial"] == trial
                ]
                per_trial.append(float(np.mean(cell)))
            mean = float(np.mean(per_trial))
            sem = float(np.std(per_trial, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
            agg_mode[str(d)] = {"mean_mse": mean, "sem": sem, "trials": trials}
        aggregate[mode] = agg_mode
    return rows, aggregate


def write_bench_csv(rows: list[dict], path: str | Path) -> None:
    import csv

    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["mode", "formula_id", "d", "trial", "structure", "match", "test_mse", "search_wall_s"]
        )
        for r in rows:
            w.writerow(
                [
                    r["mode"], r["formula_id"], r["d"], r["trial"], r["structure"],
                    r["match"], repr(r["test_mse"]), repr(r["search_wall_s"]),
                ]
            )
