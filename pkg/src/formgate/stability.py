"""Multi-seed, multi-noise structure-uniqueness experiments.

For each noise level the targets get one fixed Gaussian perturbation and
n_seeds searches run that differ only in RNG seed. The structure implied by
the deterministic gates is snapshotted after every epoch. Two metrics:
epoch-wise diversity (distinct structures across seeds at an epoch) and
cumulative diversity (average per-seed count of distinct structures seen up
to an epoch, non-decreasing by construction).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .data import Dataset
from .model import ModelConfig
from .rng import spawn_seed, substream
from .search import SearchConfig, run_search
from .structure import FormulaStructure

METHOD_NAME = "gated-cp"  # method column kept so external curves can overlay


@dataclass(frozen=True)
class StabilityConfig:
    n_seeds: int = 10
    noise_levels: tuple[float, ...] = (0.01, 0.025, 0.05, 0.1)
    epochs: int = 20
    snapshot_per_epoch: bool = True
    warmup_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 2:
            raise ValueError("n_seeds must be >= 2")

    def to_dict(self) -> dict:
        return {
            "n_seeds": self.n_seeds,
            "noise_levels": list(self.noise_levels),
            "epochs": self.epochs,
            "snapshot_per_epoch": self.snapshot_per_epoch,
            "warmup_fraction": self.warmup_fraction,
            "seed": self.seed,
        }


@dataclass
class DiversityReport:
    noise_levels: tuple[float, ...]
    epochs: int
    n_seeds: int
    epoch_wise: dict[tuple[float, int], int]
    cumulative: dict[tuple[float, int], float]
    final_unique: dict[float, int]
    structures: dict[tuple[float, int], list[str]]  # (noise, epoch) -> per-seed strings
    warnings: list[str] = field(default_factory=list)

    def save_epoch_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "noise", "epoch", "count"])
            for sigma in self.noise_levels:
                for e in range(1, self.epochs + 1):
                    w.writerow([METHOD_NAME, repr(float(sigma)), e, self.epoch_wise[(sigma, e)]])

    def save_cumulative_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "noise", "epoch", "avg_unique"])
            for sigma in self.noise_levels:
                for e in range(1, self.epochs + 1):
                    w.writerow(
                        [METHOD_NAME, repr(float(sigma)), e, repr(self.cumulative[(sigma, e)])]
                    )


def _structure_string(names, probs, threshold: float) -> str:
    poly, inter, sin_active = [], [], False
    for name, p in zip(names, probs):
        if p <= threshold:
            continue
        if name == "sin":
            sin_active = True
        elif name.startswith("P"):
            poly.append(int(name[1:]))
        else:
            inter.append(int(name[1:]))
    return FormulaStructure(tuple(poly), tuple(inter), sin_active).canonical_string


@dataclass(frozen=True)
class _SeedTask:
    sigma: float
    seed_index: int
    X: np.ndarray
    y: np.ndarray
    task: str
    run_cfg: SearchConfig
    model_cfg: ModelConfig
    epochs: int
    steps_per_epoch: int
    threshold: float


def _run_seed_task(task: _SeedTask) -> tuple[float, int, list[str] | str]:
    """One search run; returns per-epoch structure strings or an error note."""
    data = Dataset(task.X, task.y, task=task.task)
    try:
        _, _, report = run_search(data, task.run_cfg, task.model_cfg)
    except Exception as exc:  # noqa: BLE001 - recorded in the report, not silenced
        return task.sigma, task.seed_index, f"{type(exc).__name__}: {exc}"
    snaps = []
    for e in range(1, task.epochs + 1):
        rec = report.per_step[min(e * task.steps_per_epoch, len(report.per_step)) - 1]
        snaps.append(_structure_string(report.gate_names, rec.gate_probs, task.threshold))
    return task.sigma, task.seed_index, snaps


def run_stability(
    data: Dataset,
    cfg: StabilityConfig,
    search: SearchConfig,
    model_cfg: ModelConfig,
    map_fn: Callable[[Callable, Iterable], Iterable] | None = None,
) -> DiversityReport:
    """Diversity metrics over seeds x noise levels on a standardized dataset.

    The per-level target noise is drawn once and shared by every seed, so
    the only varied factor within a level is the RNG seed (weight init, gate
    noise, batch order). ``map_fn`` lets a caller run the independent seed
    tasks on a worker pool; results are reduced in task order either way.
    Failed seeds are recorded as warnings and excluded from the counts.
    """
    steps_per_epoch = max(1, math.ceil(data.n / search.batch_size))
    warm_epochs = max(1, round(cfg.warmup_fraction * cfg.epochs))
    phase2_epochs = max(1, cfg.epochs - warm_epochs)

    tasks: list[_SeedTask] = []
    for sigma in cfg.noise_levels:
        if sigma > 0:
            noise = substream(cfg.seed, f"target-noise-{repr(float(sigma))}").normal(
                0.0, sigma, size=data.n
            )
            y = data.y + noise
        else:
            y = data.y
        for s in range(cfg.n_seeds):
            run_cfg = replace(
                search,
                seed=spawn_seed(cfg.seed, f"stability-seed-{s}"),
                warmup_steps=warm_epochs * steps_per_epoch,
                phase2_steps=phase2_epochs * steps_per_epoch,
            )
            tasks.append(
                _SeedTask(
                    sigma=sigma, seed_index=s, X=data.X, y=y, task=data.task,
                    run_cfg=run_cfg, model_cfg=model_cfg, epochs=cfg.epochs,
                    steps_per_epoch=steps_per_epoch, threshold=search.gate_threshold,
                )
            )

    mapper = map_fn if map_fn is not None else map
    results = list(mapper(_run_seed_task, tasks))

    per_level: dict[float, list[list[str]]] = {s: [] for s in cfg.noise_levels}
    warn: list[str] = []
    for sigma, seed_index, outcome in results:
        if isinstance(outcome, str):
            warn.append(f"noise={sigma} seed#{seed_index}: {outcome}")
        else:
            per_level[sigma].append(outcome)

    epoch_wise: dict[tuple[float, int], int] = {}
    cumulative: dict[tuple[float, int], float] = {}
    final_unique: dict[float, int] = {}
    structures: dict[tuple[float, int], list[str]] = {}
    for sigma in cfg.noise_levels:
        runs = per_level[sigma]
        for e in range(1, cfg.epochs + 1):
            at_epoch = [snaps[e - 1] for snaps in runs]
            structures[(sigma, e)] = at_epoch
            epoch_wise[(sigma, e)] = len(set(at_epoch))
            seen = [len(set(snaps[:e])) for snaps in runs]
            cumulative[(sigma, e)] = float(np.mean(seen)) if seen else 0.0
        final_unique[sigma] = epoch_wise[(sigma, cfg.epochs)]

    return DiversityReport(
        noise_levels=cfg.noise_levels,
        epochs=cfg.epochs,
        n_seeds=cfg.n_seeds,
        epoch_wise=epoch_wise,
        cumulative=cumulative,
        final_unique=final_unique,
        structures=structures,
        warnings=warn,
    )
