"""Two-phase differentiable structure search.

Phase 1 (warm-up) trains all weights against the task loss with every gate
frozen open, so each candidate term develops a useful representation before
any pruning pressure is applied. Phase 2 unfreezes the gates and minimizes
task loss + lambda * expected-L0, sampling the stochastic gates once per
step. The final sparse structure is read off the deterministic test-time
gates.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import NumericalDivergenceError
from .gates import deterministic_gates, expected_l0, sample_gates, structure_from_gates
from .grad import backward
from .model import DualStreamModel, ModelConfig, init_model
from .optim import Adam
from .rng import substream
from .structure import FormulaStructure


@dataclass(frozen=True)
class SearchConfig:
    """Hyperparameters of one structure-search run.

    ``gate_lr_mult`` scales the gate-logit learning rate relative to the
    weight learning rate: logits must traverse several units within a short
    step budget while the weights take small steps.
    """

    lambda_l0: float = 0.05
    lambda_rank: float = 0.03
    lambda_shrink: float = 0.1
    warmup_steps: int = 600
    phase2_steps: int = 5200
    batch_size: int = 256
    learning_rate: float = 3e-3
    gate_lr_mult: float = 20.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    time_budget_s: float | None = 60.0
    seed: int = 0
    gate_threshold: float = 0.5
    log_alpha_init: float = 1.0

    def __post_init__(self):
        if self.lambda_l0 < 0:
            raise ValueError("lambda_l0 must be >= 0")
        if self.warmup_steps < 1 or self.phase2_steps < 1:
            raise ValueError("step counts must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


@dataclass
class StepRecord:
    step: int
    phase: int
    task_loss: float
    l0_penalty: float
    gate_probs: tuple[float, ...]


@dataclass
class TrainReport:
    config: SearchConfig
    model_config: ModelConfig
    gate_names: list[str]
    per_step: list[StepRecord]
    wall_time_s: float
    structure: FormulaStructure
    steps_phase1: int
    steps_phase2: int
    effective_ranks: dict[int, int]
    target_offset: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "model_config": self.model_config.to_dict(),
            "gate_names": self.gate_names,
            "per_step": [
                {
                    "step": r.step,
                    "phase": r.phase,
                    "task_loss": r.task_loss,
                    "l0_penalty": r.l0_penalty,
                    "gate_probs": list(r.gate_probs),
                }
                for r in self.per_step
            ],
            "wall_time_s": self.wall_time_s,
            "structure": self.structure.to_dict(),
            "steps_phase1": self.steps_phase1,
            "steps_phase2": self.steps_phase2,
            "effective_ranks": {str(m): n for m, n in self.effective_ranks.items()},
            "target_offset": self.target_offset,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def save_gate_csv(self, path: str | Path) -> None:
        """Gate trajectory as (step, gate_name, prob) rows, plot-ready."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "gate_name", "prob"])
            for rec in self.per_step:
                for name, prob in zip(self.gate_names, rec.gate_probs):
                    w.writerow([rec.step, name, repr(prob)])


class _BatchStream:
    """Cycles through seeded shuffles of the row indices."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        batch = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


def extract_structure(model: DualStreamModel, threshold: float = 0.5) -> FormulaStructure:
    """Terms whose deterministic test-time gate exceeds ``threshold``."""
    return structure_from_gates(model.gates, threshold)


def _effective_ranks(model: DualStreamModel, structure: FormulaStructure) -> dict[int, int]:
    # Post-hoc informational pruning: rank components whose product of factor
    # norms is below 1e-4x the largest component carry no usable signal.
    out: dict[int, int] = {}
    for m in structure.active_interaction_orders:
        A = model.cp_factors[m]
        norms = np.prod(np.linalg.norm(A, axis=2), axis=1)
        top = norms.max()
        out[m] = int(np.sum(norms >= 1e-4 * top)) if top > 0 else 0
    return out


def run_search(
    data: Dataset, config: SearchConfig, model_config: ModelConfig
) -> tuple[DualStreamModel, FormulaStructure, TrainReport]:
    """Run the two-phase search on a standardized training dataset.

    Fully deterministic given (seed, data, config): weight init, gate noise,
    and batch order each draw from a named sub-stream of the seed. If the
    wall-clock budget expires during phase 2 the run stops early and the
    report records the number of steps actually taken, so a re-run from the
    recorded counts (with the budget lifted) reproduces the outputs.
    """
    if data.n == 0:
        raise ValueError("empty dataset")
    if data.n < 2 * config.batch_size:
        raise ValueError(
            f"need at least 2*batch_size = {2 * config.batch_size} samples, got {data.n}"
        )
    if data.task == "multiclass":
        raise ValueError("structure search supports regression or binary targets")
    loss_kind = "mse" if data.task == "regression" else "bce"
    y = data.y.astype(np.float64)

    t0 = time.perf_counter()
    model = init_model(model_config, config.seed, config.log_alpha_init)
    batches = _BatchStream(data.n, config.batch_size, substream(config.seed, "batches"))
    gate_rng = substream(config.seed, "gate-noise")

    # all weight blocks share one learning rate: Adam's per-coordinate
    # signal-to-noise preconditioning then adaptively slows streams whose
    # gradients are heavy-tail noise (high-order powers chasing residual
    # scraps) while clean-signal streams move at full speed. The offset is a
    # 1-D convex subproblem (the target mean); it gets a fast rate so
    # residual mean error never leaks into the even-order streams.
    offset = np.zeros(())
    weight_opt = Adam(
        [
            {"params": [w for _, w in model.weight_blocks()], "lr": config.learning_rate},
            {"params": [offset], "lr": 0.1},
        ],
        beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps,
    )
    gate_opt = Adam(
        [{"params": [model.gates.log_alphas], "lr": config.learning_rate * config.gate_lr_mult}],
        beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps,
    )

    def weight_grad_groups(bundle) -> list[list[np.ndarray]]:
        return [[g for _, g in bundle.blocks()], [np.asarray(bundle.d_offset)]]

    records: list[StepRecord] = []
    step = 0

    def run_phase(phase: int, n_steps: int) -> int:
        nonlocal step
        done = 0
        model.gates.frozen_open = phase == 1
        lam = 0.0 if phase == 1 else config.lambda_l0
        for _ in range(n_steps):
            if (
                phase == 2
                and config.time_budget_s is not None
                and time.perf_counter() - t0 > config.time_budget_s
            ):
                break
            idx = batches.next()
            gate_values, state = sample_gates(model.gates, gate_rng)
            loss, grads = backward(
                model, data.X[idx], y[idx], loss_kind, gate_values, state, lam,
                offset=float(offset), lambda_rank=config.lambda_rank,
                lambda_shrink=config.lambda_shrink,
            )
            if not np.isfinite(loss):
                raise NumericalDivergenceError(step, "loss", f"phase {phase}")
            weight_opt.step(weight_grad_groups(grads))
            if phase == 2:
                gate_opt.step([[grads.d_gate_logits]])
            step += 1
            done += 1
            records.append(
                StepRecord(
                    step=step,
                    phase=phase,
                    task_loss=loss,
                    l0_penalty=expected_l0(model.gates),
                    gate_probs=tuple(deterministic_gates(model.gates)),
                )
            )
            if step % 100 == 0:
                model.assert_finite(step)
        return done

    steps1 = run_phase(1, config.warmup_steps)
    steps2 = run_phase(2, config.phase2_steps)
    model.assert_finite(step)
    model.gates.frozen_open = False

    structure = extract_structure(model, config.gate_threshold)
    report = TrainReport(
        config=config,
        model_config=model_config,
        gate_names=list(model.gates.names),
        per_step=records,
        wall_time_s=time.perf_counter() - t0,
        structure=structure,
        steps_phase1=steps1,
        steps_phase2=steps2,
        effective_ranks=_effective_ranks(model, structure),
        target_offset=float(offset),
    )
    return model, structure, report
