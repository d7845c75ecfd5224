"""Model checkpointing as a single JSON document.

Floats are emitted through Python's shortest round-trip repr (at most 17
significant digits), so finite doubles survive a save/load cycle bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gates import GateBank, gate_names
from .model import DualStreamModel, ModelConfig


def model_to_dict(model: DualStreamModel) -> dict:
    c = model.config
    return {
        "config": c.to_dict(),
        "poly_weights": model.poly_weights.tolist(),
        "cp_factors": [model.cp_factors[m].tolist() for m in c.interaction_orders],
        "sin_weights": None if model.sin_weights is None else model.sin_weights.tolist(),
        "gate_log_alphas": model.gates.log_alphas.tolist(),
    }


def model_from_dict(doc: dict) -> DualStreamModel:
    config = ModelConfig.from_dict(doc["config"])
    poly = np.asarray(doc["poly_weights"], dtype=np.float64)
    cp = {
        m: np.asarray(doc["cp_factors"][i], dtype=np.float64)
        for i, m in enumerate(config.interaction_orders)
    }
    sin_w = None if doc["sin_weights"] is None else np.asarray(doc["sin_weights"], dtype=np.float64)
    gates = GateBank(
        log_alphas=np.asarray(doc["gate_log_alphas"], dtype=np.float64),
        names=gate_names(config.k_max, config.m_max, config.include_sin),
    )
    return DualStreamModel(config, poly, cp, sin_w, gates)


def save_model(model: DualStreamModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> DualStreamModel:
    return model_from_dict(json.loads(Path(path).read_text()))
