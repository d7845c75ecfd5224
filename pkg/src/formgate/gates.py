"""Stochastic binary gates with a differentiable L0 relaxation.

Each candidate term (one per polynomial order, one per interaction order,
one for the periodic term) carries a hard-concrete gate: a stretched,
clamped sigmoid of logistic noise. The expected-L0 penalty is the summed
probability that each gate is nonzero, which is differentiable in the gate
logits. Hyperparameters follow the standard hard-concrete values
(beta=2/3, gamma=-0.1, zeta=1.1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .structure import FormulaStructure

_EPS_U = 1e-6


def _sigmoid(x):
    # stable for large |x|: never exponentiates a large positive number
    arr = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def gate_names(k_max: int, m_max: int, include_sin: bool) -> list[str]:
    """Gate ordering shared everywhere: P1..PK, I2..IM, then sin."""
    names = [f"P{k}" for k in range(1, k_max + 1)]
    names += [f"I{m}" for m in range(2, m_max + 1)]
    if include_sin:
        names.append("sin")
    return names


@dataclass
class GateBank:
    """One hard-concrete gate per candidate term.

    ``log_alphas`` is ordered [P1..PK, I2..IM, sin]; ``frozen_open`` forces
    every sampled gate to exactly 1 (warm-up phase).
    """

    log_alphas: np.ndarray
    names: list[str]
    hc_beta: float = 2.0 / 3.0
    hc_gamma: float = -0.1
    hc_zeta: float = 1.1
    frozen_open: bool = False

    def __post_init__(self):
        self.log_alphas = np.asarray(self.log_alphas, dtype=np.float64)
        if self.log_alphas.ndim != 1 or len(self.log_alphas) != len(self.names):
            raise ValueError("log_alphas must be one scalar per gate name")
        if not (self.hc_gamma < 0.0 < 1.0 < self.hc_zeta):
            raise ValueError("hard-concrete stretch must satisfy gamma < 0 < 1 < zeta")
        if self.hc_beta <= 0.0:
            raise ValueError("hard-concrete temperature must be positive")

    @classmethod
    def create(cls, k_max: int, m_max: int, include_sin: bool, log_alpha_init: float = 1.0) -> "GateBank":
        names = gate_names(k_max, m_max, include_sin)
        return cls(log_alphas=np.full(len(names), float(log_alpha_init)), names=names)

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class ReparamState:
    """Per-gate quantities cached by :func:`sample_gates` for the backward pass."""

    s: np.ndarray          # inner sigmoid, before stretch
    unclamped: np.ndarray  # True where the stretched sample fell inside (0, 1)

    def pathwise_factor(self, bank: GateBank) -> np.ndarray:
        """d gate / d log_alpha at the sampled noise; exactly 0 in the clamped region."""
        span = bank.hc_zeta - bank.hc_gamma
        return np.where(self.unclamped, span * self.s * (1.0 - self.s) / bank.hc_beta, 0.0)


def sample_gates(bank: GateBank, rng: np.random.Generator) -> tuple[np.ndarray, ReparamState | None]:
    """Draw one gate value in [0, 1] per term.

    With ``frozen_open`` every gate is exactly 1 and there is no pathwise
    state. Otherwise u ~ U(eps, 1-eps) is pushed through the hard-concrete
    transform s = sigmoid((ln u - ln(1-u) + log_alpha)/beta), stretched to
    s*(zeta-gamma)+gamma and clamped to [0, 1].
    """
    n = len(bank)
    if bank.frozen_open:
        return np.ones(n), None
    u = rng.uniform(_EPS_U, 1.0 - _EPS_U, size=n)
    s = _sigmoid((np.log(u) - np.log1p(-u) + bank.log_alphas) / bank.hc_beta)
    s_bar = s * (bank.hc_zeta - bank.hc_gamma) + bank.hc_gamma
    gates = np.clip(s_bar, 0.0, 1.0)
    state = ReparamState(s=s, unclamped=(s_bar > 0.0) & (s_bar < 1.0))
    return gates, state


def expected_l0(bank: GateBank) -> float:
    """Summed probability that each gate is nonzero (the sparsity penalty)."""
    return float(np.sum(gate_open_probs(bank)))


def gate_open_probs(bank: GateBank) -> np.ndarray:
    shift = bank.hc_beta * np.log(-bank.hc_gamma / bank.hc_zeta)
    return _sigmoid(bank.log_alphas - shift)


def expected_l0_grad(bank: GateBank) -> np.ndarray:
    """d expected_l0 / d log_alpha, one entry per gate."""
    p = gate_open_probs(bank)
    return p * (1.0 - p)


def deterministic_gates(bank: GateBank) -> np.ndarray:
    """Test-time gates: the clamped mean transform of each hard-concrete gate."""
    s_bar = _sigmoid(bank.log_alphas) * (bank.hc_zeta - bank.hc_gamma) + bank.hc_gamma
    return np.clip(s_bar, 0.0, 1.0)


def structure_from_gates(bank: GateBank, threshold: float = 0.5) -> FormulaStructure:
    """Active terms are those whose deterministic gate exceeds ``threshold``."""
    z_hat = deterministic_gates(bank)
    poly, inter, sin_active = [], [], False
    for name, z in zip(bank.names, z_hat):
        if z <= threshold:
            continue
        if name == "sin":
            sin_active = True
        elif name.startswith("P"):
            poly.append(int(name[1:]))
        else:
            inter.append(int(name[1:]))
    return FormulaStructure(tuple(poly), tuple(inter), sin_active)
