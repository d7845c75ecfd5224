"""The gated dual-stream search model and its exact forward evaluation.

The model scores an input vector z as a gated sum of three streams:

* polynomial stream: sum_k g_k * (w_k . z**k), element-wise powers;
* interaction stream: sum_m g_m * sum_r prod_j (a_{r,j} . z), a rank-R
  factorization of the order-m interaction weight tensor;
* periodic term: g_s * (D . sin(z)).

The factored interaction evaluates in O(m R d) per order instead of the
O(d^m) a dense order-m weight tensor would need; a dense-tensor oracle is
provided at test scale to pin the equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, OracleScaleError
from .gates import GateBank
from .rng import substream

SEARCH_INIT_SCALE = 0.1  # target output std of every stream at init


def poly_feature_scale(k: int) -> float:
    """Std of z^k per coordinate for standard-normal z: sqrt((2k-1)!!).

    Element-wise powers of standardized inputs have wildly different scales
    across orders; init and per-order learning rates divide by this so all
    polynomial streams start equally loud and move at equal value-speed.
    """
    return float(np.sqrt(np.prod(np.arange(2 * k - 1, 0, -2)))) if k > 1 else 1.0


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the search model.

    d: input dimension; k_max: highest element-wise polynomial order;
    m_max: highest interaction order (>= 2); r: factorization rank;
    include_sin: whether the periodic term is a candidate.
    """

    d: int
    k_max: int = 5
    m_max: int = 4
    r: int = 8
    include_sin: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.m_max < 2:
            raise ValueError("m_max must be >= 2")
        if self.r < 1:
            raise ValueError("r must be >= 1")

    @property
    def interaction_orders(self) -> range:
        return range(2, self.m_max + 1)

    @property
    def n_gates(self) -> int:
        return self.k_max + (self.m_max - 1) + (1 if self.include_sin else 0)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k_max": self.k_max,
            "m_max": self.m_max,
            "r": self.r,
            "include_sin": self.include_sin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            d=int(d["d"]),
            k_max=int(d["k_max"]),
            m_max=int(d["m_max"]),
            r=int(d["r"]),
            include_sin=bool(d["include_sin"]),
        )


@dataclass
class DualStreamModel:
    """All stage-1 learnables.

    poly_weights: (k_max, d); cp_factors[m]: (r, m, d) with factor j of rank
    component r at [r, j]; sin_weights: (d,) or None when the periodic term
    is disabled; gates: one hard-concrete gate per candidate term.
    """

    config: ModelConfig
    poly_weights: np.ndarray
    cp_factors: dict[int, np.ndarray]
    sin_weights: np.ndarray | None
    gates: GateBank

    def __post_init__(self):
        c = self.config
        if self.poly_weights.shape != (c.k_max, c.d):
            raise DimensionMismatchError(
                "polynomial stream", f"expected weights {(c.k_max, c.d)}, got {self.poly_weights.shape}"
            )
        for m in c.interaction_orders:
            got = self.cp_factors[m].shape
            if got != (c.r, m, c.d):
                raise DimensionMismatchError(
                    f"interaction stream order {m}", f"expected factors {(c.r, m, c.d)}, got {got}"
                )
        if c.include_sin:
            if self.sin_weights is None or self.sin_weights.shape != (c.d,):
                raise DimensionMismatchError("periodic term", f"expected sin weights ({c.d},)")
        if len(self.gates) != c.n_gates:
            raise DimensionMismatchError(
                "gates", f"expected {c.n_gates} gates, got {len(self.gates)}"
            )

    def n_factor_vectors(self) -> int:
        return sum(m * self.config.r for m in self.config.interaction_orders)

    def weight_blocks(self) -> list[tuple[str, np.ndarray]]:
        """Ordered named views of every weight array (gate logits excluded)."""
        blocks = [("poly", self.poly_weights)]
        blocks += [(f"I{m}", self.cp_factors[m]) for m in self.config.interaction_orders]
        if self.sin_weights is not None:
            blocks.append(("sin", self.sin_weights))
        return blocks

    def assert_finite(self, step: int = -1):
        from .errors import NumericalDivergenceError

        for name, w in self.weight_blocks():
            if not np.all(np.isfinite(w)):
                raise NumericalDivergenceError(step, name, "weights left the finite range")
        if not np.all(np.isfinite(self.gates.log_alphas)):
            raise NumericalDivergenceError(step, "gate_logits", "logits left the finite range")

    def copy(self) -> "DualStreamModel":
        gb = GateBank(
            log_alphas=self.gates.log_alphas.copy(),
            names=list(self.gates.names),
            hc_beta=self.gates.hc_beta,
            hc_gamma=self.gates.hc_gamma,
            hc_zeta=self.gates.hc_zeta,
            frozen_open=self.gates.frozen_open,
        )
        return DualStreamModel(
            config=self.config,
            poly_weights=self.poly_weights.copy(),
            cp_factors={m: a.copy() for m, a in self.cp_factors.items()},
            sin_weights=None if self.sin_weights is None else self.sin_weights.copy(),
            gates=gb,
        )


def init_model(config: ModelConfig, seed: int, log_alpha_init: float = 1.0) -> DualStreamModel:
    """Fresh search model with stream-balanced initialization.

    Every stream starts with output std ~ SEARCH_INIT_SCALE on standardized
    inputs: polynomial weights scale as 1/sqrt(d * (2k-1)!!), interaction
    factors so the R-summed rank products match, the sine weights like the
    linear term. A uniform per-entry scale would let the order-5 stream
    start hundreds of times louder than the linear one at large d.
    """
    rng = substream(seed, "search-init")
    d, s = config.d, SEARCH_INIT_SCALE
    poly = np.stack(
        [
            rng.normal(0.0, s / (np.sqrt(d) * poly_feature_scale(k)), size=d)
            for k in range(1, config.k_max + 1)
        ]
    )
    cp = {}
    for m in config.interaction_orders:
        # each (a . z) ~ N(0, t^2) with t chosen so sum_r prod_j ~ std s
        t = (s / np.sqrt(config.r)) ** (1.0 / m)
        cp[m] = rng.normal(0.0, t / np.sqrt(d), size=(config.r, m, d))
    sin_w = rng.normal(0.0, s / np.sqrt(d), size=d) if config.include_sin else None
    gates = GateBank.create(config.k_max, config.m_max, config.include_sin, log_alpha_init)
    return DualStreamModel(config, poly, cp, sin_w, gates)


@dataclass
class ForwardCache:
    """Intermediates reused by the analytic backward pass."""

    Z: np.ndarray                     # (B, d)
    powers: list[np.ndarray]          # Z**k for k = 1..k_max, each (B, d)
    sin_z: np.ndarray | None          # (B, d)
    inner: dict[int, np.ndarray]      # per order m: (B, r, m) inner products a_{r,j}.z
    poly_vals: np.ndarray             # (B, k_max) stream values before gating
    inter_vals: np.ndarray            # (B, m_max-1)
    sin_vals: np.ndarray | None       # (B,)


def _check_batch(Z: np.ndarray, d: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != d:
        raise DimensionMismatchError("input", f"expected vectors of length {d}, got shape {Z.shape}")
    return Z


def forward_batch(
    model: DualStreamModel, Z: np.ndarray, gate_values: np.ndarray, want_cache: bool = False
) -> tuple[np.ndarray, ForwardCache | None]:
    """Evaluate f on a batch of rows. Deterministic given inputs."""
    c = model.config
    Z = _check_batch(Z, c.d)
    gate_values = np.asarray(gate_values, dtype=np.float64)
    if gate_values.shape != (len(model.gates),):
        raise DimensionMismatchError(
            "gates", f"expected {len(model.gates)} gate values, got shape {gate_values.shape}"
        )

    # element-wise powers by repeated multiplication: exact at 0, keeps sign
    powers = [Z]
    for _ in range(c.k_max - 1):
        powers.append(powers[-1] * Z)
    poly_vals = np.stack([P @ w for P, w in zip(powers, model.poly_weights)], axis=1)

    inner: dict[int, np.ndarray] = {}
    inter_cols = []
    for m in c.interaction_orders:
        A = model.cp_factors[m]                       # (r, m, d)
        p = np.einsum("bd,rjd->brj", Z, A)            # inner products
        inner[m] = p
        inter_cols.append(p.prod(axis=2).sum(axis=1))
    inter_vals = np.stack(inter_cols, axis=1)

    sin_z = sin_vals = None
    if c.include_sin:
        sin_z = np.sin(Z)
        sin_vals = sin_z @ model.sin_weights

    n_poly, n_inter = c.k_max, c.m_max - 1
    f = poly_vals @ gate_values[:n_poly] + inter_vals @ gate_values[n_poly : n_poly + n_inter]
    if c.include_sin:
        f = f + gate_values[-1] * sin_vals

    cache = None
    if want_cache:
        cache = ForwardCache(Z, powers, sin_z, inner, poly_vals, inter_vals, sin_vals)
    return f, cache


def forward(model: DualStreamModel, z: np.ndarray, gate_values: np.ndarray) -> float:
    """f(z) for a single input vector."""
    f, _ = forward_batch(model, np.asarray(z, dtype=np.float64)[None, :], gate_values)
    return float(f[0])


_ORACLE_MAX_D = 4
_ORACLE_MAX_M = 3


def interaction_dense_oracle(factors: np.ndarray, z: np.ndarray) -> float:
    """Contract the materialized order-m weight tensor with z x ... x z.

    ``factors`` has shape (r, m, d). Builds W = sum_r a_r1 o ... o a_rm as a
    dense tensor and contracts every mode with z; must agree with the
    factored form sum_r prod_j (a_{r,j} . z). Test-scale only.
    """
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim != 3:
        raise DimensionMismatchError("interaction stream", "factors must have shape (r, m, d)")
    r, m, d = factors.shape
    if d > _ORACLE_MAX_D or m > _ORACLE_MAX_M:
        raise OracleScaleError(
            f"dense oracle materializes d^m = {d}^{m} entries; refused beyond "
            f"d <= {_ORACLE_MAX_D}, m <= {_ORACLE_MAX_M} (test-only)"
        )
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (d,):
        raise DimensionMismatchError("input", f"expected vector of length {d}, got {z.shape}")

    dense = np.zeros((d,) * m)
    for i in range(r):
        outer = factors[i, 0]
        for j in range(1, m):
            outer = np.multiply.outer(outer, factors[i, j])
        dense += outer
    for _ in range(m):
        dense = dense @ z
    return float(dense)


def count_parameters(config: ModelConfig) -> dict[str, int]:
    """Parameter tally per stream plus the dense-tensor equivalent.

    ``dense_equivalent`` is the sum over interaction orders of d^m, as an
    unbounded Python integer.
    """
    interaction = sum(m * config.r * config.d for m in config.interaction_orders)
    dense_equivalent = sum(int(config.d) ** m for m in config.interaction_orders)
    return {
        "poly": config.k_max * config.d,
        "interaction": interaction,
        "sin": config.d if config.include_sin else 0,
        "dense_equivalent": dense_equivalent,
    }
