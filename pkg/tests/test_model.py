import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from formgate import (
    DimensionMismatchError,
    ModelConfig,
    OracleScaleError,
    count_parameters,
    forward,
    forward_batch,
    init_model,
    interaction_dense_oracle,
)
from formgate.rng import substream


def naive_forward(model, z, gates):
    """Independent term-by-term evaluation with explicit loops."""
    c = model.config
    total = 0.0
    gi = 0
    for k in range(1, c.k_max + 1):
        s = 0.0
        for j in range(c.d):
            s += model.poly_weights[k - 1][j] * z[j] ** k
        total += gates[gi] * s
        gi += 1
    for m in c.interaction_orders:
        s = 0.0
        for r in range(c.r):
            prod = 1.0
            for jj in range(m):
                prod *= sum(model.cp_factors[m][r, jj, j] * z[j] for j in range(c.d))
            s += prod
        total += gates[gi] * s
        gi += 1
    if c.include_sin:
        total += gates[gi] * sum(
            model.sin_weights[j] * math.sin(z[j]) for j in range(c.d)
        )
    return total


def test_zero_input_annihilation():
    model = init_model(ModelConfig(d=4, k_max=3, m_max=3, r=2), seed=0)
    gates = np.ones(len(model.gates))
    assert forward(model, np.zeros(4), gates) == 0.0


def test_single_interaction_hand_value():
    # d=2, only order-2 interaction active, R=1, a11=(1,0), a12=(0,1), z=(3,5)
    config = ModelConfig(d=2, k_max=1, m_max=2, r=1, include_sin=False)
    model = init_model(config, seed=0)
    model.poly_weights[:] = 0.0
    model.cp_factors[2][0, 0] = [1.0, 0.0]
    model.cp_factors[2][0, 1] = [0.0, 1.0]
    gates = np.array([0.0, 1.0])
    assert forward(model, np.array([3.0, 5.0]), gates) == pytest.approx(15.0, abs=0)


def test_forward_matches_naive_evaluator():
    model = init_model(ModelConfig(d=3, k_max=2, m_max=2, r=2), seed=123)
    rng = substream(99, "test-naive")
    for _ in range(20):
        z = rng.normal(size=3)
        gates = rng.uniform(0, 1, size=len(model.gates))
        assert forward(model, z, gates) == pytest.approx(
            naive_forward(model, z, gates), abs=1e-12
        )


def test_dense_oracle_hand_expanded():
    # W = a1 (x) a2 = [[3,4],[6,8]], z=(1,1): z^T W z = 21 = (1+2)(3+4)
    factors = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    assert interaction_dense_oracle(factors, np.array([1.0, 1.0])) == pytest.approx(21.0)


def test_dense_oracle_zero_input():
    rng = substream(5, "oracle-zero")
    factors = rng.normal(size=(2, 3, 4))
    assert interaction_dense_oracle(factors, np.zeros(4)) == 0.0


def test_dense_vs_factored_fixed_seed():
    rng = substream(7, "oracle")
    factors = rng.normal(size=(2, 3, 3))
    z = rng.normal(size=3)
    dense = interaction_dense_oracle(factors, z)
    factored = float(np.einsum("d,rjd->rj", z, factors).prod(axis=1).sum())
    assert abs(dense - factored) < 1e-9


def test_dense_oracle_refuses_large_scale():
    rng = substream(8, "oracle-big")
    with pytest.raises(OracleScaleError):
        interaction_dense_oracle(rng.normal(size=(1, 4, 3)), np.zeros(3))
    with pytest.raises(OracleScaleError):
        interaction_dense_oracle(rng.normal(size=(1, 2, 5)), np.zeros(5))


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(1, 4),
    m=st.integers(2, 3),
    r=st.integers(1, 3),
    seed=st.integers(0, 10_000),
)
def test_dense_vs_factored_property(d, m, r, seed):
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(r, m, d))
    z = rng.normal(size=d)
    dense = interaction_dense_oracle(factors, z)
    factored = float(np.einsum("d,rjd->rj", z, factors).prod(axis=1).sum())
    assert abs(dense - factored) < 1e-9


def test_homogeneity_per_stream():
    config = ModelConfig(d=3, k_max=4, m_max=3, r=2, include_sin=False)
    model = init_model(config, seed=11)
    rng = substream(12, "homog")
    z = rng.normal(size=3)
    c = 1.7
    n_gates = len(model.gates)
    for gi in range(n_gates):
        gates = np.zeros(n_gates)
        gates[gi] = 1.0
        degree = gi + 1 if gi < config.k_max else gi - config.k_max + 2
        ratio = forward(model, c * z, gates) / forward(model, z, gates)
        assert ratio == pytest.approx(c ** degree, rel=1e-9)


def test_gate_linearity():
    model = init_model(ModelConfig(d=3, k_max=2, m_max=2, r=2), seed=3)
    rng = substream(4, "gatelin")
    z = rng.normal(size=3)
    base = rng.uniform(0, 1, size=len(model.gates))
    for gi in range(len(model.gates)):
        lo, hi = base.copy(), base.copy()
        lo[gi], hi[gi] = 0.2, 0.8
        mid = base.copy()
        mid[gi] = 0.5
        f_lo, f_hi, f_mid = (forward(model, z, g) for g in (lo, hi, mid))
        assert f_mid == pytest.approx(0.5 * (f_lo + f_hi), rel=1e-9, abs=1e-12)


def test_count_parameters_examples():
    assert count_parameters(ModelConfig(d=10, k_max=5, m_max=2, r=8))["interaction"] == 160
    assert count_parameters(ModelConfig(d=10, k_max=5, m_max=2, r=8))["dense_equivalent"] == 100
    counts = count_parameters(ModelConfig(d=100, k_max=5, m_max=4, r=8, include_sin=True))
    assert counts["poly"] == 500
    assert counts["interaction"] == 7200
    assert counts["sin"] == 100
    assert counts["dense_equivalent"] == 100 ** 2 + 100 ** 3 + 100 ** 4 == 101_010_000


def test_factor_vector_count_invariant():
    config = ModelConfig(d=5, k_max=2, m_max=4, r=3)
    model = init_model(config, seed=0)
    expected = sum(m * config.r for m in config.interaction_orders)
    assert model.n_factor_vectors() == expected


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d=0)
    with pytest.raises(ValueError):
        ModelConfig(d=3, m_max=1)
    with pytest.raises(ValueError):
        ModelConfig(d=3, k_max=0)
    with pytest.raises(ValueError):
        ModelConfig(d=3, r=0)


def test_dimension_mismatch_errors():
    model = init_model(ModelConfig(d=3), seed=0)
    gates = np.ones(len(model.gates))
    with pytest.raises(DimensionMismatchError):
        forward(model, np.zeros(4), gates)
    with pytest.raises(DimensionMismatchError):
        forward(model, np.zeros(3), gates[:-1])


def test_forward_batch_matches_single():
    model = init_model(ModelConfig(d=4, k_max=3, m_max=3, r=2), seed=21)
    rng = substream(22, "batch")
    Z = rng.normal(size=(6, 4))
    gates = rng.uniform(0, 1, size=len(model.gates))
    batch, _ = forward_batch(model, Z, gates)
    for i in range(6):
        assert batch[i] == pytest.approx(forward(model, Z[i], gates), rel=1e-12)
