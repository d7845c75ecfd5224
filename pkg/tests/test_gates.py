import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from formgate.gates import (
    GateBank,
    deterministic_gates,
    expected_l0,
    expected_l0_grad,
    gate_names,
    sample_gates,
    structure_from_gates,
)
from formgate.rng import substream


def make_bank(log_alphas, include_sin=True):
    las = np.asarray(log_alphas, dtype=float)
    k_max = 2
    m_max = 2
    names = gate_names(k_max, m_max, include_sin)
    assert len(names) == len(las)
    return GateBank(log_alphas=las, names=names)


def test_frozen_open_gates_are_exactly_one():
    bank = GateBank.create(3, 3, True, log_alpha_init=-5.0)
    bank.frozen_open = True
    gates, state = sample_gates(bank, substream(0, "g"))
    assert np.all(gates == 1.0)
    assert state is None


def test_saturated_logits_clamp():
    bank = make_bank([20.0, -20.0, 20.0, -20.0])
    rng = substream(1, "sat")
    for _ in range(50):
        gates, _ = sample_gates(bank, rng)
        assert gates[0] == 1.0 and gates[2] == 1.0
        assert gates[1] == 0.0 and gates[3] == 0.0


def test_expected_l0_closed_form():
    # per-gate penalty at log_alpha = 0 equals sigmoid(-(2/3) ln(0.1/1.1)),
    # evaluated independently here
    bank = GateBank.create(5, 4, True, log_alpha_init=0.0)
    per_gate = 1.0 / (1.0 + math.exp((2.0 / 3.0) * math.log(0.1 / 1.1)))
    assert per_gate == pytest.approx(0.8318, abs=5e-4)
    assert expected_l0(bank) == pytest.approx(per_gate * len(bank), rel=1e-12)


def test_expected_l0_limits():
    assert expected_l0(make_bank([-60.0] * 4)) == pytest.approx(0.0, abs=1e-20)
    assert expected_l0(make_bank([60.0] * 4)) == pytest.approx(4.0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(la=st.floats(-30, 30), delta=st.floats(1e-4, 2.0))
def test_expected_l0_strictly_increasing(la, delta):
    lo = expected_l0(make_bank([la, 0, 0, 0]))
    hi = expected_l0(make_bank([la + delta, 0, 0, 0]))
    assert hi > lo


def test_expected_l0_grad_matches_finite_difference():
    bank = make_bank([0.3, -1.2, 2.0, 0.0])
    g = expected_l0_grad(bank)
    eps = 1e-6
    for i in range(4):
        las = bank.log_alphas.copy()
        las[i] += eps
        hi = expected_l0(make_bank(las))
        las[i] -= 2 * eps
        lo = expected_l0(make_bank(las))
        assert g[i] == pytest.approx((hi - lo) / (2 * eps), rel=1e-5)


def test_gate_count_rule():
    assert len(GateBank.create(5, 4, True)) == 5 + 3 + 1
    assert len(GateBank.create(5, 4, False)) == 5 + 3
    assert len(GateBank.create(1, 2, False)) == 2


def test_hard_concrete_parameter_validation():
    with pytest.raises(ValueError):
        GateBank(np.zeros(2), ["P1", "I2"], hc_gamma=0.1)
    with pytest.raises(ValueError):
        GateBank(np.zeros(2), ["P1", "I2"], hc_beta=0.0)
    with pytest.raises(ValueError):
        GateBank(np.zeros(2), ["P1", "I2"], hc_zeta=0.9)


def test_structure_extraction_saturated():
    names = gate_names(5, 4, True)
    las = np.full(len(names), -20.0)
    las[names.index("P2")] = 20.0
    las[names.index("I2")] = 20.0
    bank = GateBank(las, names)
    assert structure_from_gates(bank).canonical_string == "P2(x) + I2(x)"


def test_structure_extraction_all_closed_is_zero():
    bank = GateBank.create(5, 4, True, log_alpha_init=-20.0)
    s = structure_from_gates(bank)
    assert s.is_empty
    assert s.canonical_string == "0"


def test_structure_extraction_threshold_boundary():
    # pick log_alpha so the deterministic gate is ~0.7, then move threshold
    names = gate_names(1, 2, False)
    target = 0.7
    s_needed = (target + 0.1) / 1.2
    la = math.log(s_needed / (1 - s_needed))
    bank = GateBank(np.array([la, -20.0]), names)
    z_hat = deterministic_gates(bank)[0]
    assert z_hat == pytest.approx(0.7, abs=1e-9)
    assert structure_from_gates(bank, threshold=0.5).active_poly_orders == (1,)
    assert structure_from_gates(bank, threshold=0.9).active_poly_orders == ()


def test_sampled_gates_within_unit_interval():
    bank = make_bank([0.0, 0.5, -0.5, 1.0])
    rng = substream(9, "range")
    for _ in range(200):
        gates, state = sample_gates(bank, rng)
        assert np.all(gates >= 0.0) and np.all(gates <= 1.0)
        assert state is not None
