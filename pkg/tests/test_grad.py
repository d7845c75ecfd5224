import numpy as np
import pytest

from formgate import ModelConfig, backward, finite_diff_check, init_model
from formgate.gates import ReparamState, sample_gates
from formgate.grad import gradcheck_suite, task_loss_and_delta
from formgate.rng import substream


def small_model(seed=0, **kw):
    cfg = dict(d=3, k_max=2, m_max=2, r=2)
    cfg.update(kw)
    return init_model(ModelConfig(**cfg), seed=seed)


def test_zero_sample_zero_weight_gradients():
    model = small_model()
    gates = np.ones(len(model.gates))
    loss, g = backward(model, np.zeros((1, 3)), np.zeros(1), "mse", gates, None)
    assert loss == 0.0
    for _, arr in g.blocks():
        assert np.all(arr == 0.0)


def test_gradients_match_finite_differences():
    model = small_model(seed=42)
    rng = substream(1, "fd")
    Z = rng.normal(size=(8, 3))
    y = rng.normal(size=8)
    err = finite_diff_check(model, Z, y, "mse", step=1e-5, lambda_l0=0.05,
                            rng=substream(2, "fd-noise"))
    assert err < 1e-4


def test_clamped_gate_zeroes_factor_gradients():
    # order-3 interaction gate hard-zero: all order-3 factor grads exactly 0
    model = init_model(ModelConfig(d=3, k_max=2, m_max=3, r=2), seed=7)
    gates = np.ones(len(model.gates))
    i3 = model.gates.names.index("I3")
    gates[i3] = 0.0
    state = ReparamState(
        s=np.full(len(gates), 0.5),
        unclamped=np.zeros(len(gates), dtype=bool),  # clamped everywhere
    )
    rng = substream(3, "clamp")
    _, g = backward(model, rng.normal(size=(4, 3)), rng.normal(size=4), "mse", gates, state)
    assert np.all(g.d_cp[3] == 0.0)
    assert np.all(g.d_gate_logits == 0.0)  # pathwise zero and lambda=0


def test_l0_penalty_has_no_weight_gradient():
    model = small_model(seed=5)
    rng = substream(6, "pen")
    Z, y = rng.normal(size=(6, 3)), rng.normal(size=6)
    gates, state = sample_gates(model.gates, substream(7, "noise"))
    _, g0 = backward(model, Z, y, "mse", gates, state, lambda_l0=0.0)
    _, g1 = backward(model, Z, y, "mse", gates, state, lambda_l0=10.0)
    for (_, a), (_, b) in zip(g0.blocks(), g1.blocks()):
        assert np.array_equal(a, b)
    assert not np.array_equal(g0.d_gate_logits, g1.d_gate_logits)


def test_truncation_error_grows_with_step():
    # cubic terms make central differences degrade at large step
    model = small_model(seed=8, k_max=3)
    rng = substream(9, "steps")
    Z, y = rng.normal(size=(8, 3)), rng.normal(size=8)
    fine = finite_diff_check(model, Z, y, "mse", step=1e-5, rng=substream(10, "u"))
    coarse = finite_diff_check(model, Z, y, "mse", step=1e-1, rng=substream(10, "u"))
    assert coarse > fine


def test_all_zero_model_perfect_on_zero_targets():
    model = small_model(seed=11)
    for _, w in model.weight_blocks():
        w[...] = 0.0
    rng = substream(12, "z")
    Z = rng.normal(size=(5, 3))
    err = finite_diff_check(model, Z, np.zeros(5), "mse", rng=substream(13, "u"))
    assert err == 0.0


def test_bce_rejects_soft_labels():
    model = small_model()
    gates = np.ones(len(model.gates))
    with pytest.raises(ValueError):
        backward(model, np.zeros((2, 3)), np.array([0.5, 1.0]), "bce", gates, None)


def test_empty_batch_rejected():
    model = small_model()
    gates = np.ones(len(model.gates))
    with pytest.raises(ValueError):
        backward(model, np.zeros((0, 3)), np.zeros(0), "mse", gates, None)


def test_losses_non_negative():
    rng = substream(14, "loss")
    f = rng.normal(size=50) * 10
    y_reg = rng.normal(size=50)
    y_cls = rng.integers(0, 2, size=50).astype(float)
    assert task_loss_and_delta(f, y_reg, "mse")[0] >= 0.0
    assert task_loss_and_delta(f, y_cls, "bce")[0] >= 0.0


def test_bce_stable_at_extreme_logits():
    f = np.array([1e4, -1e4])
    y = np.array([1.0, 0.0])
    loss, delta = task_loss_and_delta(f, y, "bce")
    assert np.isfinite(loss) and loss < 1e-10
    assert np.all(np.isfinite(delta))


def test_bce_gradcheck():
    model = small_model(seed=15)
    rng = substream(16, "bce")
    Z = rng.normal(size=(8, 3))
    y = rng.integers(0, 2, size=8).astype(float)
    err = finite_diff_check(model, Z, y, "bce", step=1e-5, lambda_l0=0.02,
                            rng=substream(17, "u"), offset=0.3)
    assert err < 1e-4


def test_offset_gradient():
    model = small_model(seed=18)
    gates = np.ones(len(model.gates))
    rng = substream(19, "off")
    Z, y = rng.normal(size=(16, 3)), rng.normal(size=16)
    _, g = backward(model, Z, y, "mse", gates, None, offset=0.7)
    from formgate.model import forward_batch

    f, _ = forward_batch(model, Z, gates)
    expected = float(np.mean(2.0 * (f + 0.7 - y)))
    assert g.d_offset == pytest.approx(expected, rel=1e-12)


def test_gradcheck_suite_passes_spec_grid():
    results = gradcheck_suite(n_configs=20, seed=0)
    assert len(results) == 20
    dims = {r["config"]["d"] for r in results}
    assert dims == {2, 5, 10}
    worst = max(r["max_relative_error"] for r in results)
    assert worst < 1e-4
