"""Hand-derived reverse-mode gradients of the search objective.

The computation graph of the dual-stream model is static and shallow, so
the backward pass is written out explicitly instead of through an autodiff
tape. The factored interaction term prod_j (a_{r,j} . z) gets all m factor
gradients from cached prefix/suffix products (no division, so zero factors
are exact). A central finite-difference verifier doubles as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .gates import GateBank, ReparamState, _sigmoid, expected_l0, expected_l0_grad
from .model import DualStreamModel, forward_batch

LossKind = Literal["mse", "bce"]


@dataclass
class GradientBundle:
    """Partial derivatives, shaped exactly like the model's weight arrays.

    ``d_offset`` is the derivative for the scalar loss-head offset (the
    fitted target mean); the offset sits outside f(z) itself.
    """

    d_poly: np.ndarray
    d_cp: dict[int, np.ndarray]
    d_sin: np.ndarray | None
    d_gate_logits: np.ndarray
    d_offset: float

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        out = [("poly", self.d_poly)]
        out += [(f"I{m}", g) for m, g in self.d_cp.items()]
        if self.d_sin is not None:
            out.append(("sin", self.d_sin))
        return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + exp(x)) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def task_loss_and_delta(f: np.ndarray, y: np.ndarray, loss_kind: LossKind) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and dL/df per sample."""
    n = len(f)
    if loss_kind == "mse":
        resid = f - y
        return float(np.mean(resid * resid)), 2.0 * resid / n
    if loss_kind == "bce":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("bce labels must lie in {0, 1}")
        loss = float(np.mean(_softplus(f) - y * f))
        return loss, (_sigmoid(f) - y) / n
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def _leave_one_out(P: np.ndarray) -> np.ndarray:
    """For P of shape (B, r, m), products over all positions j' != j."""
    pref = np.ones_like(P)
    suf = np.ones_like(P)
    if P.shape[2] > 1:
        pref[:, :, 1:] = np.cumprod(P[:, :, :-1], axis=2)
        suf[:, :, :-1] = np.cumprod(P[:, :, :0:-1], axis=2)[:, :, ::-1]
    return pref * suf


def rank_group_norms(factors: np.ndarray) -> np.ndarray:
    """Euclidean norm of each rank component's stacked factor vectors."""
    r = factors.shape[0]
    return np.sqrt((factors.reshape(r, -1) ** 2).sum(axis=1))


def rank_penalty(model: DualStreamModel) -> float:
    """Group-lasso over rank components: sum of per-component norms.

    Drives whole rank-1 components of every interaction order to zero, so
    each order keeps only the rank it actually needs; without it the
    interaction banks act as wide random-feature interpolators on small
    datasets and term selection degrades.
    """
    return float(sum(rank_group_norms(a).sum() for a in model.cp_factors.values()))


SIN_FEATURE_SCALE = float(np.sqrt((1.0 - np.exp(-2.0)) / 2.0))  # std of sin(z), z~N(0,1)


def stream_shrink_penalty(model: DualStreamModel) -> float:
    """Group-lasso over the element-wise streams, in output-value units.

    Each stream's weight norm is multiplied by its feature scale
    (sqrt((2k-1)!!) for z^k, std of sin(z) for the periodic term) so the
    shrinkage acts on what the stream contributes to f, not on raw
    coefficients. Redundant mixtures (e.g. sin + z^3 imitating z) then pay
    more than the exact representation and drain into it, and high-order
    streams cannot live off small-sample idiosyncrasies of their
    heavy-tailed features.
    """
    from .model import poly_feature_scale

    total = sum(
        poly_feature_scale(k + 1) * np.linalg.norm(w)
        for k, w in enumerate(model.poly_weights)
    )
    if model.sin_weights is not None:
        total += SIN_FEATURE_SCALE * np.linalg.norm(model.sin_weights)
    return float(total)


def backward(
    model: DualStreamModel,
    Z: np.ndarray,
    y: np.ndarray,
    loss_kind: LossKind,
    gate_values: np.ndarray,
    reparam_state: ReparamState | None,
    lambda_l0: float = 0.0,
    offset: float = 0.0,
    lambda_rank: float = 0.0,
    lambda_shrink: float = 0.0,
) -> tuple[float, GradientBundle]:
    """Mean task loss and exact gradients of
    (task loss + lambda_l0 * expected L0 + group shrinkage penalties).

    The prediction is f(z) + offset; the trainable offset absorbs the target
    mean that the bias-free streams cannot represent (even-order streams
    have nonzero mean on standardized inputs). Weight gradients are taken at
    the sampled gate values; gate-logit gradients combine the pathwise
    derivative through the hard-concrete reparameterization (zero wherever
    the sample clamped) with the penalty derivative. The L0 penalty
    contributes nothing to any weight gradient; the rank penalty touches
    only the interaction factors.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, d) array")
    if Z.shape[0] != y.shape[0]:
        raise ValueError("batch inputs and targets disagree in length")

    c = model.config
    f, cache = forward_batch(model, Z, gate_values, want_cache=True)
    loss, delta = task_loss_and_delta(f + offset, y, loss_kind)

    n_poly = c.k_max
    d_gate_vals = np.empty(len(model.gates))
    d_gate_vals[:n_poly] = delta @ cache.poly_vals
    d_gate_vals[n_poly : n_poly + c.m_max - 1] = delta @ cache.inter_vals
    if c.include_sin:
        d_gate_vals[-1] = delta @ cache.sin_vals

    d_poly = np.stack(
        [g * (P.T @ delta) for g, P in zip(gate_values[:n_poly], cache.powers)], axis=0
    )
    if lambda_shrink != 0.0:
        from .model import poly_feature_scale

        for k in range(c.k_max):
            w = model.poly_weights[k]
            norm = max(float(np.linalg.norm(w)), 1e-12)
            d_poly[k] = d_poly[k] + lambda_shrink * poly_feature_scale(k + 1) * w / norm

    d_cp: dict[int, np.ndarray] = {}
    for i, m in enumerate(c.interaction_orders):
        g = gate_values[n_poly + i]
        dP = _leave_one_out(cache.inner[m]) * delta[:, None, None]
        d_cp[m] = g * np.einsum("brj,bd->rjd", dP, Z)
        if lambda_rank != 0.0:
            A = model.cp_factors[m]
            norms = np.maximum(rank_group_norms(A), 1e-12)
            d_cp[m] = d_cp[m] + lambda_rank * A / norms[:, None, None]

    d_sin = None
    if c.include_sin:
        d_sin = gate_values[-1] * (cache.sin_z.T @ delta)
        if lambda_shrink != 0.0:
            w = model.sin_weights
            norm = max(float(np.linalg.norm(w)), 1e-12)
            d_sin = d_sin + lambda_shrink * SIN_FEATURE_SCALE * w / norm

    if reparam_state is None:
        pathwise = np.zeros(len(model.gates))
    else:
        pathwise = reparam_state.pathwise_factor(model.gates)
    d_logits = d_gate_vals * pathwise
    if lambda_l0 != 0.0:
        d_logits = d_logits + lambda_l0 * expected_l0_grad(model.gates)

    return loss, GradientBundle(d_poly, d_cp, d_sin, d_logits, float(np.sum(delta)))


def _gates_from_noise(bank: GateBank, u: np.ndarray, log_alphas: np.ndarray) -> np.ndarray:
    s = _sigmoid((np.log(u) - np.log1p(-u) + log_alphas) / bank.hc_beta)
    return np.clip(s * (bank.hc_zeta - bank.hc_gamma) + bank.hc_gamma, 0.0, 1.0)


def finite_diff_check(
    model: DualStreamModel,
    Z: np.ndarray,
    y: np.ndarray,
    loss_kind: LossKind = "mse",
    step: float = 1e-5,
    lambda_l0: float = 0.0,
    rng: np.random.Generator | None = None,
    offset: float = 0.0,
    lambda_rank: float = 0.0,
    lambda_shrink: float = 0.0,
) -> float:
    """Worst relative disagreement between analytic and central-difference
    gradients over every parameter (weights, gate logits, loss-head offset).

    The gate noise draw is frozen for the whole check, so gate values are a
    deterministic function of the logits throughout. Relative error uses
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    bank = model.gates
    if bank.frozen_open:
        u = None
        gate_values, state = np.ones(len(bank)), None
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        u = rng.uniform(1e-6, 1.0 - 1e-6, size=len(bank))
        gate_values = _gates_from_noise(bank, u, bank.log_alphas)
        s = _sigmoid((np.log(u) - np.log1p(-u) + bank.log_alphas) / bank.hc_beta)
        s_bar = s * (bank.hc_zeta - bank.hc_gamma) + bank.hc_gamma
        state = ReparamState(s=s, unclamped=(s_bar > 0.0) & (s_bar < 1.0))

    _, bundle = backward(
        model, Z, y, loss_kind, gate_values, state, lambda_l0, offset, lambda_rank, lambda_shrink
    )
    offset_arr = np.array([offset])

    def objective() -> float:
        if u is None:
            gv = np.ones(len(bank))
        else:
            gv = _gates_from_noise(bank, u, bank.log_alphas)
        f, _ = forward_batch(model, Z, gv)
        loss, _ = task_loss_and_delta(f + offset_arr[0], y, loss_kind)
        return (
            loss
            + lambda_l0 * expected_l0(bank)
            + lambda_rank * rank_penalty(model)
            + lambda_shrink * stream_shrink_penalty(model)
        )

    worst = 0.0

    def compare(arr: np.ndarray, grad: np.ndarray):
        nonlocal worst
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = objective()
            flat[i] = orig - step
            lo = objective()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            err = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, err)

    for (_, w), (_, g) in zip(model.weight_blocks(), bundle.blocks()):
        compare(w, g)
    compare(bank.log_alphas, bundle.d_gate_logits)
    compare(offset_arr, np.array([bundle.d_offset]))
    return worst


def gradcheck_suite(n_configs: int = 20, seed: int = 0, step: float = 1e-5) -> list[dict]:
    """Finite-difference verification over a grid of random model shapes.

    Configurations sweep d in {2,5,10}, k_max in {1,3,5}, m_max in {2,3,4},
    r in {1,4,8}, alternate MSE/BCE, spread the gate logits, and apply a
    nonzero sparsity weight so every gradient path is exercised.
    """
    from .model import ModelConfig, init_model
    from .rng import substream

    dims, ks, ms, rs = (2, 5, 10), (1, 3, 5), (2, 3, 4), (1, 4, 8)
    results = []
    for i in range(n_configs):
        rng = substream(seed, f"gradcheck-{i}")
        config = ModelConfig(
            d=dims[i % 3],
            k_max=ks[(i // 3) % 3],
            m_max=ms[(i // 9) % 3],
            r=rs[i % 3],
            include_sin=bool(i % 2),
        )
        model = init_model(config, seed=int(rng.integers(1 << 31)))
        model.gates.log_alphas[:] = rng.uniform(-2.0, 2.0, size=len(model.gates))
        Z = rng.normal(size=(8, config.d))
        loss_kind: LossKind = "mse" if i % 2 == 0 else "bce"
        y = rng.normal(size=8) if loss_kind == "mse" else rng.integers(0, 2, size=8).astype(float)
        err = finite_diff_check(
            model, Z, y, loss_kind, step=step, lambda_l0=0.05, rng=rng,
            offset=float(rng.normal(0.0, 0.3)), lambda_rank=0.01, lambda_shrink=0.01,
        )
        results.append(
            {
                "config": config.to_dict(),
                "loss": loss_kind,
                "max_relative_error": err,
            }
        )
    return results
