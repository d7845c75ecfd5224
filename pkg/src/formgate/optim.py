"""Minimal in-place optimizers over lists of numpy arrays.

Parameter groups allow different learning rates (the gate logits train
faster than the weights during structure search).
"""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, param_groups: list[dict], beta1=0.9, beta2=0.999, eps=1e-8):
        # each group: {"params": [arrays], "lr": float}
        self.groups = param_groups
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [[np.zeros_like(p) for p in g["params"]] for g in param_groups]
        self.v = [[np.zeros_like(p) for p in g["params"]] for g in param_groups]

    def step(self, grad_groups: list[list[np.ndarray]]):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for gi, group in enumerate(self.groups):
            lr = group["lr"]
            for pi, (p, g) in enumerate(zip(group["params"], grad_groups[gi])):
                m = self.m[gi][pi]
                v = self.v[gi][pi]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class RMSProp:
    def __init__(self, param_groups: list[dict], decay=0.99, eps=1e-8):
        self.groups = param_groups
        self.decay = decay
        self.eps = eps
        self.cache = [[np.zeros_like(p) for p in g["params"]] for g in param_groups]

    def step(self, grad_groups: list[list[np.ndarray]]):
        for gi, group in enumerate(self.groups):
            lr = group["lr"]
            for pi, (p, g) in enumerate(zip(group["params"], grad_groups[gi])):
                c = self.cache[gi][pi]
                c *= self.decay
                c += (1.0 - self.decay) * (g * g)
                p -= lr * g / (np.sqrt(c) + self.eps)


def make_optimizer(kind: str, param_groups: list[dict], **kw):
    if kind == "adam":
        return Adam(param_groups, **kw)
    if kind == "rmsprop":
        return RMSProp(param_groups, **kw)
    raise ValueError(f"unknown optimizer {kind!r}")
