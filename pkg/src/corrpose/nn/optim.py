"""Adam optimizer with bias-corrected moments and per-group learning rates."""
from __future__ import annotations

import numpy as np


class Adam:
    """groups: list of {"params": {name: Tensor}, "lr": float}."""

    def __init__(self, groups, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.groups = []
        for g in groups:
            params = dict(g["params"])
            self.groups.append({"params": params, "lr": float(g["lr"])})
        self._m = {}
        self._v = {}
        for g in self.groups:
            for name, p in g["params"].items():
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"].values():
                p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for g in self.groups:
            lr = g["lr"]
            for name, p in g["params"].items():
                grad = p.grad
                if grad is None:
                    grad = np.zeros_like(p.data)
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                mhat = m / c1
                vhat = v / c2
                p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self) -> dict:
        state = {"adam.step": np.array([self.step_count], dtype=np.int64)}
        for name in self._m:
            state[f"adam.m.{name}"] = self._m[name].copy()
            state[f"adam.v.{name}"] = self._v[name].copy()
        return state

    def load_state_dict(self, state: dict):
        from .checkpoint import CheckpointShapeError
        self.step_count = int(np.asarray(state["adam.step"]).ravel()[0])
        for name in self._m:
            for prefix, buf in (("adam.m.", self._m), ("adam.v.", self._v)):
                key = prefix + name
                if key not in state:
                    raise CheckpointShapeError(f"missing optimizer tensor {key}")
                arr = np.asarray(state[key])
                if arr.shape != buf[name].shape:
                    raise CheckpointShapeError(
                        f"tensor {key}: checkpoint shape {arr.shape} != {buf[name].shape}")
                buf[name] = arr.astype(buf[name].dtype).copy()
