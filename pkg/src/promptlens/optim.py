"""Bias-corrected Adam over lists of numpy parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


def adam_step(params, grads, state: AdamState, hyper: AdamHyper) -> AdamState:
    """One in-place update of ``params``; returns the advanced state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    for p, g, m in zip(params, grads, state.m):
        g = np.asarray(g)
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient")
    state.step += 1
    t = state.step
    bc1 = 1.0 - hyper.beta1 ** t
    bc2 = 1.0 - hyper.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if hyper.weight_decay:
            g = g + hyper.weight_decay * p
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        p -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return state


def save_state(state: AdamState, path) -> None:
    arrays = {"step": np.array(state.step, dtype=np.int64)}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        arrays[f"m{i}"] = m
        arrays[f"v{i}"] = v
    np.savez(path, **arrays)


def load_state(path) -> AdamState:
    with np.load(path) as data:
        n = (len(data.files) - 1) // 2
        return AdamState(
            step=int(data["step"]),
            m=[data[f"m{i}"].copy() for i in range(n)],
            v=[data[f"v{i}"].copy() for i in range(n)],
        )
