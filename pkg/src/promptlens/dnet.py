"""Residual adapter network: LeakyReLU-Linear trunk, zero-init projection.

The trunk is N repetitions of activation-then-linear; its output passes
through a bias-free projection initialized to all zeros, and the input is
added back through a skip path (identity, or nearest-neighbor column
downsampling when the output is narrower). The zero projection makes the
whole network an exact skip map at initialization, so optimization starts
from the frozen encoder's feature space.

Checkpoint format ``CLAPNET1``: magic (8 bytes), u32 little-endian config
length, canonical config JSON, then parameter matrices in declaration
order as raw little-endian float64.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import ndcore
from .embstore import atomic_write_bytes

MAGIC = b"CLAPNET1"


@dataclass
class DNetConfig:
    in_dim: int
    out_dim: int
    hidden_dim: Optional[int] = None
    n_blocks: int = 1
    leaky_slope: float = 0.01
    init_seed: int = 0

    def __post_init__(self):
        if self.hidden_dim is None:
            self.hidden_dim = self.in_dim
        if min(self.in_dim, self.out_dim, self.hidden_dim) < 1:
            raise ValueError("dimensions must be positive")
        if self.out_dim > self.in_dim:
            raise ValueError(
                f"out_dim {self.out_dim} > in_dim {self.in_dim}: the skip path "
                "only supports identity or downsampling"
            )
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must be in (0, 1)")


class DisentangleNet:
    """Trainable adapter mapping embeddings to content representations."""

    def __init__(self, config: DNetConfig, weights, biases, zero_proj):
        self.config = config
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.zero_proj = np.asarray(zero_proj, dtype=np.float64)
        self._check_shapes()

    def _check_shapes(self):
        cfg = self.config
        if len(self.weights) != cfg.n_blocks or len(self.biases) != cfg.n_blocks:
            raise ValueError("trunk depth does not match config")
        d_prev = cfg.in_dim
        for w, b in zip(self.weights, self.biases):
            if w.shape != (d_prev, cfg.hidden_dim) or b.shape != (cfg.hidden_dim,):
                raise ValueError(f"bad trunk shapes {w.shape}, {b.shape}")
            d_prev = cfg.hidden_dim
        if self.zero_proj.shape != (cfg.hidden_dim, cfg.out_dim):
            raise ValueError(f"bad projection shape {self.zero_proj.shape}")

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> list[np.ndarray]:
        """Parameters in declaration order: (W, b) per block, then projection."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        out.append(self.zero_proj)
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "DisentangleNet":
        return DisentangleNet(
            self.config,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.zero_proj.copy(),
        )

    # -- forward / backward ----------------------------------------------------

    def skip(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.config.out_dim == self.config.in_dim:
            return x.copy()
        return ndcore.nn_downsample(x, self.config.out_dim)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.in_dim:
            raise ValueError(f"input shape {x.shape} != (B, {self.config.in_dim})")
        pre_acts = []   # input of each block's activation
        acts = []       # output of each block's activation
        h = x
        for w, b in zip(self.weights, self.biases):
            pre_acts.append(h)
            a = ndcore.leaky_relu(h, self.config.leaky_slope)
            acts.append(a)
            h = ndcore.linear(a, w, b)
        y = ndcore.linear(h, self.zero_proj) + self.skip(x)
        cache = (x, pre_acts, acts, h)
        return y, cache

    def backward(self, cache, dy: np.ndarray):
        """Exact reverse-mode gradients; returns (dx, grads) with grads
        ordered like :meth:`params`."""
        x, pre_acts, acts, trunk_out = cache
        dy = np.asarray(dy, dtype=np.float64)
        dh, dproj, _ = ndcore.linear_backward(trunk_out, self.zero_proj, dy, with_bias=False)
        w_grads, b_grads = [], []
        for i in reversed(range(self.config.n_blocks)):
            da, dw, db = ndcore.linear_backward(acts[i], self.weights[i], dh)
            dh = ndcore.leaky_relu_backward(pre_acts[i], self.config.leaky_slope, da)
            w_grads.append(dw)
            b_grads.append(db)
        if self.config.out_dim == self.config.in_dim:
            dskip = dy
        else:
            dskip = ndcore.nn_downsample_backward(self.config.in_dim, self.config.out_dim, dy)
        dx = dh + dskip
        grads = []
        for dw, db in zip(reversed(w_grads), reversed(b_grads)):
            grads.extend([dw, db])
        grads.append(dproj)
        return dx, grads


def init(config: DNetConfig) -> DisentangleNet:
    """Kaiming-uniform trunk (seeded), zero biases, all-zero projection."""
    rng = np.random.default_rng(config.init_seed)
    weights, biases = [], []
    d_prev = config.in_dim
    for _ in range(config.n_blocks):
        bound = np.sqrt(6.0 / d_prev)
        weights.append(rng.uniform(-bound, bound, size=(d_prev, config.hidden_dim)))
        biases.append(np.zeros(config.hidden_dim))
        d_prev = config.hidden_dim
    zero_proj = np.zeros((config.hidden_dim, config.out_dim))
    return DisentangleNet(config, weights, biases, zero_proj)


def save(net: DisentangleNet, path) -> None:
    cfg_bytes = json.dumps(
        asdict(net.config), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    for p in net.params():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load(path) -> DisentangleNet:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"not a CLAPNET1 checkpoint: {os.fspath(path)}")
    (cfg_len,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    if len(data) < off + cfg_len:
        raise ValueError("truncated checkpoint config")
    config = DNetConfig(**json.loads(data[off : off + cfg_len].decode("utf-8")))
    off += cfg_len
    shapes = []
    d_prev = config.in_dim
    for _ in range(config.n_blocks):
        shapes.extend([(d_prev, config.hidden_dim), (config.hidden_dim,)])
        d_prev = config.hidden_dim
    shapes.append((config.hidden_dim, config.out_dim))
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(data) - off != expected:
        raise ValueError(
            f"checkpoint payload is {len(data) - off} bytes, expected {expected}"
        )
    arrays = []
    for s in shapes:
        n = int(np.prod(s)) * 8
        arrays.append(np.frombuffer(data[off : off + n], dtype="<f8").reshape(s).copy())
        off += n
    weights = arrays[0:-1:2]
    biases = arrays[1:-1:2]
    return DisentangleNet(config, weights, biases, arrays[-1])
