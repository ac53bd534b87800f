"""Dense float64 kernels with hand-written reverse-mode gradients.

Tensors are plain 2-D numpy arrays (row-major, float64). Each forward op
has a matching ``*_backward`` that maps the upstream gradient to input and
parameter gradients; the contrastive and cross-entropy losses return their
gradients directly. Reductions that control reported loss values use exact
summation (math.fsum) so results are bitwise invariant under row
permutations; everything else keeps numpy's fixed evaluation order, which
is deterministic on a given platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# slack absorbs float rounding and finite-difference probe steps
_NORM_ATOL = 1e-6 + 1e-12


def _as_t2(x, name: str = "tensor") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


# -- linear -----------------------------------------------------------------


def linear(x, w, bias=None) -> np.ndarray:
    x, w = _as_t2(x, "x"), _as_t2(w, "w")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape} @ w {w.shape}")
    y = x @ w
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (w.shape[1],):
            raise ValueError(f"bias shape {bias.shape} != ({w.shape[1]},)")
        y = y + bias
    return y


def linear_backward(x, w, dy, with_bias: bool = True):
    """Gradients of y = x @ w (+ bias) given upstream dy."""
    x, w, dy = _as_t2(x, "x"), _as_t2(w, "w"), _as_t2(dy, "dy")
    if dy.shape != (x.shape[0], w.shape[1]):
        raise ValueError(f"dy shape {dy.shape} != ({x.shape[0]}, {w.shape[1]})")
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0) if with_bias else None
    return dx, dw, db


# -- leaky ReLU ---------------------------------------------------------------


def leaky_relu(x, slope: float) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must be in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_backward(x, slope: float, dy) -> np.ndarray:
    # subgradient at exactly 0 takes the positive branch
    x = np.asarray(x, dtype=np.float64)
    return np.asarray(dy, dtype=np.float64) * np.where(x >= 0.0, 1.0, slope)


# -- row-wise L2 normalization ------------------------------------------------


def l2norm_rows(x, eps: float = 1e-12) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = _as_t2(x, "x")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, eps)


def l2norm_rows_backward(x, dy, eps: float = 1e-12) -> np.ndarray:
    x, dy = _as_t2(x, "x"), _as_t2(dy, "dy")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    denom = np.maximum(norms, eps)
    y = x / denom
    # below eps the denominator is the constant eps, so the map is linear
    dx_small = dy / denom
    inner = np.sum(dy * y, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        dx_big = (dy - y * inner) / norms
    return np.where(norms > eps, dx_big, dx_small)


# -- nearest-neighbor column downsampling -------------------------------------


def downsample_indices(c_in: int, c_out: int) -> np.ndarray:
    """Source column for each output column: floor((j + 0.5) * c_in / c_out),
    evaluated in integer arithmetic so the rule is exact."""
    if not 1 <= c_out <= c_in:
        raise ValueError(f"need 1 <= c_out <= c_in, got c_out={c_out}, c_in={c_in}")
    j = np.arange(c_out, dtype=np.int64)
    return (2 * j + 1) * c_in // (2 * c_out)


def nn_downsample(x, c_out: int) -> np.ndarray:
    x = _as_t2(x, "x")
    return x[:, downsample_indices(x.shape[1], c_out)]


def nn_downsample_backward(c_in: int, c_out: int, dy) -> np.ndarray:
    dy = _as_t2(dy, "dy")
    dx = np.zeros((dy.shape[0], c_in), dtype=np.float64)
    dx[:, downsample_indices(c_in, c_out)] = dy
    return dx


# -- contrastive loss ----------------------------------------------------------


def _check_unit_rows(z: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(z, axis=1)
    bad = ~((np.abs(norms - 1.0) <= _NORM_ATOL) | (norms <= _NORM_ATOL))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"{name} row {i} has norm {norms[i]!r}; rows must be L2-normalized "
            "(or zero) before the contrastive loss"
        )


def _infonce_one_way(z: np.ndarray, zp: np.ndarray, tau: float):
    k = z.shape[0]
    scores = (z @ zp.T) / tau
    # loss via exact per-row and cross-row summation: bitwise invariant
    # under identical permutation of the pair order
    terms = []
    for i in range(k):
        row = scores[i]
        m = float(row.max())
        lse = m + math.log(math.fsum(math.exp(v - m) for v in row))
        terms.append(lse - float(row[i]))
    loss = math.fsum(terms) / k
    # analytic gradient in vectorized arithmetic
    shifted = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    dscores = (p - np.eye(k)) / k
    dz = (dscores @ zp) / tau
    dzp = (dscores.T @ z) / tau
    return loss, dz, dzp


def infonce_loss(z, zp, tau: float, symmetric: bool = False):
    """Mean over rows of -log softmax similarity of each positive pair.

    Rows of ``z`` and ``zp`` must already be unit-norm (or zero). Returns
    (loss, dz, dzp). With ``symmetric`` the transposed term is averaged in.
    """
    z, zp = _as_t2(z, "z"), _as_t2(zp, "zp")
    if z.shape != zp.shape:
        raise ValueError(f"pair shape mismatch: {z.shape} vs {zp.shape}")
    if z.shape[0] == 0:
        raise ValueError("contrastive loss needs at least one pair")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    _check_unit_rows(z, "z")
    _check_unit_rows(zp, "zp")
    loss, dz, dzp = _infonce_one_way(z, zp, tau)
    if symmetric:
        loss_r, dzp_r, dz_r = _infonce_one_way(zp, z, tau)
        loss = (loss + loss_r) / 2.0
        dz = (dz + dz_r) / 2.0
        dzp = (dzp + dzp_r) / 2.0
    return loss, dz, dzp


# -- softmax cross-entropy ------------------------------------------------------


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood; returns (loss, dlogits)."""
    logits = _as_t2(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} != ({b},)")
    if b == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    sums = expd.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(sums)
    loss = float(-log_probs[np.arange(b), labels].mean())
    dlogits = expd / sums
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return loss, dlogits


# -- finite-difference gradient checking -----------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: list[float]

    def __str__(self) -> str:
        parts = ", ".join(f"{e:.3e}" for e in self.per_param)
        return f"max rel err {self.max_rel_err:.3e} (per param: {parts})"


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    f: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    params: list[np.ndarray],
    step: float = 1e-6,
) -> GradCheckReport:
    """Compare f's analytic gradients against central finite differences.

    ``f`` maps a parameter list to ``(scalar_loss, grads)`` where grads
    mirrors the parameter shapes. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    _, grads = f(params)
    per_param = []
    for k, p in enumerate(params):
        worst = 0.0
        flat = p.reshape(-1)
        gflat = np.asarray(grads[k], dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = f(params)
            flat[i] = orig - step
            down, _ = f(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, _rel_err(float(gflat[i]), numeric))
        per_param.append(worst)
    return GradCheckReport(max_rel_err=max(per_param), per_param=per_param)
