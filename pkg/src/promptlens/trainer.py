"""Contrastive training loop over a bank of augmented-prompt embeddings.

Each step samples one positive row pair per class (batch size equals the
class count), pushes both views through the shared adapter network,
L2-normalizes, applies the contrastive loss and one Adam update. Mean loss
is recorded every ``checkpoint_every`` steps; training stops early once the
running-best checkpoint loss has not improved by more than
``early_stop_delta`` for ``early_stop_patience`` consecutive checkpoints.
The final-step weights are returned (not the best checkpoint's).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import dnet, ndcore, optim
from .embstore import EmbeddingSet, atomic_write_bytes
from .promptgen import AugmentCombo, make_batch


@dataclass
class TrainConfig:
    dnet: dnet.DNetConfig
    adam: optim.AdamHyper = field(default_factory=optim.AdamHyper)
    tau: float = 0.1
    max_steps: int = 100_000
    checkpoint_every: int = 50
    early_stop_delta: float = 0.001
    early_stop_patience: int = 5
    seeds: tuple[int, ...] = (0, 1, 2)
    combo: AugmentCombo = field(
        default_factory=lambda: AugmentCombo(isd=True, aac=True, sso=True)
    )
    symmetric_loss: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.early_stop_delta < 0:
            raise ValueError("early_stop_delta must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.seeds = tuple(int(s) for s in self.seeds)

    def snapshot(self) -> dict:
        d = asdict(self)
        d["combo"] = str(self.combo)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class TrainLog:
    checkpoint_losses: list[float]
    stop_step: int
    stop_reason: str  # "early_stop" | "max_steps"
    seed: int
    config: dict
    wall_time_s: float = 0.0  # volatile; excluded from serialization

    def to_json_dict(self) -> dict:
        return {
            "checkpoints": [
                {"checkpoint": i + 1, "mean_loss": v}
                for i, v in enumerate(self.checkpoint_losses)
            ],
            "stop_step": self.stop_step,
            "stop_reason": self.stop_reason,
            "seed": self.seed,
            "config": self.config,
        }

    def save(self, path) -> None:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, indent=2)
        atomic_write_bytes(path, (blob + "\n").encode("utf-8"))


def early_stop_decide(
    checkpoint_losses, delta: float, patience: int
) -> tuple[bool, Optional[int]]:
    """Running-best early stopping.

    A checkpoint improves iff its loss is below best - delta, in which case
    it becomes the new best. Returns (True, i) at the first index i where
    ``patience`` consecutive checkpoints have failed to improve.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if patience < 1:
        raise ValueError("patience must be >= 1")
    best = np.inf
    streak = 0
    for i, loss in enumerate(checkpoint_losses):
        if loss < best - delta:
            best = loss
            streak = 0
        else:
            streak += 1
            if streak >= patience:
                return True, i
    return False, None


def _derived_seeds(seed: int) -> tuple[int, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    ss_init, ss_sample = root.spawn(2)
    init_seed = int(ss_init.generate_state(1)[0])
    return init_seed, np.random.default_rng(ss_sample)


def train(
    bank: EmbeddingSet, config: TrainConfig, seed: Optional[int] = None
) -> tuple[dnet.DisentangleNet, TrainLog]:
    k = bank.n_classes
    if k < 2:
        raise ValueError(f"need >= 2 classes for contrastive training, got {k}")
    if bank.dim != config.dnet.in_dim:
        raise ValueError(f"bank dim {bank.dim} != network in_dim {config.dnet.in_dim}")
    seed = config.seeds[0] if seed is None else int(seed)
    init_seed, sample_rng = _derived_seeds(seed)

    net = dnet.init(replace(config.dnet, init_seed=init_seed))
    params = net.params()
    state = optim.AdamState.for_params(params)
    classes = list(range(k))
    rows = bank.rows64()

    t0 = time.perf_counter()
    checkpoint_losses: list[float] = []
    window: list[float] = []
    stop_step = config.max_steps
    stop_reason = "max_steps"
    for step in range(1, config.max_steps + 1):
        batch = make_batch(bank, classes, sample_rng)
        idx_a = [p[0] for p in batch.pairs]
        idx_b = [p[1] for p in batch.pairs]
        x = np.vstack([rows[idx_a], rows[idx_b]])
        y, cache = net.forward_cached(x)
        z = ndcore.l2norm_rows(y)
        loss, dza, dzb = ndcore.infonce_loss(
            z[:k], z[k:], config.tau, symmetric=config.symmetric_loss
        )
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step}")
        dz = np.vstack([dza, dzb])
        dy = ndcore.l2norm_rows_backward(y, dz)
        _, grads = net.backward(cache, dy)
        optim.adam_step(params, grads, state, config.adam)

        window.append(loss)
        if step % config.checkpoint_every == 0:
            checkpoint_losses.append(float(np.mean(window)))
            window = []
            stop, at = early_stop_decide(
                checkpoint_losses, config.early_stop_delta, config.early_stop_patience
            )
            if stop and at == len(checkpoint_losses) - 1:
                stop_step = step
                stop_reason = "early_stop"
                break
    if window:  # partial tail window, only reachable at max_steps
        checkpoint_losses.append(float(np.mean(window)))
    log = TrainLog(
        checkpoint_losses=checkpoint_losses,
        stop_step=stop_step,
        stop_reason=stop_reason,
        seed=seed,
        config=config.snapshot(),
        wall_time_s=time.perf_counter() - t0,
    )
    return net, log


def run_seeds(
    bank: EmbeddingSet,
    config: TrainConfig,
    metric: Optional[Callable[[dnet.DisentangleNet, TrainLog], float]] = None,
):
    """Train once per configured seed.

    Returns (results, aggregate): results is a list of (net, log); aggregate
    is (mean, population std) of the metric across seeds, or None when no
    metric hook is given.
    """
    if not config.seeds:
        raise ValueError("empty seed list")
    results = [train(bank, config, seed=s) for s in config.seeds]
    aggregate = None
    if metric is not None:
        values = np.array([metric(net, log) for net, log in results], dtype=np.float64)
        aggregate = (float(values.mean()), float(values.std()))
    return results, aggregate
