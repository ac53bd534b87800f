"""Desk-scale synthetic generative model for latent-recovery experiments.

Content latents are standard normal; style latents are a mixed function of
content plus independent noise, so style both correlates with content and
carries its own variation. Vision- and text-side observations come from
distinct random invertible-style mixers (LeakyReLU + orthonormal maps).
Labels are quantile buckets of the first content coordinate. "Prompt
augmentation" resamples the style noise while keeping content fixed,
which is exactly the freedom the contrastive trainer is meant to exploit;
ridge-probe R-squared against the true latents then measures how much
content/style information a representation retains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embstore import EmbeddingSet, RowMeta


@dataclass
class CausalConfig:
    n_c: int = 4
    n_s: int = 4
    emb_dim: int = 16
    n_classes: int = 8
    n_samples: int = 4000
    mix_depth: int = 2
    style_noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_c, self.n_s, self.emb_dim) < 1:
            raise ValueError("latent and embedding dims must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need >= 2 classes")
        if self.n_samples < 2:
            raise ValueError("need >= 2 samples")
        if self.mix_depth < 0:
            raise ValueError("mix_depth must be >= 0")
        if self.style_noise_sigma < 0:
            raise ValueError("style_noise_sigma must be >= 0")
        if self.mix_depth == 0 and self.emb_dim != self.n_c + self.n_s:
            raise ValueError(
                "identity generators (mix_depth=0) require emb_dim == n_c + n_s"
            )


def _random_orthomap(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    """Random map with orthonormal rows (d_in <= d_out, injective) or
    orthonormal columns (d_in >= d_out); square gives a full orthogonal
    matrix. QR signs are fixed for determinism."""
    a = rng.standard_normal((max(d_in, d_out), min(d_in, d_out)))
    q, r = np.linalg.qr(a)
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    return q if d_in >= d_out else q.T


@dataclass
class Mixer:
    """activation-then-orthomap layers; depth 0 is the identity."""

    layers: list[np.ndarray]
    slope: float = 0.2

    @classmethod
    def random(
        cls, rng: np.random.Generator, d_in: int, d_out: int, depth: int,
        slope: float = 0.2,
    ) -> "Mixer":
        layers = []
        prev = d_in
        for _ in range(depth):
            layers.append(_random_orthomap(rng, prev, d_out))
            prev = d_out
        return cls(layers=layers, slope=slope)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        for m in self.layers:
            x = np.where(x >= 0.0, x, self.slope * x) @ m
        return x[0] if squeeze else x


@dataclass
class SyntheticDataset:
    config: CausalConfig
    content: np.ndarray   # [n, n_c]
    style: np.ndarray     # [n, n_s]
    x_emb: np.ndarray     # [n, emb_dim], vision-side observations
    t_emb: np.ndarray     # [n, emb_dim], text-side observations
    labels: np.ndarray    # [n]
    g_style: Mixer
    g_vision: Mixer
    g_text: Mixer


def sample_dataset(config: CausalConfig) -> SyntheticDataset:
    rng = np.random.default_rng(config.seed)
    g_style = Mixer.random(rng, config.n_c, config.n_s, config.mix_depth)
    g_vision = Mixer.random(
        rng, config.n_c + config.n_s, config.emb_dim, config.mix_depth
    )
    g_text = Mixer.random(
        rng, config.n_c + config.n_s, config.emb_dim, config.mix_depth
    )
    content = rng.standard_normal((config.n_samples, config.n_c))
    noise = config.style_noise_sigma * rng.standard_normal(
        (config.n_samples, config.n_s)
    )
    style = g_style.apply(content) + noise
    z = np.hstack([content, style])
    x_emb = g_vision.apply(z)
    t_emb = g_text.apply(z)
    labels = _quantile_labels(content[:, 0], config.n_classes)
    return SyntheticDataset(
        config=config,
        content=content,
        style=style,
        x_emb=x_emb,
        t_emb=t_emb,
        labels=labels,
        g_style=g_style,
        g_vision=g_vision,
        g_text=g_text,
    )


def _quantile_labels(c0: np.ndarray, n_classes: int) -> np.ndarray:
    edges = np.quantile(c0, [k / n_classes for k in range(1, n_classes)])
    return np.searchsorted(edges, c0, side="right").astype(np.int64)


def augment_style(
    dataset: SyntheticDataset, row: int, rng: np.random.Generator
) -> np.ndarray:
    """Fresh text observation for row ``row``: same content, resampled style."""
    cfg = dataset.config
    if not 0 <= row < cfg.n_samples:
        raise ValueError(f"row {row} out of range")
    c = dataset.content[row]
    eps = cfg.style_noise_sigma * rng.standard_normal(cfg.n_s)
    s = dataset.g_style.apply(c) + eps
    return dataset.g_text.apply(np.concatenate([c, s]))


def build_bank(
    dataset: SyntheticDataset, pairs_per_class: int, rng: np.random.Generator
) -> EmbeddingSet:
    """Labeled training bank of style-augmented text observations.

    One content representative is drawn per class; all of that class's bank
    rows are independent style augmentations of it, so any two same-class
    rows form a valid positive pair (identical content, fresh style).
    """
    if pairs_per_class < 2:
        raise ValueError("need at least 2 rows per class")
    cfg = dataset.config
    rows, meta = [], []
    for c in range(cfg.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size == 0:
            raise ValueError(f"class {c} has no samples")
        rep = int(members[rng.integers(members.size)])
        for k in range(pairs_per_class):
            rows.append(augment_style(dataset, rep, rng))
            meta.append(RowMeta(id=f"c{c}_r{k}", label=c))
    return EmbeddingSet(
        dim=cfg.emb_dim, rows=np.asarray(rows, dtype=np.float32), meta=meta
    )


def default_train_config(config: CausalConfig):
    """Adapter defaults for the synthetic testbed.

    The output dimension matches the full latent code (content + style) so
    the representation has exactly enough room for everything the generators
    used; training then decides what survives. The trunk is widened to
    8x the embedding dim: square trunks underfit the random mixers at this
    scale and stall the stop rule before style has collapsed.
    """
    from . import trainer
    from .dnet import DNetConfig

    return trainer.TrainConfig(
        dnet=DNetConfig(
            in_dim=config.emb_dim,
            out_dim=config.n_c + config.n_s,
            hidden_dim=8 * config.emb_dim,
        )
    )


def run_pipeline(
    config: CausalConfig,
    train_config=None,
    pairs_per_class: int = 128,
    train_seed=None,
):
    """Sample a dataset, train on its augmented bank, score latent recovery.

    Returns (net, train_log, report) where the report compares held-out
    ridge R^2 onto content and style latents for the trained representation
    against the raw text-observation baseline.
    """
    from . import trainer  # local import: trainer pulls in most of the package

    dataset = sample_dataset(config)
    bank_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    bank = build_bank(dataset, pairs_per_class, bank_rng)
    if train_config is None:
        train_config = default_train_config(config)
    seed = config.seed if train_seed is None else int(train_seed)
    net, log = trainer.train(bank, train_config, seed=seed)

    reps = net.forward(dataset.t_emb)
    content_dims, content = identifiability_score(reps, dataset.content)
    style_dims, style = identifiability_score(reps, dataset.style)
    base_content_dims, base_content = identifiability_score(
        dataset.t_emb, dataset.content
    )
    base_style_dims, base_style = identifiability_score(dataset.t_emb, dataset.style)
    report = {
        "config": {
            "n_c": config.n_c,
            "n_s": config.n_s,
            "emb_dim": config.emb_dim,
            "n_classes": config.n_classes,
            "n_samples": config.n_samples,
            "mix_depth": config.mix_depth,
            "style_noise_sigma": config.style_noise_sigma,
            "seed": config.seed,
            "pairs_per_class": pairs_per_class,
            "train_seed": seed,
        },
        "content_r2": content,
        "style_r2": style,
        "baseline_content_r2": base_content,
        "baseline_style_r2": base_style,
        "content_style_gap": content - style,
        "baseline_gap": base_content - base_style,
        "content_r2_per_dim": [float(v) for v in content_dims],
        "style_r2_per_dim": [float(v) for v in style_dims],
        "baseline_content_r2_per_dim": [float(v) for v in base_content_dims],
        "baseline_style_r2_per_dim": [float(v) for v in base_style_dims],
        "train_log": {
            "stop_step": log.stop_step,
            "stop_reason": log.stop_reason,
            "n_checkpoints": len(log.checkpoint_losses),
            "first_checkpoint_loss": log.checkpoint_losses[0],
            "final_checkpoint_loss": log.checkpoint_losses[-1],
        },
    }
    return net, log, report


def identifiability_score(
    representation: np.ndarray,
    targets: np.ndarray,
    ridge_lambda: float = 1e-3,
) -> tuple[np.ndarray, float]:
    """Held-out ridge R-squared from a representation to each target dim.

    The first half of the rows fits the regression (bias unpenalized); the
    second half scores it. Returns (per-dim R^2, mean R^2).
    """
    rep = np.asarray(representation, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if tgt.ndim == 1:
        tgt = tgt[:, None]
    n, k = rep.shape
    if tgt.shape[0] != n:
        raise ValueError("representation/target row mismatch")
    if n <= k + 1:
        raise ValueError(f"need n > k+1 rows, got n={n}, k={k}")
    half = n // 2
    xtr, xte = rep[:half], rep[half:]
    ytr, yte = tgt[:half], tgt[half:]
    x_mean = xtr.mean(axis=0)
    y_mean = ytr.mean(axis=0)
    xc = xtr - x_mean
    gram = xc.T @ xc + ridge_lambda * np.eye(k)
    beta = np.linalg.solve(gram, xc.T @ (ytr - y_mean))
    pred = (xte - x_mean) @ beta + y_mean
    sse = ((yte - pred) ** 2).sum(axis=0)
    sst = ((yte - yte.mean(axis=0)) ** 2).sum(axis=0)
    if np.any(sst < 1e-12):
        raise ValueError("degenerate target: zero variance on the held-out half")
    r2 = 1.0 - sse / sst
    return r2, float(r2.mean())
