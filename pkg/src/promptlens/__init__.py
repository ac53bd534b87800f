"""promptlens: contrastive training of a residual adapter over frozen
text-encoder embeddings, with style-varying prompt augmentation, zero-shot
and probe evaluation, and a synthetic latent-recovery testbed."""

__version__ = "0.1.0"
