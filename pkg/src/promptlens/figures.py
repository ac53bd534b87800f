"""Figure rendering for the report paths.

Every CLI command that writes a report or log can drop a small PNG next to
it: training loss curves, per-template accuracy bars, and latent-recovery
R-squared bars. Rendering is headless (Agg) and file-only.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .embstore import atomic_write_bytes

_FIGSIZE = (5.0, 3.2)


def _finish(fig, path):
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=150)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def save_loss_curve(checkpoint_losses, checkpoint_every: int, path) -> None:
    """Mean loss per checkpoint window against the training step."""
    steps = [(i + 1) * checkpoint_every for i in range(len(checkpoint_losses))]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(steps, checkpoint_losses, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss per checkpoint")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_accuracy_bars(report, path) -> None:
    """Per-template zero-shot accuracies with the mean as a reference line."""
    templates = list(report.per_template)
    values = [report.per_template[t] for t in templates]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.bar(templates, values, width=0.6, color="#4878a8")
    ax.axhline(report.mean, color="#333333", lw=1.0, ls="--",
               label=f"mean {report.mean:.2f}")
    ax.set_ylabel("top-1 accuracy (%)")
    lo = min(values)
    ax.set_ylim(max(0.0, lo - 3 * (report.range + 0.5)), 100.0)
    title = report.dataset or "zero-shot"
    ax.set_title(f"{title}  (spread {report.delta:.2f}, range {report.range:.2f})")
    ax.legend(loc="lower right", fontsize=8)
    _finish(fig, path)


def save_r2_bars(report: dict, path) -> None:
    """Trained-vs-baseline content/style recovery from a synth report."""
    labels = ["content", "style"]
    trained = [report["content_r2"], report["style_r2"]]
    baseline = [report["baseline_content_r2"], report["baseline_style_r2"]]
    x = range(len(labels))
    width = 0.35
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.bar([i - width / 2 for i in x], trained, width, label="trained",
           color="#4878a8")
    ax.bar([i + width / 2 for i in x], baseline, width, label="raw baseline",
           color="#b0b0b0")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("held-out R$^2$")
    ax.set_title(
        f"gap {report['content_style_gap']:.3f} "
        f"(baseline {report['baseline_gap']:.3f})"
    )
    ax.legend(fontsize=8)
    _finish(fig, path)
