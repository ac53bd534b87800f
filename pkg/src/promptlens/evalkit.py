"""Zero-shot evaluation across prompt templates, text-trained linear probes,
and prompt-robustness reporting (mean, spread, range, probe deltas)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ndcore, optim
from .embstore import EmbeddingSet, atomic_write_bytes
from .promptgen import article
from .trainer import early_stop_decide

TEMPLATE_IDS = ("C", "PC", "CP")


def render_template(template_id: str, class_name: str) -> str:
    """The three built-in evaluation prompts."""
    if template_id == "C":
        return class_name
    if template_id == "PC":
        return f"a photo of {article(class_name)} {class_name}"
    if template_id == "CP":
        return f"{article(class_name)} {class_name} in a photo"
    raise ValueError(f"unknown template {template_id!r}")


@dataclass
class EvalReport:
    dataset: str
    per_template: dict[str, float]
    mean: float
    delta: float          # population std across templates
    range: float          # max - min
    lin_c: Optional[float] = None
    lin_isd: Optional[float] = None
    delta_isd: Optional[float] = None
    delta_c: Optional[float] = None


def summarize(accuracies) -> tuple[float, float, float]:
    """(mean, population std, max-min) of per-template accuracies."""
    a = np.asarray(accuracies, dtype=np.float64)
    return float(a.mean()), float(a.std()), float(a.max() - a.min())


def make_report(
    dataset: str,
    per_template: dict[str, float],
    lin_c: Optional[float] = None,
    lin_isd: Optional[float] = None,
) -> EvalReport:
    missing = [t for t in TEMPLATE_IDS if t not in per_template]
    if missing:
        raise ValueError(f"missing template accuracies: {missing}")
    accs = [per_template[t] for t in TEMPLATE_IDS]
    mean, delta, rng = summarize(accs)
    zs_c = per_template["C"]
    return EvalReport(
        dataset=dataset,
        per_template={t: float(per_template[t]) for t in TEMPLATE_IDS},
        mean=mean,
        delta=delta,
        range=rng,
        lin_c=lin_c,
        lin_isd=lin_isd,
        delta_isd=None if lin_isd is None else lin_isd - zs_c,
        delta_c=None if lin_c is None else lin_c - zs_c,
    )


# -- representation plumbing -----------------------------------------------------


def _apply_net(net, s: EmbeddingSet, apply: bool = True) -> np.ndarray:
    x = s.rows64()
    if net is None or not apply:
        return x
    return net.forward(x)


def _class_anchors(net, class_texts: EmbeddingSet, apply_to_text: bool) -> np.ndarray:
    n = class_texts.n_classes
    labels = class_texts.labels
    if class_texts.count != n or np.any(labels < 0):
        raise ValueError(
            "class-text set must hold exactly one labeled row per class"
        )
    reps = ndcore.l2norm_rows(_apply_net(net, class_texts, apply_to_text))
    anchors = np.zeros((n, reps.shape[1]))
    anchors[labels] = reps
    return anchors


def zero_shot_eval(
    net,
    images: EmbeddingSet,
    class_texts: EmbeddingSet,
    apply_to_text: bool = True,
) -> float:
    """Top-1 accuracy (%) of nearest-anchor classification.

    ``net=None`` evaluates the raw frozen-encoder baseline. Anchors pass
    through the network by default; ties break to the lowest class index.
    """
    if images.count == 0:
        raise ValueError("empty image set")
    labels = images.labels
    if np.any(labels < 0):
        raise ValueError("image set must be fully labeled")
    anchors = _class_anchors(net, class_texts, apply_to_text)
    if labels.max() >= anchors.shape[0]:
        raise ValueError("image label outside the class-text label range")
    reps = ndcore.l2norm_rows(_apply_net(net, images))
    pred = np.argmax(reps @ anchors.T, axis=1)
    return float(100.0 * np.mean(pred == labels))


def prompt_sweep(
    net,
    images: EmbeddingSet,
    class_texts_by_template: dict[str, EmbeddingSet],
    dataset: str = "",
    apply_to_text: bool = True,
) -> EvalReport:
    """Zero-shot accuracy per template plus mean / spread / range."""
    missing = [t for t in TEMPLATE_IDS if t not in class_texts_by_template]
    if missing:
        raise ValueError(f"missing class-text sets for templates: {missing}")
    per = {
        t: zero_shot_eval(net, images, class_texts_by_template[t], apply_to_text)
        for t in TEMPLATE_IDS
    }
    return make_report(dataset, per)


# -- linear probes -----------------------------------------------------------------


@dataclass
class LinearClassifier:
    weight: np.ndarray  # [D, C]
    bias: np.ndarray    # [C]

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite classifier parameters")

    def logits(self, reps: np.ndarray) -> np.ndarray:
        if reps.shape[1] != self.weight.shape[0]:
            raise ValueError(
                f"representation dim {reps.shape[1]} != classifier dim "
                f"{self.weight.shape[0]}"
            )
        return reps @ self.weight + self.bias


@dataclass
class ProbeConfig:
    epochs: int = 1000
    batch_size: int = 128
    patience: int = 10
    delta: float = 0.001
    lr: float = 1e-3
    seed: int = 0
    adam: optim.AdamHyper = field(init=False)

    def __post_init__(self):
        self.adam = optim.AdamHyper(lr=self.lr)


def probe_train(
    train_texts: EmbeddingSet,
    net,
    config: Optional[ProbeConfig] = None,
    apply_to_text: bool = True,
) -> LinearClassifier:
    """Fit a linear softmax classifier on normalized text representations.

    Shuffled minibatches, Adam, and early stopping on the epoch-mean loss
    (improvement threshold ``delta``, ``patience`` epochs).
    """
    config = config or ProbeConfig()
    n_classes = train_texts.n_classes
    labels = train_texts.labels
    if train_texts.count == 0 or n_classes < 1:
        raise ValueError("probe training set must be labeled and non-empty")
    if np.any(labels < 0):
        raise ValueError("probe training set must be fully labeled")
    x = ndcore.l2norm_rows(_apply_net(net, train_texts, apply_to_text))
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    params = [w, b]
    state = optim.AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            sel = perm[start : start + config.batch_size]
            xb, yb = x[sel], labels[sel]
            logits = xb @ w + b
            loss, dlogits = ndcore.softmax_cross_entropy(logits, yb)
            dw = xb.T @ dlogits
            db = dlogits.sum(axis=0)
            optim.adam_step(params, [dw, db], state, config.adam)
            total += loss * len(sel)
        epoch_losses.append(total / n)
        stop, at = early_stop_decide(epoch_losses, config.delta, config.patience)
        if stop and at == len(epoch_losses) - 1:
            break
    return LinearClassifier(weight=w, bias=b)


def probe_eval(classifier: LinearClassifier, net, images: EmbeddingSet) -> float:
    """Top-1 accuracy (%) of the probe on normalized image representations."""
    if images.count == 0:
        raise ValueError("empty image set")
    labels = images.labels
    if np.any(labels < 0):
        raise ValueError("image set must be fully labeled")
    reps = ndcore.l2norm_rows(_apply_net(net, images))
    pred = np.argmax(classifier.logits(reps), axis=1)
    return float(100.0 * np.mean(pred == labels))


# -- report / representation export ---------------------------------------------------

_CSV_COLUMNS = (
    "dataset", "C", "PC", "CP", "mean", "delta", "range",
    "lin_C", "lin_ISD", "delta_ISD", "delta_C",
)


def report_json_dict(report: EvalReport) -> dict:
    return {
        "dataset": report.dataset,
        "per_template": dict(report.per_template),
        "mean": report.mean,
        "delta": report.delta,
        "range": report.range,
        "lin_C": report.lin_c,
        "lin_ISD": report.lin_isd,
        "delta_ISD": report.delta_isd,
        "delta_C": report.delta_c,
    }


def _fmt2(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.2f}"


def export_report(report: EvalReport, path, fmt: Optional[str] = None) -> None:
    """JSON keeps full precision; CSV renders numbers with two decimals."""
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
    if fmt == "json":
        blob = json.dumps(report_json_dict(report), sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        writer.writerow(
            [report.dataset]
            + [_fmt2(report.per_template[t]) for t in TEMPLATE_IDS]
            + [_fmt2(report.mean), _fmt2(report.delta), _fmt2(report.range)]
            + [_fmt2(v) for v in (report.lin_c, report.lin_isd,
                                  report.delta_isd, report.delta_c)]
        )
        blob = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    atomic_write_bytes(path, blob.encode("utf-8"))


def export_representations(net, s: EmbeddingSet, path) -> None:
    """CSV of per-row representations: id, label, r_0..r_{D-1}."""
    reps = _apply_net(net, s)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "label"] + [f"r_{j}" for j in range(reps.shape[1])])
    for m, row in zip(s.meta, reps):
        writer.writerow([m.id, m.label] + [repr(float(v)) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))
