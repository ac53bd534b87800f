"""promptlens command line: bank planning, training, evaluation, synthetic
identifiability runs, representation export, and gradient checking.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Output files
are written atomically (temp file + rename). TOML config values can be
overridden by flags; flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import causalsim, dnet, evalkit, figures, ndcore, optim, trainer
from .embstore import EmbeddingSetError, atomic_write_bytes, read_embedding_set
from .promptgen import AugmentCombo, PromptError, Vocabulary, enumerate_space, render_prompt

ENV_SEED = "PROMPTLENS_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- config plumbing ---------------------------------------------------------


def _load_toml(path) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _section(data: dict, name: str, cls) -> dict:
    """Pull one TOML section and reject unknown keys against a dataclass."""
    raw = data.get(name, {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return dict(raw)


_TRAIN_KEYS = {
    "tau", "max_steps", "checkpoint_every", "early_stop_delta",
    "early_stop_patience", "seeds", "combo", "symmetric_loss",
}


def _train_section(data: dict) -> dict:
    raw = dict(data.get("train", {}))
    unknown = set(raw) - _TRAIN_KEYS
    if unknown:
        raise ValueError(f"unknown keys in [train]: {sorted(unknown)}")
    if "combo" in raw:
        raw["combo"] = AugmentCombo.parse(raw["combo"])
    if "seeds" in raw:
        raw["seeds"] = tuple(int(s) for s in raw["seeds"])
    return raw


def _check_sections(data: dict, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")


def build_train_config(
    data: dict, in_dim: int, out_dim: int | None = None, hidden_dim: int | None = None
) -> trainer.TrainConfig:
    _check_sections(data, {"train", "dnet", "adam"})
    dnet_kw = _section(data, "dnet", dnet.DNetConfig)
    dnet_kw.setdefault("in_dim", in_dim)
    dnet_kw.setdefault("out_dim", out_dim if out_dim is not None else dnet_kw["in_dim"])
    if hidden_dim is not None:
        dnet_kw.setdefault("hidden_dim", hidden_dim)
    adam_kw = _section(data, "adam", optim.AdamHyper)
    train_kw = _train_section(data)
    return trainer.TrainConfig(
        dnet=dnet.DNetConfig(**dnet_kw),
        adam=optim.AdamHyper(**adam_kw),
        **train_kw,
    )


def _resolve_seed(flag_seed, config_has_seeds: bool, cfg: trainer.TrainConfig) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    if config_has_seeds:
        return cfg.seeds[0]
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    return cfg.seeds[0]


def _fig_path(path, suffix: str) -> str:
    stem, _ = os.path.splitext(os.fspath(path))
    return f"{stem}_{suffix}.png"


# -- commands ------------------------------------------------------------------


def cmd_bank_plan(args) -> int:
    vocab = Vocabulary.from_files(args.styles, args.adjectives, args.synonyms)
    with open(args.classes, encoding="utf-8") as f:
        classes = [line.strip() for line in f if line.strip()]
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate class names in the classes file")
    if not classes:
        raise ValueError("classes file is empty")
    lines = []
    if args.template:
        # one evaluation anchor prompt per class instead of the full space
        for label, class_name in enumerate(classes):
            record = {
                "id": f"{class_name.replace(' ', '_')}_{args.template}",
                "class_name": class_name,
                "label": label,
                "text": evalkit.render_template(args.template, class_name),
            }
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    else:
        combo = AugmentCombo.parse(args.combo)
        for label, class_name in enumerate(classes):
            for i, spec in enumerate(enumerate_space(vocab, class_name, combo)):
                record = {
                    "id": f"{class_name.replace(' ', '_')}_{i:04d}",
                    "class_name": class_name,
                    "label": label,
                    "text": render_prompt(vocab, spec),
                }
                lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("utf-8"))
    print(f"wrote {len(lines)} prompts for {len(classes)} classes to {args.out}")
    return 0


def cmd_train(args) -> int:
    bank = read_embedding_set(args.bank)
    data = _load_toml(args.config) if args.config else {}
    cfg = build_train_config(data, in_dim=bank.dim)
    seed = _resolve_seed(args.seed, "seeds" in data.get("train", {}), cfg)
    net, log = trainer.train(bank, cfg, seed=seed)
    dnet.save(net, args.out)
    log.save(args.log)
    if not args.no_figures:
        figures.save_loss_curve(
            log.checkpoint_losses, cfg.checkpoint_every, _fig_path(args.log, "loss")
        )
    print(
        f"trained seed={seed}: stop_step={log.stop_step} ({log.stop_reason}), "
        f"final checkpoint loss {log.checkpoint_losses[-1]:.6f}, "
        f"{log.wall_time_s:.1f}s"
    )
    return 0


def _load_net(path):
    return dnet.load(path) if path else None


def _sweep_from_args(args, net):
    images = read_embedding_set(args.images)
    by_template = {
        "C": read_embedding_set(args.class_texts_c),
        "PC": read_embedding_set(args.class_texts_pc),
        "CP": read_embedding_set(args.class_texts_cp),
    }
    return images, evalkit.prompt_sweep(
        net,
        images,
        by_template,
        dataset=args.dataset,
        apply_to_text=not args.raw_text_anchors,
    )


def _emit_report(report, args) -> None:
    evalkit.export_report(report, args.report)
    if not args.no_figures:
        figures.save_accuracy_bars(report, _fig_path(args.report, "accuracy"))
    per = report.per_template
    line = (
        f"{report.dataset or 'dataset'}: "
        f"C={per['C']:.2f} PC={per['PC']:.2f} CP={per['CP']:.2f} "
        f"mean={report.mean:.2f} delta={report.delta:.2f} range={report.range:.2f}"
    )
    if report.lin_c is not None:
        line += f" lin_C={report.lin_c:.2f} delta_C={report.delta_c:.2f}"
    if report.lin_isd is not None:
        line += f" lin_ISD={report.lin_isd:.2f} delta_ISD={report.delta_isd:.2f}"
    print(line)


def cmd_eval_zs(args) -> int:
    net = _load_net(args.net)
    _, report = _sweep_from_args(args, net)
    _emit_report(report, args)
    return 0


def cmd_eval_probe(args) -> int:
    if not args.probe_train_c and not args.probe_train_isd:
        raise ValueError("provide --probe-train-c and/or --probe-train-isd")
    net = _load_net(args.net)
    images, sweep = _sweep_from_args(args, net)
    probe_cfg = evalkit.ProbeConfig(seed=args.probe_seed)
    lin = {}
    for key, path in (("lin_c", args.probe_train_c), ("lin_isd", args.probe_train_isd)):
        if path:
            texts = read_embedding_set(path)
            clf = evalkit.probe_train(
                texts, net, probe_cfg, apply_to_text=not args.raw_text_anchors
            )
            lin[key] = evalkit.probe_eval(clf, net, images)
    report = evalkit.make_report(
        args.dataset, sweep.per_template,
        lin_c=lin.get("lin_c"), lin_isd=lin.get("lin_isd"),
    )
    _emit_report(report, args)
    return 0


def cmd_synth_run(args) -> int:
    data = _load_toml(args.config) if args.config else {}
    _check_sections(data, {"synth", "train", "dnet", "adam"})
    raw_synth = dict(data.get("synth", {}))
    pairs_per_class = int(raw_synth.pop("pairs_per_class", args.pairs_per_class))
    synth_kw = _section({"synth": raw_synth}, "synth", causalsim.CausalConfig)
    if "seed" not in synth_kw:
        if args.seed is not None:
            synth_kw["seed"] = int(args.seed)
        elif os.environ.get(ENV_SEED) is not None:
            synth_kw["seed"] = int(os.environ[ENV_SEED])
    elif args.seed is not None:
        synth_kw["seed"] = int(args.seed)
    config = causalsim.CausalConfig(**synth_kw)
    if any(k in data for k in ("train", "dnet", "adam")):
        default_dnet = causalsim.default_train_config(config).dnet
        train_cfg = build_train_config(
            data,
            in_dim=config.emb_dim,
            out_dim=default_dnet.out_dim,
            hidden_dim=default_dnet.hidden_dim,
        )
    else:
        train_cfg = None
    net, log, report = causalsim.run_pipeline(
        config, train_config=train_cfg, pairs_per_class=pairs_per_class
    )
    blob = json.dumps(report, sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(args.report, blob.encode("utf-8"))
    if args.out_net:
        dnet.save(net, args.out_net)
    if args.out_log:
        log.save(args.out_log)
    if not args.no_figures:
        figures.save_r2_bars(report, _fig_path(args.report, "r2"))
        figures.save_loss_curve(
            log.checkpoint_losses,
            log.config["checkpoint_every"],
            _fig_path(args.report, "loss"),
        )
    print(
        f"synth run seed={config.seed}: content R2 {report['content_r2']:.3f}, "
        f"style R2 {report['style_r2']:.3f}, gap {report['content_style_gap']:.3f} "
        f"(baseline gap {report['baseline_gap']:.3f}), "
        f"stopped at {report['train_log']['stop_step']} steps"
    )
    return 0


def cmd_export_reps(args) -> int:
    net = _load_net(args.net)
    s = read_embedding_set(args.set)
    evalkit.export_representations(net, s, args.out)
    print(f"wrote {s.count} representations to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.instances):
        k = int(rng.integers(2, 9))
        d_in = int(rng.integers(4, 17))
        d_out = int(rng.integers(2, d_in + 1))
        cfg = dnet.DNetConfig(
            in_dim=d_in, out_dim=d_out, init_seed=int(rng.integers(2**31))
        )
        net = dnet.init(cfg)
        net.zero_proj[:] = 0.3 * rng.standard_normal(net.zero_proj.shape)
        x = rng.standard_normal((2 * k, d_in))
        x[np.abs(x) < 1e-3] = 0.2
        tau = 0.5

        def f(params):
            for p, q in zip(net.params(), params):
                p[:] = q
            y, cache = net.forward_cached(x)
            z = ndcore.l2norm_rows(y)
            loss, dza, dzb = ndcore.infonce_loss(z[:k], z[k:], tau)
            dy = ndcore.l2norm_rows_backward(y, np.vstack([dza, dzb]))
            _, grads = net.backward(cache, dy)
            return loss, grads

        # step 1e-5 balances truncation against rounding for O(1) losses
        report = ndcore.grad_check(f, net.params(), step=1e-5)
        worst = max(worst, report.max_rel_err)
    print(f"max relative error over {args.instances} instances: {worst:.3e}")
    if worst > args.threshold:
        print(f"FAIL: exceeds threshold {args.threshold:.1e}", file=sys.stderr)
        return 1
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> _Parser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="promptlens", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    bank = sub.add_parser("bank", help="prompt bank tooling", formatter_class=fmt)
    bank_sub = bank.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    plan = bank_sub.add_parser(
        "plan", help="enumerate augmented prompts into a JSONL manifest",
        formatter_class=fmt,
    )
    plan.add_argument("--classes", required=True, help="text file, one class per line")
    plan.add_argument("--combo", default="ISD+AAC+SSO", help="plus-joined augmentations")
    plan.add_argument("--template", choices=("C", "PC", "CP"), default=None,
                      help="emit one evaluation-anchor prompt per class "
                           "instead of the augmentation space")
    plan.add_argument("--out", required=True, help="output manifest path (.jsonl)")
    plan.add_argument("--styles", default=None, help="styles JSON (default: built-in)")
    plan.add_argument("--adjectives", default=None, help="adjectives JSON (default: built-in)")
    plan.add_argument("--synonyms", default=None, help="synonyms JSON (default: built-in)")
    plan.set_defaults(func=cmd_bank_plan)

    tr = sub.add_parser("train", help="train the adapter on an embedding bank",
                        formatter_class=fmt)
    tr.add_argument("--bank", required=True, help="CLAPEMB1 bank of prompt embeddings")
    tr.add_argument("--config", default=None, help="TOML run config")
    tr.add_argument("--out", required=True, help="output CLAPNET1 checkpoint")
    tr.add_argument("--log", required=True, help="output training log JSON")
    tr.add_argument("--seed", type=int, default=None, help="training seed override")
    tr.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="zero-shot and probe evaluation",
                        formatter_class=fmt)
    ev_sub = ev.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add_eval_common(q):
        q.add_argument("--net", default=None, help="CLAPNET1 checkpoint (omit for raw baseline)")
        q.add_argument("--images", required=True, help="labeled image embedding set")
        q.add_argument("--class-texts-c", required=True, help="class-name prompt embeddings")
        q.add_argument("--class-texts-pc", required=True, help='"photo of" prompt embeddings')
        q.add_argument("--class-texts-cp", required=True, help='"in a photo" prompt embeddings')
        q.add_argument("--report", required=True, help="output report (.json or .csv)")
        q.add_argument("--dataset", default="", help="dataset name for the report")
        q.add_argument("--raw-text-anchors", action="store_true",
                       help="keep text anchors in the raw encoder space")
        q.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    zs = ev_sub.add_parser("zs", help="zero-shot sweep over the three templates",
                           formatter_class=fmt)
    add_eval_common(zs)
    zs.set_defaults(func=cmd_eval_zs)

    probe = ev_sub.add_parser("probe", help="text-trained linear probes",
                              formatter_class=fmt)
    add_eval_common(probe)
    probe.add_argument("--probe-train-c", default=None,
                       help="1-per-class text embeddings for the lin_C probe")
    probe.add_argument("--probe-train-isd", default=None,
                       help="per-style text embeddings for the lin_ISD probe")
    probe.add_argument("--probe-seed", type=int, default=0, help="probe shuffle seed")
    probe.set_defaults(func=cmd_eval_probe)

    synth = sub.add_parser("synth", help="synthetic latent-recovery testbed",
                           formatter_class=fmt)
    synth_sub = synth.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    run = synth_sub.add_parser("run", help="sample, train, and score one run",
                               formatter_class=fmt)
    run.add_argument("--config", default=None, help="TOML with a [synth] section")
    run.add_argument("--report", required=True, help="output report JSON")
    run.add_argument("--out-net", default=None, help="also save the trained checkpoint")
    run.add_argument("--out-log", default=None, help="also save the training log JSON")
    run.add_argument("--seed", type=int, default=None, help="generator seed override")
    run.add_argument("--pairs-per-class", type=int, default=128,
                     help="bank rows per class")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    run.set_defaults(func=cmd_synth_run)

    exp = sub.add_parser("export", help="export artifacts", formatter_class=fmt)
    exp_sub = exp.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    reps = exp_sub.add_parser("reps", help="write per-row representations as CSV",
                              formatter_class=fmt)
    reps.add_argument("--net", default=None, help="CLAPNET1 checkpoint (omit for raw rows)")
    reps.add_argument("--set", required=True, help="CLAPEMB1 embedding set")
    reps.add_argument("--out", required=True, help="output CSV path")
    reps.set_defaults(func=cmd_export_reps)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the full "
                        "adapter + loss gradient path", formatter_class=fmt)
    gc.add_argument("--instances", type=int, default=5, help="random instances to check")
    gc.add_argument("--threshold", type=float, default=1e-5, help="max relative error")
    gc.add_argument("--seed", type=int, default=0, help="instance seed")
    gc.set_defaults(func=cmd_gradcheck)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse --help (0) or usage error (1)
        return int(e.code or 0)
    try:
        return args.func(args)
    except (EmbeddingSetError, PromptError, ValueError, FloatingPointError, KeyError) as e:
        print(f"promptlens: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"promptlens: I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
