"""Acceptance gate: every criterion at its stated tolerance, one pass/fail
line each (run with ``pytest tests/test_acceptance.py -v -s``)."""

import json
import math
import time
from contextlib import contextmanager

import numpy as np

from promptlens import dnet, ndcore
from promptlens.causalsim import CausalConfig, run_pipeline
from promptlens.cli import main
from promptlens.evalkit import make_report, summarize
from promptlens.promptgen import (
    AugmentCombo,
    Order,
    PromptSpec,
    Vocabulary,
    enumerate_space,
    render_prompt,
)
from promptlens.trainer import early_stop_decide


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"{name}: FAIL")
        raise
    print(f"{name}: PASS")


def random_net(rng, max_in=32):
    in_dim = int(rng.integers(1, max_in + 1))
    out_dim = int(rng.integers(1, in_dim + 1))
    hidden = int(rng.integers(1, max_in + 1))
    cfg = dnet.DNetConfig(
        in_dim=in_dim,
        out_dim=out_dim,
        hidden_dim=hidden,
        n_blocks=int(rng.integers(1, 4)),
        init_seed=int(rng.integers(2**31)),
    )
    return dnet.init(cfg)


def test_p1_zero_init_identity():
    with criterion("P1 zero-init identity (100 random configs, bitwise)"):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        for _ in range(100):
            net = random_net(rng)
            x = rng.standard_normal((int(rng.integers(0, 9)), net.config.in_dim))
            assert np.array_equal(net.forward(x), net.skip(x))
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_p2_gradient_fidelity():
    with criterion("P2 gradient fidelity (50 instances, rel err <= 1e-5)"):
        rng = np.random.default_rng(202)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            k = int(rng.integers(2, 9))
            d_in = int(rng.integers(4, 17))
            d_out = int(rng.integers(2, d_in + 1))
            hidden = int(rng.integers(2, 17))
            cfg = dnet.DNetConfig(
                in_dim=d_in, out_dim=d_out, hidden_dim=hidden,
                init_seed=int(rng.integers(2**31)),
            )
            net = dnet.init(cfg)
            net.zero_proj[:] = 0.3 * rng.standard_normal(net.zero_proj.shape)
            x = rng.standard_normal((2 * k, d_in))
            x[np.abs(x) < 1e-3] = 0.2
            tau = float(rng.choice([0.1, 0.5, 1.0]))

            def f(params):
                for p, q in zip(net.params(), params):
                    p[:] = q
                y, cache = net.forward_cached(x)
                z = ndcore.l2norm_rows(y)
                loss, dza, dzb = ndcore.infonce_loss(z[:k], z[k:], tau)
                dy = ndcore.l2norm_rows_backward(y, np.vstack([dza, dzb]))
                _, grads = net.backward(cache, dy)
                return loss, grads

            # step 1e-5 balances truncation against rounding for O(1) losses;
            # 1e-6 sits below the central-difference rounding floor here
            report = ndcore.grad_check(f, net.params(), step=1e-5)
            worst = max(worst, report.max_rel_err)
        elapsed = time.perf_counter() - start
        assert worst <= 1e-5, f"max rel err {worst:.2e}"
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


def test_p3_contrastive_loss_contracts():
    with criterion("P3 contrastive-loss contracts"):
        rng = np.random.default_rng(303)
        # K=1: loss exactly zero for any normalized pair
        for _ in range(10):
            z = rng.standard_normal((1, 6))
            z /= np.linalg.norm(z)
            zp = rng.standard_normal((1, 6))
            zp /= np.linalg.norm(zp)
            loss, _, _ = ndcore.infonce_loss(z, zp, tau=0.1)
            assert loss == 0.0
        # permutation invariance, bitwise
        z = rng.standard_normal((7, 5))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        zp = rng.standard_normal((7, 5))
        zp /= np.linalg.norm(zp, axis=1, keepdims=True)
        base, _, _ = ndcore.infonce_loss(z, zp, tau=0.1)
        for seed in range(10):
            perm = np.random.default_rng(seed).permutation(7)
            permuted, _, _ = ndcore.infonce_loss(z[perm], zp[perm], tau=0.1)
            assert permuted == base
        # K=2 orthonormal closed form at tau=1
        eye = np.eye(2)
        loss, _, _ = ndcore.infonce_loss(eye, eye.copy(), tau=1.0)
        assert abs(loss - math.log(1.0 + math.exp(-1.0))) <= 1e-9


def test_p4_metric_reproduction():
    with criterion("P4 metric reproduction from published numbers"):
        mean, delta, rng_ = summarize([96.4, 97.4, 92.0])
        assert abs(mean - 95.27) <= 0.01
        assert abs(delta - 2.35) <= 0.05
        assert abs(delta - 2.34) <= 0.05  # published value from unrounded data
        assert abs(rng_ - 5.40) <= 0.05
        assert abs(rng_ - 5.37) <= 0.05   # published value from unrounded data
        report = make_report(
            "pacs", {"C": 95.7, "PC": 95.7, "CP": 95.7}, lin_isd=90.5, lin_c=94.5,
        )
        # the probe delta is exactly the defined subtraction of the table
        # entries (the published table prints -5.3 from unrounded accuracies)
        assert report.delta_isd == 90.5 - 95.7
        assert abs(report.delta_isd - (-5.3)) <= 0.11
        assert abs(report.delta_c - (-1.2)) <= 1e-9  # published -1.2 exactly


def test_p5_augmentation_golden_strings():
    with criterion("P5 augmentation golden strings and space counts"):
        vocab = Vocabulary.default()
        photo = vocab.styles.index("photo")
        assert render_prompt(vocab, PromptSpec("bike", style=photo, order=Order.PC)) \
            == "a photo of a bike"
        assert render_prompt(
            vocab, PromptSpec("bike", adjective=vocab.adjectives.index("red"))
        ) == "a red bike"
        assert render_prompt(vocab, PromptSpec("bike", style=photo, order=Order.CP)) \
            == "a bike in a photo"
        assert render_prompt(
            vocab,
            PromptSpec("bike", synonym_choice=vocab.synonyms["bike"].index("bicycle")),
        ) == "a bicycle"

        # closed-form counts, cross-checked by an independent nested-loop count
        def oracle_count(combo, n_syn):
            total = 0
            for _sty in range(13) if combo.isd else [None]:
                for _adj in [None] + (list(range(42)) if combo.aac else []):
                    for _syn in [None] + (list(range(n_syn)) if combo.src else []):
                        orders = [0, 1] if combo.sso else [0]
                        total += len(orders)
            return total

        isd = AugmentCombo(isd=True)
        full = AugmentCombo.parse("ISD+AAC+SSO")
        assert len(enumerate_space(vocab, "dog", isd)) == 13 == oracle_count(isd, 0)
        assert len(enumerate_space(vocab, "dog", full)) == 1118 == oracle_count(full, 0)


def test_p6_early_stopping_protocol():
    with criterion("P6 early-stopping hand traces"):
        losses = [1.0, 0.5, 0.4999, 0.4999, 0.4999, 0.4999, 0.4999]
        assert early_stop_decide(losses, 0.001, 5) == (True, 6)
        decreasing = [1.0 - 0.01 * i for i in range(300)]
        assert early_stop_decide(decreasing, 0.001, 5) == (False, None)
        assert early_stop_decide([1.0, 1.0], 0.001, 1) == (True, 1)
        # constant loss: stop after patience+1 checkpoints
        assert early_stop_decide([0.5] * 50, 0.001, 5) == (True, 5)


def test_p7_synthetic_identifiability():
    # Thresholds pre-registered from the calibration run of this
    # implementation (2026-08-10, numpy 2.2.6): seeds 0-4 gave
    # content-style gaps [0.437, 0.454, 0.502, 0.420, 0.408], content R^2
    # 0.70-0.76, style R^2 0.24-0.32, baseline gaps -0.05..-0.01.
    # Committed margins: gap >= 0.20, content >= 0.50, and the trained gap
    # must strictly beat the raw-baseline gap.
    with criterion("P7 synthetic content-recovery margins (3 seeds)"):
        start = time.perf_counter()
        for seed in (0, 1, 2):
            config = CausalConfig(
                n_c=4, n_s=4, emb_dim=16, n_classes=8, n_samples=4000, seed=seed
            )
            net, log, report = run_pipeline(config)
            gap = report["content_style_gap"]
            assert report["content_r2"] >= 0.50, f"seed {seed}: {report}"
            assert gap >= 0.20, f"seed {seed}: gap {gap:.3f}"
            assert gap > report["baseline_gap"], f"seed {seed}: {report}"
        elapsed = time.perf_counter() - start
        assert elapsed < 300.0, f"took {elapsed:.1f}s"


def test_p8_synth_run_determinism(tmp_path):
    with criterion("P8 byte-identical synth runs"):
        cfg = tmp_path / "synth.toml"
        cfg.write_text(
            "[synth]\nn_samples = 800\nseed = 3\npairs_per_class = 32\n"
        )
        outputs = {}
        for tag in ("a", "b"):
            report = tmp_path / f"report_{tag}.json"
            net = tmp_path / f"net_{tag}.clapnet"
            log = tmp_path / f"log_{tag}.json"
            rc = main([
                "synth", "run", "--config", str(cfg), "--report", str(report),
                "--out-net", str(net), "--out-log", str(log), "--no-figures",
            ])
            assert rc == 0
            outputs[tag] = (report.read_bytes(), net.read_bytes(), log.read_bytes())
        assert outputs["a"] == outputs["b"]
        # the report parses and carries the documented fields
        parsed = json.loads(outputs["a"][0])
        for key in ("content_r2", "style_r2", "baseline_content_r2",
                    "baseline_style_r2", "train_log"):
            assert key in parsed
