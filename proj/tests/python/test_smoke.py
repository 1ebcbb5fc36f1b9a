# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the mindcore extension module."""

import json
import math

import numpy as np
import pytest

import mindcore


def test_softmax_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=rng.integers(1, 32))
        got = mindcore.softmax(v)
        shifted = np.exp(v - v.max())
        expected = shifted / shifted.sum()
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)
        assert abs(got.sum() - 1.0) < 1e-9


def test_softmax_rejects_bad_input():
    with pytest.raises(mindcore.MindError):
        mindcore.softmax(np.array([]))
    with pytest.raises(mindcore.MindError):
        mindcore.softmax(np.array([1.0, np.nan]))


def test_gelu_asymptotes():
    out = mindcore.gelu(np.array([0.0, 10.0, -10.0]))
    assert out[0] == 0.0
    assert abs(out[1] - 10.0) < 1e-6
    assert abs(out[2]) < 1e-6


def test_topk_gate_invariants():
    rng = np.random.default_rng(1)
    for experts in (2, 4, 8):
        for k in range(1, experts + 1):
            p = mindcore.softmax(rng.normal(size=experts))
            prior = mindcore.softmax(rng.normal(size=experts))
            weights, selected, combined = mindcore.topk_gate(p, prior, k)
            assert len(selected) == k
            assert (weights >= 0).all()
            assert abs(weights.sum() - 1.0) < 1e-9
            assert (weights > 0).sum() <= k
            np.testing.assert_allclose(combined, p * prior, atol=1e-15)

            # Positive rescaling leaves the sparse weights unchanged.
            w2, s2 = mindcore.topk_normalize(combined * 37.5, k)
            assert list(s2) == list(selected)
            np.testing.assert_allclose(w2, weights, atol=1e-12)


def test_correlations_match_numpy():
    rng = np.random.default_rng(2)
    a = rng.normal(size=50)
    b = 0.5 * a + rng.normal(size=50)
    assert abs(mindcore.pearson(a, b) - np.corrcoef(a, b)[0, 1]) < 1e-12

    ranks = mindcore.average_ranks(np.array([1.0, 1.0, 2.0]))
    np.testing.assert_allclose(ranks, [1.5, 1.5, 3.0])
    assert mindcore.spearman(a, np.exp(a)) == pytest.approx(1.0)

    pred = b + 1.0
    ss_res = ((pred - b) ** 2).sum()
    ss_tot = ((b - b.mean()) ** 2).sum()
    assert mindcore.r_squared(pred, b) == pytest.approx(1.0 - ss_res / ss_tot)


def test_bin_to_tr_means():
    frames = np.array([[1.0], [2.0], [3.0], [4.0]])
    out = mindcore.bin_to_tr(frames, rate_hz=2.0, tr_seconds=2.0, n_tr=1)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(2.5)


def test_window_starts_tail():
    assert mindcore.window_starts(200, 100, 50) == [0, 50, 100]
    assert mindcore.window_starts(120, 100, 50) == [0, 20]


def test_onecycle_endpoints():
    peak = 0.01
    assert mindcore.onecycle_lr(0, peak, 25.0, 1e4, 0.3, 200) == pytest.approx(peak / 25.0)
    assert mindcore.onecycle_lr(60, peak, 25.0, 1e4, 0.3, 200) == pytest.approx(peak)
    assert mindcore.onecycle_lr(199, peak, 25.0, 1e4, 0.3, 200) == pytest.approx(peak / 1e4)


CONFIG = """
dims.d_in = 8
dims.d = 8
dims.hidden = 12
dims.out = 8
dims.experts = 4
dims.top_k = 2
dims.subjects = 2
dims.w_max = 256
train.epochs = 4
train.batch_size = 8
train.seed = 11
data.win = 40
data.stride = 20
synth.mode = shared
synth.sigma = 0.5
synth.episodes = 1
synth.tr_per_episode = 200
synth.teacher_experts = 4
synth.teacher_hidden = 12
"""


def test_end_to_end_train_eval(tmp_path):
    synth = mindcore.run_synth(CONFIG, str(tmp_path / "data"))
    assert 0.0 < synth["oracle_ceiling_mean"] <= 1.0

    train = mindcore.run_train(CONFIG, str(tmp_path / "run"))
    assert math.isfinite(train["best_val_pearson"])
    assert (tmp_path / "run" / "model.ckpt").exists()

    log = json.loads((tmp_path / "run" / "train_log.json").read_text())
    assert len(log["epochs"]) == 4
    assert log["expert_evals"] == 2 * log["tokens_seen"]

    result = mindcore.run_eval(CONFIG, str(tmp_path / "run" / "model.ckpt"),
                               str(tmp_path / "eval"))
    report = json.loads((tmp_path / "eval" / "metrics.json").read_text())
    assert report["global"]["mean_pearson"] == pytest.approx(result["mean_pearson"])

    # Re-aggregate externally from the per-parcel entries: parcels (excluding
    # degenerate ones) -> episodes -> subjects.
    by_subject = {}
    for episode in report["episodes"]:
        values = [r for r, dead in zip(episode["pearson"], episode["degenerate"]) if not dead]
        assert episode["mean_pearson"] == pytest.approx(float(np.mean(values)))
        by_subject.setdefault(episode["subject"], []).append(np.mean(values))
    subject_means = [float(np.mean(v)) for _, v in sorted(by_subject.items())]
    assert report["global"]["mean_pearson"] == pytest.approx(float(np.mean(subject_means)))


def test_isg_entry_point(tmp_path):
    result = mindcore.run_isg(CONFIG, str(tmp_path / "isg"))
    assert len(result["per_subject"]) == 2
    assert all(math.isfinite(r) for r in result["per_subject"])
    report = json.loads((tmp_path / "isg" / "isg.json").read_text())
    assert report["mean"] == pytest.approx(result["mean"])


def test_gradcheck_small_config():
    config = """
dims.d_in = 4
dims.d = 4
dims.hidden = 5
dims.out = 3
dims.experts = 3
dims.top_k = 2
dims.subjects = 2
dims.w_max = 64
train.seed = 3
"""
    result = mindcore.run_gradcheck(config)
    assert result["passed"]
    assert result["max_rel_error"] < 1e-4
