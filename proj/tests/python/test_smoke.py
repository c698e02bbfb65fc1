import json
import math

import pytest

import bam


def test_eer_hand_cases():
    labels = [0, 0, 1, 1]
    assert bam.compute_eer([0.1, 0.2, 0.8, 0.9], labels)[0] == 0.0
    assert bam.compute_eer([0.9, 0.8, 0.2, 0.1], labels)[0] == 1.0
    assert bam.compute_eer([0.5, 0.5, 0.5, 0.5], labels)[0] == 0.5


def test_eer_needs_both_classes():
    with pytest.raises(ValueError):
        bam.compute_eer([0.1, 0.2], [1, 1])


def test_frame_labels_straddle():
    y, b = bam.frame_labels([(0, 2400, "genuine"), (2400, 4800, "spoof")], 4800, 8000, 160)
    assert y == [0, 1, 1]
    assert b == [0, 1, 0]


def test_frame_labels_rejects_overlap():
    with pytest.raises(ValueError):
        bam.frame_labels([(0, 3000, "genuine"), (2400, 4800, "spoof")], 4800, 8000, 160)


def test_adjacency_example():
    assert bam.adjacency([0, 0, 1, 0]) == [
        [1, 1, 0, 0],
        [1, 1, 0, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
    ]


def test_synthesis_is_deterministic():
    a = bam.synthesize_utterance(seed=3, index=1)
    b = bam.synthesize_utterance(seed=3, index=1)
    assert a["samples"] == b["samples"]
    assert a["spans"][0][0] == 0
    assert a["spans"][-1][1] == len(a["samples"])


def test_presets():
    desk = json.loads(bam.default_config("desk"))
    paper = json.loads(bam.default_config("paper"))
    assert desk["model"]["stride"] == 8
    assert paper["model"]["dim"] == 1024
    with pytest.raises(Exception):
        bam.default_config("nope")


def test_train_and_evaluate(tmp_path):
    corpus = tmp_path / "corpus"
    assert bam.generate_corpus(corpus, n_utts=20, seed=4) == 20
    history = bam.train(
        corpus,
        tmp_path / "run",
        ["train.epochs=1", "model.dim=8", "frontend.encoder_channels=4", "model.intra_channels=2"],
    )
    assert len(history) == 1
    assert math.isfinite(history[0]["train_loss"])
    reports = bam.evaluate(tmp_path / "run" / "best.bamc", corpus, "eval", [160, 320])
    assert [r["task"] for r in reports] == ["authenticity", "boundary"] * 2
    assert reports[2]["frames"] <= reports[0]["frames"] // 2 + 1


def test_gradcheck_passes():
    entries = bam.gradcheck(seed=3)
    assert entries
    assert all(e["passed"] for e in entries)
