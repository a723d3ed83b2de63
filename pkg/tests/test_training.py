from __future__ import annotations

import logging
import math
import os

import numpy as np
import pytest

from demoret.errors import ConfigError, DataError, ShapeError, ValidationError
from demoret.hsc import derive_header, problem_matrix
from demoret.labels import ProxyConfig, build_label_set
from demoret.model import ModelConfig, embed_batch, init_model, load_checkpoint
from demoret.training import TrainConfig, TrainReport, contrastive_loss, train_loop

from conftest import make_records

LAYERS = (0, 3, 7)


def loss_reference(anchor, pos, neg, tau, normalize):
    # independent straight-line transcription, no stabilization tricks
    def unit(v):
        n = math.sqrt(sum(x * x for x in v))
        return [0.0] * len(v) if n <= 1e-12 else [x / n for x in v]

    a = unit(anchor) if normalize else list(anchor)
    cands = [list(p) for p in pos] + [list(n) for n in neg]
    if normalize:
        cands = [unit(c) for c in cands]
    sims = [sum(x * y for x, y in zip(a, c)) / tau for c in cands]
    z = sum(math.exp(s) for s in sims)
    total = 0.0
    for i in range(len(pos)):
        total -= math.log(math.exp(sims[i]) / z)
    return total


def test_uniform_similarity_closed_form():
    # all pool members identical to each other: q is uniform over the pool
    for n_pos, n_neg in [(1, 0), (2, 3), (5, 10), (3, 0)]:
        vec = np.array([0.3, -1.2, 0.5])
        pos = np.tile(vec, (n_pos, 1))
        neg = np.tile(vec, (n_neg, 1))
        anchor = np.array([1.0, 2.0, -0.5])
        loss, _, _, _ = contrastive_loss(anchor, pos, neg, tau=0.07, normalize=True)
        assert abs(loss - n_pos * math.log(n_pos + n_neg)) < 1e-9


def test_loss_matches_straight_line_reference():
    rng = np.random.default_rng(17)
    for trial in range(100):
        e = int(rng.integers(2, 6))
        n_pos = int(rng.integers(1, 5))
        n_neg = int(rng.integers(0, 6))
        anchor = rng.standard_normal(e)
        pos = rng.standard_normal((n_pos, e))
        neg = rng.standard_normal((n_neg, e))
        tau = float(rng.uniform(0.05, 1.0))
        normalize = bool(rng.integers(0, 2))
        loss, _, _, _ = contrastive_loss(anchor, pos, neg, tau=tau, normalize=normalize)
        ref = loss_reference(anchor, pos, neg, tau, normalize)
        assert abs(loss - ref) < 1e-6


@pytest.mark.parametrize("normalize", [True, False])
def test_loss_gradients_match_fd(normalize):
    # tau ~ 1 keeps the softmax away from saturation, where the true
    # gradients of the losing candidates shrink below what central
    # differences can resolve in float64
    rng = np.random.default_rng(23)
    e, n_pos, n_neg = 4, 3, 5
    anchor = rng.standard_normal(e)
    pos = rng.standard_normal((n_pos, e))
    neg = rng.standard_normal((n_neg, e))
    tau = 1.0
    _, da, dp, dn = contrastive_loss(anchor, pos, neg, tau=tau, normalize=normalize)

    h = 1e-6

    def fd_on(arr: np.ndarray) -> np.ndarray:
        g = np.zeros(arr.size)
        for i in range(arr.size):
            old = arr.flat[i]
            arr.flat[i] = old + h
            lu, *_ = contrastive_loss(anchor, pos, neg, tau=tau, normalize=normalize)
            arr.flat[i] = old - h
            ld, *_ = contrastive_loss(anchor, pos, neg, tau=tau, normalize=normalize)
            arr.flat[i] = old
            g[i] = (lu - ld) / (2 * h)
        return g

    for got, arr in [(da, anchor), (dp.ravel(), pos), (dn.ravel(), neg)]:
        fd_g = fd_on(arr)
        rel = np.abs(got - fd_g) / np.maximum(1e-12, np.abs(got) + np.abs(fd_g))
        assert rel.max() < 1e-5


def test_loss_validation():
    with pytest.raises(ConfigError):
        contrastive_loss(np.zeros(3), np.ones((1, 3)), None, tau=0.0)
    with pytest.raises(ValidationError):
        contrastive_loss(np.zeros(3), np.zeros((0, 3)), None)
    with pytest.raises(ShapeError):
        contrastive_loss(np.zeros(3), np.ones((1, 4)), None)
    bad = np.ones((1, 3))
    bad[0, 0] = np.inf
    with pytest.raises(ValidationError):
        contrastive_loss(np.zeros(3), bad, None)


def test_degenerate_anchor_gets_zero_gradient():
    pos = np.ones((2, 3))
    neg = np.ones((1, 3))
    loss, da, _, _ = contrastive_loss(np.zeros(3), pos, neg, normalize=True)
    assert np.all(da == 0)
    assert abs(loss - 2 * math.log(3)) < 1e-9


# ---------------------------------------------------------------------------
# training loop

def setup_run(n=12, seed=0, n_pos=2, n_neg=3):
    records = make_records(n, l_kept=3, dim=4, seed=seed)
    header = derive_header(records, LAYERS)
    labels = build_label_set(header, records, ProxyConfig(n_pos=n_pos, n_neg=n_neg, seed=seed))
    config = ModelConfig(dim=4, layer_ids=LAYERS, hidden=8, embed=6, seed=seed)
    return header, records, labels, init_model(config)


def test_loss_decreases_on_fixed_batch(tmp_path):
    header, records, labels, model = setup_run()
    config = TrainConfig(batch_size=len(labels.anchors), total_steps=50,
                         checkpoint_every=50, lr=1e-3, seed=0)
    report = train_loop(header, records, labels, model, config, str(tmp_path))
    assert len(report.losses) == 50
    assert report.losses[-1] < report.losses[0]


def test_checkpoint_cadence(tmp_path):
    header, records, labels, model = setup_run()
    config = TrainConfig(batch_size=4, total_steps=3, checkpoint_every=1, seed=0)
    report = train_loop(header, records, labels, model, config, str(tmp_path))
    steps = [s for s, _ in report.checkpoints]
    assert steps == [1, 2, 3, 3]  # three periodic + final
    assert len(report.checkpoints) == 4
    assert report.final_checkpoint.endswith("ckpt_final.dtrm")
    for _, path in report.checkpoints:
        assert os.path.exists(path)
    # final snapshot equals the step-3 snapshot
    m3, s3 = load_checkpoint(report.checkpoints[2][1])
    mf, sf = load_checkpoint(report.final_checkpoint)
    assert s3 == sf == 3
    for p1, p2 in zip(m3.layers, mf.layers):
        for a, b in zip(p1.arrays(), p2.arrays()):
            assert a.tobytes() == b.tobytes()


def test_training_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        header, records, labels, model = setup_run()
        config = TrainConfig(batch_size=4, total_steps=12, checkpoint_every=6, seed=3)
        out = tmp_path / name
        report = train_loop(header, records, labels, model, config, str(out))
        outs.append((report, out))
    r1, d1 = outs[0]
    r2, d2 = outs[1]
    assert r1.losses == r2.losses
    for (_, p1), (_, p2) in zip(r1.checkpoints, r2.checkpoints):
        assert open(p1, "rb").read() == open(p2, "rb").read()


def test_training_moves_parameters(tmp_path):
    header, records, labels, model = setup_run()
    before = init_model(ModelConfig(dim=4, layer_ids=LAYERS, hidden=8, embed=6, seed=0))
    config = TrainConfig(batch_size=4, total_steps=5, checkpoint_every=5, seed=0)
    train_loop(header, records, labels, model, config, str(tmp_path))
    loaded, _ = load_checkpoint(str(tmp_path / "ckpt_final.dtrm"))
    assert not np.array_equal(loaded.layers[0].w1, before.layers[0].w1)


def test_batch_larger_than_corpus_warns_and_clamps(tmp_path, caplog):
    header, records, labels, model = setup_run(n=6, n_pos=1, n_neg=2)
    config = TrainConfig(batch_size=64, total_steps=2, checkpoint_every=2, seed=0)
    with caplog.at_level(logging.WARNING, logger="demoret.training"):
        report = train_loop(header, records, labels, model, config, str(tmp_path))
    assert any("clamping" in r.message for r in caplog.records)
    assert len(report.losses) == 2


def test_missing_label_ids_raise(tmp_path):
    header, records, labels, model = setup_run()
    labels.anchors[0].positives[0] = ("ghost", 1.0)
    config = TrainConfig(batch_size=4, total_steps=1, checkpoint_every=1, seed=0)
    with pytest.raises(DataError):
        train_loop(header, records, labels, model, config, str(tmp_path))


def test_train_log_written(tmp_path):
    header, records, labels, model = setup_run()
    config = TrainConfig(batch_size=4, total_steps=3, checkpoint_every=3, seed=0)
    train_loop(header, records, labels, model, config, str(tmp_path))
    lines = open(tmp_path / "train_log.txt").read().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("step=1 loss=")
    assert "elapsed_s=" in lines[0]


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(temperature=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(total_steps=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(beta2=1.5).validate()
