from __future__ import annotations

import csv

import numpy as np
import pytest

from demoret.errors import ConfigError, ValidationError
from demoret.evalharness import (
    EvalMetrics,
    SyntheticSpec,
    evaluate_retriever,
    format_table,
    generate_synthetic,
    layer_sweep,
    sweep_driver,
    write_metrics_dsv,
)
from demoret.hsc import derive_header
from demoret.labels import ProxyConfig
from demoret.model import ModelConfig, init_model
from demoret.training import TrainConfig

SPEC = SyntheticSpec(
    n_clusters=3, per_cluster=8, dev_per_cluster=4, dim=16, n_layers=4,
    informative_layer=1, snr=10.0, n_schemas=2, seed=5,
)


def small_setup():
    train, dev, cmap = generate_synthetic(SPEC)
    header_t = derive_header(train, SPEC.layer_ids)
    header_d = derive_header(dev, SPEC.layer_ids)
    return train, dev, cmap, header_t, header_d


def test_spec_validation():
    with pytest.raises(ConfigError, match="n_clusters"):
        SyntheticSpec(n_clusters=1).validate()
    with pytest.raises(ConfigError, match="informative_layer"):
        SyntheticSpec(informative_layer=5, n_layers=5).validate()
    with pytest.raises(ConfigError, match="snr"):
        SyntheticSpec(snr=0.0).validate()
    with pytest.raises(ConfigError, match="n_schemas"):
        SyntheticSpec(n_schemas=0).validate()
    assert SyntheticSpec(n_layers=3).layer_ids == (0, 1, 2)


def test_synthetic_counts_and_ids():
    train, dev, cmap = generate_synthetic(SPEC)
    assert len(train) == SPEC.n_clusters * SPEC.per_cluster
    assert len(dev) == SPEC.n_clusters * SPEC.dev_per_cluster
    assert len(cmap) == len(train) + len(dev)
    assert train[0].id == "train-c0-000"
    assert dev[-1].id == f"dev-c2-{SPEC.dev_per_cluster - 1:03d}"
    assert all(r.split == "train" for r in train)
    assert all(r.split == "dev" for r in dev)


def test_synthetic_schema_round_robin():
    train, _, _ = generate_synthetic(SPEC)
    for c in range(SPEC.n_clusters):
        group = [r for r in train if r.id.startswith(f"train-c{c}-")]
        for j, rec in enumerate(group):
            assert rec.schema_id == f"schema{j % SPEC.n_schemas}"


def test_synthetic_norm_structure():
    train, _, _ = generate_synthetic(SPEC)
    sqrt_d = np.sqrt(SPEC.dim)
    for rec in train[:6]:
        states = rec.problem_states["eos"].astype(np.float64)
        for li in range(SPEC.n_layers):
            norm = np.linalg.norm(states[li])
            if li == SPEC.informative_layer:
                # unit center plus noise of norm ~ 1/snr
                assert abs(norm - 1.0) < 0.5
            else:
                assert norm > 0.5 * sqrt_d
        targets = rec.target_states["eos"].astype(np.float64)
        for li in range(SPEC.n_layers):
            assert abs(np.linalg.norm(targets[li]) - 1.0) < 0.5


def test_synthetic_cluster_geometry():
    train, _, cmap = generate_synthetic(SPEC)
    li = SPEC.informative_layer

    def unit(rec):
        v = rec.problem_states["eos"][li].astype(np.float64)
        return v / np.linalg.norm(v)

    same = [r for r in train if cmap[r.id] == 0][:4]
    other = [r for r in train if cmap[r.id] == 1][:4]
    within = np.mean([unit(a) @ unit(b) for a in same for b in same if a is not b])
    across = np.mean([unit(a) @ unit(b) for a in same for b in other])
    assert within > 0.8
    assert within > across + 0.3


def test_synthetic_deterministic():
    t1, d1, m1 = generate_synthetic(SPEC)
    t2, d2, m2 = generate_synthetic(SPEC)
    assert m1 == m2
    for a, b in zip(t1 + d1, t2 + d2):
        assert a.id == b.id
        np.testing.assert_array_equal(a.problem_states["eos"], b.problem_states["eos"])
        np.testing.assert_array_equal(a.target_states["mean"], b.target_states["mean"])
    t3, _, _ = generate_synthetic(
        SyntheticSpec(**{**SPEC.__dict__, "seed": 6}))
    assert not np.array_equal(t1[0].problem_states["eos"], t3[0].problem_states["eos"])


def test_layer_sweep_finds_planted_layer():
    train, dev, cmap, header_t, _ = small_setup()
    rows = layer_sweep(header_t, train, dev, pooling="eos", similarity="cosine",
                       cluster_map=cmap)
    assert [r["layer_id"] for r in rows] == list(SPEC.layer_ids)
    recalls = {r["layer_id"]: r["cluster_recall_at_1"] for r in rows}
    best = max(recalls, key=recalls.get)
    assert best == SPEC.informative_layer
    assert recalls[best] > 0.9
    for li, rec in recalls.items():
        if li != SPEC.informative_layer:
            assert rec < recalls[best]


def test_layer_sweep_proxy_metrics_present():
    train, dev, cmap, header_t, _ = small_setup()
    pc = ProxyConfig(n_pos=2, n_neg=3)
    rows = layer_sweep(header_t, train, dev, pooling="eos", proxy_config=pc,
                       cluster_map=cmap)
    for row in rows:
        assert 0.0 <= row["recall_at_k"] <= 1.0
        assert "mean_top1_proxy" in row
        assert "cluster_recall_at_1" in row


def test_layer_sweep_rejects_bad_filter():
    train, dev, _, header_t, _ = small_setup()
    with pytest.raises(ConfigError, match="filter_mode"):
        layer_sweep(header_t, train, dev, pooling="eos", filter_mode="near")


def model_for_spec(seed=0) -> ModelConfig:
    return ModelConfig(dim=SPEC.dim, layer_ids=SPEC.layer_ids, hidden=8,
                       embed=6, pooling="eos", seed=seed)


def test_evaluate_retriever_reports_metrics():
    train, dev, cmap, header_t, header_d = small_setup()
    model = init_model(model_for_spec())
    pc = ProxyConfig(n_pos=2, n_neg=3)
    m = evaluate_retriever(model, header_t, train, header_d, dev, pc,
                           k=3, filter_mode="ood", cluster_map=cmap)
    assert m.n_queries == len(dev)
    assert m.k == 3
    assert m.filter_mode == "ood"
    assert 0.0 <= m.recall_at_k <= 1.0
    assert 0.0 <= m.cluster_recall_at_1 <= 1.0
    assert np.isfinite(m.mean_top1_proxy)


def test_evaluate_retriever_full_k_has_perfect_recall():
    # with k covering every admitted candidate the oracle top-1 is always hit
    train, dev, _, header_t, header_d = small_setup()
    model = init_model(model_for_spec())
    pc = ProxyConfig(n_pos=2, n_neg=3)
    m = evaluate_retriever(model, header_t, train, header_d, dev, pc,
                           k=len(train), filter_mode="none")
    assert m.recall_at_k == 1.0
    assert m.cluster_recall_at_1 is None


def test_evaluate_retriever_rejects_missing_targets():
    train, dev, _, header_t, header_d = small_setup()
    stripped = [
        type(r)(id=r.id, schema_id=r.schema_id, split=r.split,
                problem_states=r.problem_states, target_states=None)
        for r in train
    ]
    header_s = derive_header(stripped, SPEC.layer_ids)
    model = init_model(model_for_spec())
    with pytest.raises(ValidationError, match="target"):
        evaluate_retriever(model, header_s, stripped, header_d, dev,
                           ProxyConfig(n_pos=2, n_neg=3))


def test_evaluate_retriever_rejects_bad_args():
    train, dev, _, header_t, header_d = small_setup()
    model = init_model(model_for_spec())
    pc = ProxyConfig(n_pos=2, n_neg=3)
    with pytest.raises(ConfigError, match="filter_mode"):
        evaluate_retriever(model, header_t, train, header_d, dev, pc,
                           filter_mode="both")
    with pytest.raises(ConfigError, match="k"):
        evaluate_retriever(model, header_t, train, header_d, dev, pc, k=0)


def test_metrics_to_row_drops_missing():
    m = EvalMetrics(n_queries=4, k=1, filter_mode="none", similarity="dot")
    row = m.to_row()
    assert "mean_top1_proxy" not in row
    assert row["n_queries"] == 4


def test_sweep_driver_runs_per_value(tmp_path):
    train, dev, cmap, header_t, header_d = small_setup()
    pc = ProxyConfig(n_pos=2, n_neg=3)
    tc = TrainConfig(total_steps=4, checkpoint_every=2, batch_size=8, seed=1)
    rows = sweep_driver(
        "n_pos", [2, 3], header_t, train, header_d, dev, pc, tc,
        model_for_spec(), str(tmp_path), k=2, filter_mode="ood",
        cluster_map=cmap,
    )
    assert [r["value"] for r in rows] == [2, 3]
    for row in rows:
        assert row["param"] == "n_pos"
        assert np.isfinite(row["final_loss"])
        assert row["train_wall_s"] >= 0
        assert 0.0 <= row["recall_at_k"] <= 1.0
    assert (tmp_path / "n_pos_2" / "ckpt_final.dtrm").exists()
    assert (tmp_path / "n_pos_3" / "train_log.txt").exists()


def test_sweep_driver_rejects_bad_param(tmp_path):
    train, dev, _, header_t, header_d = small_setup()
    pc = ProxyConfig(n_pos=2, n_neg=3)
    tc = TrainConfig(total_steps=1, checkpoint_every=1)
    with pytest.raises(ConfigError, match="param"):
        sweep_driver("lr", [1e-3], header_t, train, header_d, dev, pc, tc,
                     model_for_spec(), str(tmp_path))
    with pytest.raises(ConfigError, match="at least one"):
        sweep_driver("n_pos", [], header_t, train, header_d, dev, pc, tc,
                     model_for_spec(), str(tmp_path))


def test_format_table_alignment():
    rows = [
        {"layer_id": 0, "recall_at_k": 0.5},
        {"layer_id": 1, "recall_at_k": 0.25, "extra": "x"},
    ]
    text = format_table(rows)
    lines = text.splitlines()
    assert lines[0].split() == ["layer_id", "recall_at_k", "extra"]
    assert set(lines[1]) <= {"-", " "}
    assert "0.500000" in lines[2]
    assert "0.250000" in lines[3]
    assert format_table([]) == "(no rows)\n"


def test_write_metrics_dsv_round_trip(tmp_path):
    rows = [
        {"param": "n_pos", "value": 2, "recall_at_k": 1.0 / 3.0},
        {"param": "n_pos", "value": 3, "recall_at_k": 0.5, "note": None},
    ]
    path = str(tmp_path / "m.csv")
    write_metrics_dsv(rows, path)
    with open(path, newline="") as f:
        got = list(csv.reader(f))
    assert got[0] == ["param", "value", "recall_at_k", "note"]
    assert got[1] == ["n_pos", "2", repr(1.0 / 3.0), ""]
    assert float(got[1][2]) == 1.0 / 3.0
    assert got[2][3] == ""


def test_write_metrics_dsv_rejects_empty(tmp_path):
    with pytest.raises(ValidationError, match="no rows"):
        write_metrics_dsv([], str(tmp_path / "m.csv"))
