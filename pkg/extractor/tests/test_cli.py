from __future__ import annotations

import pytest

from hsx.cli import main

from .conftest import ROWS


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == "hsx 0.1.0"


def test_no_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--model", "m", "--dataset", "d", "--out", "o", "--fast"])
    assert exc.value.code == 2


def test_layers_and_stride_conflict():
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--model", "m", "--dataset", "d", "--out", "o",
              "--layers", "0,5", "--layer-stride", "2"])
    assert exc.value.code == 2


def test_bad_layers_value():
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--model", "m", "--dataset", "d", "--out", "o",
              "--layers", "0,five"])
    assert exc.value.code == 2


def test_bad_targets_choice():
    with pytest.raises(SystemExit) as exc:
        main(["extract", "--model", "m", "--dataset", "d", "--out", "o",
              "--targets", "answers"])
    assert exc.value.code == 2


def test_missing_dataset_prints_one_error_line(model_dir, tmp_path, capsys):
    rc = main(["extract", "--model", model_dir,
               "--dataset", str(tmp_path / "nope.jsonl"),
               "--out", str(tmp_path / "o.dtrv")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1
    assert err.startswith("error: FileNotFoundError:")


def test_bad_dataset_prints_dataset_error(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a"}\n')
    rc = main(["extract", "--model", "unused", "--dataset", str(bad),
               "--out", str(tmp_path / "o.dtrv")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: DatasetError:") and "missing key" in err


def test_tiny_model_then_extract(tmp_path, write_dataset, capsys, parse_dtrv):
    model = str(tmp_path / "model")
    rc = main(["tiny-model", "--out", model, "--seed", "1", "--n-layers", "6"])
    assert rc == 0
    assert "wrote tiny model" in capsys.readouterr().out

    out = str(tmp_path / "states.dtrv")
    rc = main(["extract", "--model", model, "--dataset", write_dataset(ROWS[:3]),
               "--out", out, "--batch-size", "2"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "3 records" in stdout and "layers=[0, 5]" in stdout
    meta, _ = parse_dtrv(out)
    assert meta["n_records"] == 3 and meta["dim"] == 64


def test_skip_manifest_printed(model_dir, write_dataset, tmp_path, capsys):
    rows = [dict(row) for row in ROWS[:3]]
    del rows[2]["query"]
    rc = main(["extract", "--model", model_dir, "--dataset", write_dataset(rows),
               "--out", str(tmp_path / "o.dtrv")])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "skipped 1 rows:" in stdout
    assert "  ex-2: missing query for targets=query" in stdout


def test_extract_all_skipped_is_operational_error(model_dir, write_dataset, tmp_path, capsys):
    rc = main(["extract", "--model", model_dir, "--dataset", write_dataset(ROWS[:2]),
               "--out", str(tmp_path / "o.dtrv"), "--max-tokens", "2"])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ExtractionError: all 2 rows were skipped")


def test_explicit_layers_flag(model_dir, write_dataset, tmp_path, capsys, parse_dtrv):
    out = str(tmp_path / "o.dtrv")
    rc = main(["extract", "--model", model_dir, "--dataset", write_dataset(ROWS[:2]),
               "--out", out, "--layers", "0,2,6", "--targets", "none",
               "--modes", "eos"])
    assert rc == 0
    meta, _ = parse_dtrv(out)
    assert meta["layer_ids"] == (0, 2, 6)
    assert meta["modes"] == ("eos",) and not meta["has_targets"]
