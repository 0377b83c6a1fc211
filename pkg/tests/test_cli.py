"""Command-line surface: verbs, formats, exit codes."""

import json
import os

import numpy as np
import pytest

from dicekit.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from dicekit.serialize import save_tensor

from conftest import MICRO_CFG


@pytest.fixture
def micro_cfg_path(tmp_path):
    path = tmp_path / "micro.cfg"
    path.write_text(MICRO_CFG)
    return str(path)


def test_analyze_table(micro_cfg_path, capsys):
    assert main(["analyze", micro_cfg_path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "total" in out and "conv1" in out


def test_analyze_csv_parses(micro_cfg_path, capsys):
    assert main(["--format", "csv", "analyze", micro_cfg_path]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "layer,kind,macs,params,out_shape"
    for line in lines[1:]:
        assert len(line.split(",")) == 5


def test_analyze_json_and_out_file(micro_cfg_path, tmp_path):
    out = tmp_path / "report.json"
    assert main(["--format", "json", "--out", str(out),
                 "analyze", micro_cfg_path]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["total_macs"] > 0


def test_analyze_missing_file_exit_2(tmp_path):
    assert main(["analyze", str(tmp_path / "nope.cfg")]) == EXIT_USAGE


def test_analyze_bad_schema_exit_2(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("name: x\nwidth_scale: 1.0\nbogus_key: 3\n")
    assert main(["analyze", str(path)]) == EXIT_USAGE


def test_bench_checksums_match(capsys):
    assert main(["--format", "csv", "bench", "--op", "dimconv",
                 "--shape", "8,10,10", "--repeats", "2", "--warmup", "1"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split(",")
    ck = header.index("checksum")
    sums = {line.split(",")[ck] for line in lines[1:]}
    assert len(sums) == 1


def test_bench_single_repeat_zero_stddev(capsys):
    assert main(["--format", "csv", "bench", "--op", "dimconv", "--impl",
                 "fused", "--shape", "4,6,6", "--repeats", "1",
                 "--warmup", "0"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split(",")
    assert float(lines[1].split(",")[header.index("stddev_s")]) == 0.0


def test_verify_flops_suite(capsys):
    assert main(["verify", "--suite", "flops"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "closed_form" in out and "component_sum" in out


def test_verify_exit_code_on_failure(monkeypatch, capsys):
    # a perturbed kernel must be caught and named
    from dicekit import verify as vmod
    orig = vmod.run_suite
    monkeypatch.setattr(vmod, "run_suite",
                        lambda suite, seed=0, fault=None: orig(
                            "kernels", seed, fault="dimconv"))
    assert main(["verify", "--suite", "kernels"]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL" in out and "dimconv" in out


def test_train_and_infer_round_trip(micro_cfg_path, tmp_path, capsys):
    metrics = tmp_path / "metrics.csv"
    ck = tmp_path / "ck"
    assert main(["--out", str(metrics), "train", micro_cfg_path,
                 "--epochs", "1", "--count", "64",
                 "--checkpoint", str(ck)]) == EXIT_OK
    lines = metrics.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss,acc,ema_acc"
    assert len(lines) == 2
    assert os.path.exists(ck / "manifest.json")

    tensor = tmp_path / "x.dck"
    save_tensor(tensor, np.zeros((3, 32, 32)))
    assert main(["infer", micro_cfg_path, str(tensor),
                 "--checkpoint", str(ck), "--topk", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("sample 0:")
    assert len(out.split(":", 1)[1].split()) == 3


def test_train_same_seed_identical_metrics(micro_cfg_path, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["--seed", "3", "--out", str(path), "train",
                     micro_cfg_path, "--epochs", "1", "--count", "64"]) == EXIT_OK
    assert a.read_text() == b.read_text()


def test_infer_zero_tensor_scores_equal_bias(micro_cfg_path, tmp_path, capsys):
    tensor = tmp_path / "zero.dck"
    save_tensor(tensor, np.zeros((3, 32, 32)))
    assert main(["infer", micro_cfg_path, str(tensor)]) == EXIT_OK
    out = capsys.readouterr().out
    scores = [float(tok.split(":")[1]) for tok in out.split()[2:]]
    assert all(s == 0.0 for s in scores)       # fresh net: zero fc bias


def test_infer_off_nominal_input(micro_cfg_path, tmp_path, capsys):
    tensor = tmp_path / "big.dck"
    save_tensor(tensor, np.zeros((3, 48, 48)))
    assert main(["infer", micro_cfg_path, str(tensor)]) == EXIT_OK
    assert "sample 0:" in capsys.readouterr().out


def test_usage_error_exit_2():
    assert main(["frobnicate"]) == EXIT_USAGE
