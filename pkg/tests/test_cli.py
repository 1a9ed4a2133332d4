import csv
import json
import math
from collections import defaultdict

import pytest

from episteer.cli import run
from episteer.data.synth import SynthConfig

FAST = ["--initial-epochs", "4", "--weekly-epochs", "2", "--source-epochs", "15", "--source-finetune-epochs", "2"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, src, train = root / "data", root / "src", root / "train"
    assert run(["synth", "--seed", "7", "--out", str(data)]) == 0
    panels = ["--wili", str(data / "wili.csv"), "--contamination-start", SynthConfig.contamination_start]
    assert run(["pretrain", "--out", str(src), *panels, *FAST]) == 0
    exo = ["--exogenous", str(data / "exogenous.csv"), "--graph", str(data / "graph.txt")]
    assert run(["train", "--out", str(train), *panels, *exo, "--source", str(src / "source.ckpt"), *FAST]) == 0
    return root, panels, exo


def test_synth_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run(["synth", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    for name in ("wili.csv", "exogenous.csv", "graph.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EPISTEER_SEED", "7")
    assert run(["synth", "--out", str(tmp_path / "env")]) == 0
    assert run(["synth", "--seed", "7", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "wili.csv").read_bytes() == (tmp_path / "flag" / "wili.csv").read_bytes()
    monkeypatch.setenv("EPISTEER_SEED", "seven")
    assert run(["synth", "--out", str(tmp_path / "bad")]) == 1


def test_train_without_source_is_a_usage_error(tmp_path, capsys, pipeline):
    root, panels, exo = pipeline
    code = run(["train", "--out", str(tmp_path), *panels, *exo, "--source", str(tmp_path / "missing.ckpt")])
    assert code == 1
    assert "episteer pretrain" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["fly"], ["synth"], ["synth", "--out", "x", "--missing-rate", "2"]])
def test_usage_errors_exit_one(argv, tmp_path):
    argv = [a if a != "x" else str(tmp_path / "x") for a in argv]
    assert run(argv) == 1


def test_invalid_config_file(tmp_path, pipeline):
    root, panels, exo = pipeline
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda_lap": -1.0}))
    args = ["pretrain", "--out", str(tmp_path / "o"), *panels, "--config", str(cfg)]
    assert run(args) == 1
    cfg.write_text(json.dumps({"no_such_field": 1}))
    assert run(args) == 1
    cfg.write_text("{")
    assert run(args) == 1


def test_train_outputs_and_manifest(pipeline):
    root = pipeline[0]
    train = root / "train"
    manifest = json.loads((train / "manifest_train.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["initial_epochs"] == 4
    assert len(manifest["config_hash"]) == 16 and manifest["version"]
    assert all(len(h) == 64 for h in manifest["inputs"].values())
    assert (train / "trace.csv").exists() and list((train / "bundles").glob("*.ckpt"))
    with open(train / "audit.csv") as fh:
        assert all(row["clean"] == "True" for row in csv.DictReader(fh))


def test_flags_override_config_file(tmp_path, pipeline):
    root, panels, _ = pipeline
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"source_epochs": 3, "source_finetune_epochs": 1, "seed": 4}))
    out = tmp_path / "o"
    assert run(["pretrain", "--out", str(out), *panels, "--config", str(cfg), "--source-epochs", "2"]) == 0
    manifest = json.loads((out / "manifest_pretrain.json").read_text())
    assert manifest["config"]["source_epochs"] == 2 and manifest["seed"] == 4
    assert len((out / "source_trace.csv").read_text().splitlines()) == 3


def test_evaluate_matches_independent_rmse(tmp_path, pipeline):
    root, panels, _ = pipeline
    fc = root / "train" / "forecasts.csv"
    out = tmp_path / "eval"
    assert run(["evaluate", "--out", str(out), *panels, "--forecasts", str(fc)]) == 0

    # recompute from the raw CSVs
    truth = {}
    with open(root / "data" / "wili.csv") as fh:
        for row in csv.DictReader(fh):
            truth[(row["epiweek"], row["region"])] = float(row["wili"])
    t1 = {"202009", "202010", "202011"}
    errs = defaultdict(list)
    with open(fc) as fh:
        for row in csv.DictReader(fh):
            if row["epiweek"] in t1:
                errs[row["region"]].append(float(row["pred"]) - truth[(row["epiweek"], row["region"])])
    expected = {r: math.sqrt(sum(e * e for e in v) / len(v)) for r, v in errs.items()}

    summary = json.loads((out / "cali_net_summary.json").read_text())
    got = summary["rmse"]["T1"]
    assert set(got) == set(expected)
    for r in expected:
        assert got[r] == pytest.approx(expected[r], abs=1e-12)
    comp = json.loads((out / "comparison.json").read_text())
    assert set(comp["best_performers"]["T"]) == {"cali_net", "hist"}
    assert (out / "heatmap_cali_net_vs_hist.csv").exists()


def test_forecast_from_bundle(tmp_path, pipeline):
    root, _, _ = pipeline
    bundle = sorted((root / "train" / "bundles").glob("*.ckpt"))[-1]
    as_of = bundle.stem
    out = tmp_path / "fc"
    code = run(["forecast", "--out", str(out), "--bundle", str(bundle),
                "--exogenous", str(root / "data" / "exogenous.csv"), "--as-of", as_of])
    assert code == 0
    with open(out / f"forecast_{as_of}.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11 and all(r["as_of"] == as_of for r in rows)
    # the bundle's own forecasts for that week agree
    with open(root / "train" / "forecasts.csv") as fh:
        trained = {r["region"]: float(r["pred"]) for r in csv.DictReader(fh) if r["as_of"] == as_of}
    for r in rows:
        assert float(r["pred"]) == pytest.approx(trained[r["region"]], abs=1e-12)


def test_forecast_rejects_earlier_as_of(tmp_path, pipeline):
    root, _, _ = pipeline
    bundle = sorted((root / "train" / "bundles").glob("*.ckpt"))[-1]
    code = run(["forecast", "--out", str(tmp_path), "--bundle", str(bundle),
                "--exogenous", str(root / "data" / "exogenous.csv"), "--as-of", "202001"])
    assert code == 1


def test_ablate_writes_reports(tmp_path, pipeline):
    root, panels, exo = pipeline
    out = tmp_path / "abl"
    code = run(["ablate", "--out", str(out), *panels, *exo, "--source", str(root / "src" / "source.ckpt"),
                "--variants", "cali_net,no_kd", *FAST])
    assert code == 0
    assert (out / "no_kd_summary.json").exists()
    with open(out / "heatmap_cali_net_vs_no_kd.csv") as fh:
        cells = [float(v) for row in csv.reader(fh) for v in row[1:] if row[0] != "region"]
    assert cells and all(-1 <= c <= 1 for c in cells)
    assert run(["ablate", "--out", str(out), *panels, *exo, "--source", str(root / "src" / "source.ckpt"),
                "--variants", "bogus"]) == 1


def test_inputs_are_not_modified(pipeline):
    root = pipeline[0]
    manifest = json.loads((root / "train" / "manifest_train.json").read_text())
    import hashlib

    for path, digest in manifest["inputs"].items():
        assert hashlib.sha256(open(path, "rb").read()).hexdigest() == digest
