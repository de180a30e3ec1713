import csv
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from eqsplit import cli
from eqsplit import experiments as ex
from eqsplit.operators import compression_rows, make_gaussian_cs, make_inpainting, save_operator

ROOT = Path(__file__).resolve().parents[1]
SMOKE = {
    "schema_version": 1, "name": "smoke", "problem": "inpainting",
    "dataset": {"name": "synthetic-prior", "train": 32, "test": 8, "side": 12},
    "operator": {"keep_prob": 0.4},
    "loss": {"kind": "es"},
    "model": {"hidden": [4], "kernel": 3},
    "train": {"epochs": 1, "batch_size": 16},
}


def _write(tmp_path, over=None, name="c.yaml"):
    p = tmp_path / name
    cfg = ex._merge(SMOKE, over or {})
    cfg.setdefault("output", str(tmp_path / "run"))
    p.write_text(yaml.safe_dump(cfg))
    return p


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bundled_smoke_run_is_fast(tmp_path):
    start = time.process_time()
    rows = ex.run(ROOT / "configs" / "smoke.yaml", output=tmp_path / "out")
    assert time.process_time() - start < 60
    assert rows[0]["split"] == "test"
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert names == {"config.yaml", "operator.eqop", "model.eqck", "epochs.csv", "metrics.csv"}


def test_identical_configs_give_identical_csvs(tmp_path):
    p = _write(tmp_path)
    ex.run(p, output=tmp_path / "a")
    ex.run(p, output=tmp_path / "b")
    for name in ("epochs.csv", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "model.eqck").read_bytes() == (tmp_path / "b" / "model.eqck").read_bytes()


def test_csv_schemas(tmp_path):
    ex.run(_write(tmp_path, {"train": {"epochs": 2}}), output=tmp_path / "r")
    epochs = _read(tmp_path / "r" / "epochs.csv")
    assert list(epochs[0]) == [c for c in ex.EPOCH_FIELDS if c != "seconds"]
    assert [int(r["epoch"]) for r in epochs] == [1, 2]
    metrics = _read(tmp_path / "r" / "metrics.csv")
    assert list(metrics[0]) == ex.METRIC_FIELDS
    # an equivariant-by-construction model on its own group sits at the cap
    assert float(metrics[0]["equiv_db"]) > 100


def test_different_seed_changes_results(tmp_path):
    ex.run(_write(tmp_path), output=tmp_path / "a")
    ex.run(_write(tmp_path, {"seeds": {"train": 9}}, "d.yaml"), output=tmp_path / "b")
    assert (tmp_path / "a" / "epochs.csv").read_bytes() != (tmp_path / "b" / "epochs.csv").read_bytes()


@pytest.mark.parametrize("kind", ["sup", "mc", "split", "ei", "ges", "es-reduced"])
def test_every_loss_kind_runs(tmp_path, kind):
    over = {"loss": {"kind": kind}, "dataset": {"train": 8, "test": 4}}
    if kind == "ges":
        over["noise_sigma"] = 0.05
    rows = ex.run(_write(tmp_path, over), output=tmp_path / kind)
    assert np.isfinite(rows[0]["psnr_mean"])


def test_tta_and_dft_problem(tmp_path):
    over = {"problem": "dft-subsample", "eval": {"tta": 2}, "dataset": {"train": 8, "test": 4}}
    rows = ex.run(_write(tmp_path, over), output=tmp_path / "d")
    assert np.isfinite(rows[0]["psnr_mean"])


def test_sweep_grid_matches_compression_levels():
    paths = sorted((ROOT / "configs" / "cs-sweep").glob("*.yaml"))
    levels = sorted(ex.RunConfig.load(p)["operator"]["compression"] for p in paths)
    assert levels == [50, 60, 70, 80, 90]
    assert [compression_rows(784, c) for c in sorted(levels, reverse=True)] == [78, 157, 235, 314, 392]


@pytest.mark.parametrize("over,match", [
    ({"schema_version": 2}, "schema_version"),
    ({"problem": "deblur"}, "problem"),
    ({"loss": {"kind": "l1"}}, "loss kind"),
    ({"seeds": {"train": None}}, "seed"),
    ({"model": {"arch": "unet"}}, "arch"),
    ({"noise_sigma": -0.1}, "noise"),
    ({"loss": {"kind": "sure"}}, "SURE"),
    ({"dataset": {"name": "mnist", "path": "/nonexistent"}}, "fetch"),
])
def test_config_errors(over, match):
    cfg = ex._merge(SMOKE, over)
    with pytest.raises(ex.ConfigError, match=match):
        ex.RunConfig.from_dict(cfg)


def test_missing_schema_version_and_bad_yaml(tmp_path):
    cfg = dict(SMOKE)
    del cfg["schema_version"]
    with pytest.raises(ex.ConfigError):
        ex.RunConfig.from_dict(cfg)
    (tmp_path / "bad.yaml").write_text("a: [1, 2\n")
    with pytest.raises(ex.ConfigError):
        ex.RunConfig.load(tmp_path / "bad.yaml")
    with pytest.raises(ex.ConfigError):
        ex.RunConfig.load(tmp_path / "missing.yaml")


def test_cli_run_and_eval_agree(tmp_path, capsys):
    p = _write(tmp_path)
    assert cli.main(["run", str(p), "--output", str(tmp_path / "r")]) == 0
    run_line = capsys.readouterr().out.strip()
    assert cli.main(["eval", str(tmp_path / "r" / "model.eqck"), "--out", str(tmp_path / "e.csv")]) == 0
    eval_line = capsys.readouterr().out.strip()
    a, b = yaml.safe_load(run_line), yaml.safe_load(eval_line)
    assert a["psnr_mean"] == b["psnr_mean"]
    assert _read(tmp_path / "e.csv")[0]["split"] == "test"


def test_cli_sweep(tmp_path, capsys):
    for i in range(2):
        _write(tmp_path, {"name": f"s{i}", "output": str(tmp_path / f"s{i}")}, f"s{i}.yaml")
    assert cli.main(["sweep", str(tmp_path / "s*.yaml")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert cli.main(["sweep", str(tmp_path / "none*.yaml")]) == 2


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = _write(tmp_path, {"problem": "deblur"})
    assert cli.main(["run", str(p)]) == 2
    assert "problem" in capsys.readouterr().err


def test_cli_verify(tmp_path, capsys):
    assert cli.main(["verify", "qrank", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "qrank: PASS" in out
    rows = _read(tmp_path / "qrank.csv")
    assert list(rows[0]) == ["suite", "check", "value", "tolerance", "mode", "passed"]
    assert cli.main(["verify", "nosuch", "--out", str(tmp_path)]) == 2


def test_cli_verify_reports_failure(tmp_path, monkeypatch, capsys):
    from eqsplit import verify

    def broken(seed=0):
        rep = verify.SuiteReport("broken")
        rep.add("always off", 1.0, 0.0)
        return rep

    monkeypatch.setitem(verify.SUITES, "broken", broken)
    assert cli.main(["verify", "broken", "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_qscan(tmp_path, capsys):
    path = tmp_path / "a.eqop"
    save_operator(path, make_inpainting(4, [1, 1, 0, 0]))
    assert cli.main(["qscan", str(path), "shift:4", "--out", str(tmp_path / "q.csv")]) == 0
    out = capsys.readouterr().out
    assert "verdict" in out and "rank 2/4" in out
    assert len(_read(tmp_path / "q.csv")) == 4
    assert cli.main(["qscan", str(path), "shift:4", "--rule", "bernoulli:0.5", "--out", str(tmp_path / "b.csv")]) == 0
    assert "Qbar: rank 4/4" in capsys.readouterr().out
    save_operator(tmp_path / "g.eqop", make_gaussian_cs(2, 9, seed=0))
    assert cli.main(["qscan", str(tmp_path / "g.eqop"), "shift:4"]) == 2
    assert cli.main(["qscan", str(path), "shift:4", "--rule", "uniform"]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "eqsplit", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("fetch", "run", "sweep", "verify", "qscan", "eval"):
        assert cmd in out.stdout
