import csv

import pytest

from armpg import verify
from armpg.cli import main


def test_bogus_estimator_exits_2(capsys):
    assert_exit(["train", "--estimator", "bogus"], 2)
    err = capsys.readouterr().err
    assert "arm" in err and "resampled_a2c" in err


def assert_exit(argv, code):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == code


def test_unknown_flag_rejected():
    assert_exit(["train", "--learning-rate", "0.1"], 2)
    assert_exit(["fly"], 2)


def test_malformed_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("batch_size = lots\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "batch_size" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_train_smoke(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("batch_size = 128\ntotal_steps = 256\nseed = 9\n")
    out = tmp_path / "run"
    code = main(["-q", "train", "--config", str(cfg), "--env", "cartpole", "--horizon", "200",
                 "--estimator", "arm", "--advantage", "gae", "--seed", "0", "--hidden", "8", "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out == ""
    rows = list(csv.reader(open(out / "metrics.csv")))
    assert len(rows) == 3
    written = (out / "config.txt").read_text()
    assert "seed = 0" in written and "batch_size = 128" in written


def test_train_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("ARMPG_OUTPUT_ROOT", str(tmp_path))
    assert main(["train", "-q", "--batch-size", "32", "--total-steps", "32", "--hidden", "4"]) == 0
    assert (tmp_path / "cartpole-arm-s0" / "metrics.csv").exists()


def test_sweep_batch(tmp_path):
    code = main(["-q", "sweep", "--axis", "batch", "--sizes", "16,32", "--seeds", "0,1", "--iterations", "1",
                 "--hidden", "4", "--critic-epochs", "1", "--out", str(tmp_path)])
    assert code == 0
    agg = list(csv.reader(open(tmp_path / "aggregate.csv")))
    runs = list(csv.reader(open(tmp_path / "runs.csv")))
    assert len(runs) == 1 + 4 and len(agg) == 1 + 2


def test_sweep_bad_estimator(tmp_path):
    assert main(["-q", "sweep", "--axis", "seeds", "--estimators", "arm,nope", "--out", str(tmp_path)]) == 2


def test_verify_exit_codes(tmp_path, capsys, monkeypatch):
    assert main(["verify", "--suite", "advantage", "--suite", "coupled", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "advantage_identities" in out and "PASS" in out
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "coupled_sampling.csv").exists()

    def failing():
        return verify.SuiteResult("broken", False, "forced failure")

    monkeypatch.setitem(verify.SUITES, "advantage", failing)
    assert main(["verify", "--suite", "advantage"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_bernoulli_demo(tmp_path, capsys):
    assert main(["-q", "bernoulli-demo", "--dim", "2", "--samples", "2000", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "bernoulli.csv")))
    assert rows[0][:4] == ["instance", "estimator", "component", "oracle"]
    assert len(rows) == 1 + 4
    assert main(["bernoulli-demo", "--dim", "30"]) == 2
