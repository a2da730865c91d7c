import csv
import json

import pytest

from antijam.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_train_one_episode(tmp_path):
    out = tmp_path / "out"
    assert main(["train", "--algo", "mt", "--episodes", "1", "--out", str(out)]) == 0
    ck = out / "checkpoints" / "mt"
    for role in ("frequency", "power", "modulation"):
        assert (ck / f"{role}_current.qnet").is_file()
        assert (ck / f"{role}_target.qnet").is_file()
    rows = read_csv(out / "train_log_mt.csv")
    assert len(rows) == 2
    man = json.loads((out / "manifest_train_mt.json").read_text())
    assert man["subcommand"] == "train" and man["seed"] == 0 and len(man["config_sha256"]) == 64


def test_sweep_without_checkpoints_fails_cleanly(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sweep", "--out", str(out), "--runs", "2"]) != 0
    assert "missing checkpoint" in capsys.readouterr().err
    assert not out.exists() or not list(out.rglob("*.csv"))


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--algo", "nqc", "--out", str(tmp_path)]) == 2
    assert not list(tmp_path.rglob("*"))


def test_bad_config_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[radio]\nn_chanels = 4\n")
    assert main(["probe", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "n_chanels" in capsys.readouterr().err


def test_bad_flags_exit_nonzero(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--eps", "a,b"])
    assert e.value.code != 0
    with pytest.raises(SystemExit):
        main(["train", "--seed", "-1"])
    assert main(["probe", "--runs", "0", "--out", str(tmp_path)]) == 2


def test_full_pipeline_repeatable(tmp_path):
    def run(root):
        args = ["--out", str(root), "--seed", "7"]
        for algo in ("mt", "pgd", "nqc"):
            assert main(["train", "--algo", algo, "--episodes", "2", *args]) == 0
        assert main(["sweep", "--eps", "0,10", "--runs", "2", *args]) == 0
        assert main(["eval", "--algo", "greedy", "--eps", "5", "--runs", "2", *args]) == 0
        assert main(["eval", "--algo", "random", "--runs", "2", *args]) == 0
        assert main(["dump-q", "--algo", "nqc", *args]) == 0
        assert main(["probe", *args]) == 0
        return snapshot(root)

    a = run(tmp_path / "a")
    b = run(tmp_path / "b")
    assert a.keys() == b.keys()
    diff = [k for k in a if a[k] != b[k] and not k.startswith("manifest")]
    assert diff == []
    # manifests differ only by the output directory
    for k in a:
        if k.startswith("manifest"):
            ma, mb = json.loads(a[k]), json.loads(b[k])
            ma.pop("out"), mb.pop("out")
            assert ma == mb

    sweep = read_csv(tmp_path / "a" / "sweep.csv")
    assert sweep[0] == ["algorithm", "epsilon_w", "run_id", "cumulative_throughput_bits"]
    assert len(sweep) == 1 + 3 * 2 * 2
    acc = read_csv(tmp_path / "a" / "accuracy.csv")
    assert acc[0] == ["algorithm", "epsilon_w", "accuracy"]
    q = read_csv(tmp_path / "a" / "qdump_nqc.csv")
    assert q[0] == ["role", "slot", "action", "q_point", "q_low", "q_high"]
    probe = json.loads((tmp_path / "a" / "probe.json").read_text())
    assert probe["contraction_holds"] is True


def test_ablate_writes_table(tmp_path):
    assert main(["ablate", "--episodes", "1", "--runs", "1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "ablation.csv")
    assert rows[0] == ["variant", "seed", "cumulative_throughput_bits"]
    assert len(rows) == 5


def test_train_variant_tag(tmp_path):
    assert main(["train", "--episodes", "1", "--variant", "single_timescale", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "checkpoints" / "mt_single_timescale" / "bundle.json").is_file()
