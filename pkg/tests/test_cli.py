import json

from click.testing import CliRunner

from dualspace.cli import main


def test_gen_data(tmp_path):
    out = tmp_path / "corpus.jsonl"
    res = CliRunner().invoke(main, ["gen-data", "--out", str(out), "--n", "10"])
    assert res.exit_code == 0, res.output
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 10
    rec = json.loads(lines[0])
    assert set(rec) == {"instruction", "response"}


def test_simlab_single_run(tmp_path):
    res = CliRunner().invoke(main, [
        "simlab", "--distance", "kl", "--mode", "shared", "--iters", "5",
        "--lr", "1.0", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "curve.csv").exists()
    assert (tmp_path / "points_after.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["mode"] == "shared_head"
    assert summary["distance"] == "kl"


def test_train_and_evaluate_cycle(tmp_path):
    runner = CliRunner()
    corpus = tmp_path / "corpus.jsonl"
    assert runner.invoke(main, ["gen-data", "--out", str(corpus), "--n", "48"]).exit_code == 0

    cfg = {
        "arm": "sft", "dataset": str(corpus), "out_dir": str(tmp_path / "run"),
        "epochs": 1, "n_train": 16, "n_eval": 8, "batch_size": 8,
        "student": {"hidden_size": 16, "n_layers": 1, "n_heads": 2, "max_seq_len": 64},
        "teacher": {"hidden_size": 24, "n_layers": 1, "n_heads": 2, "max_seq_len": 64},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    res = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "run" / "student.ckpt").exists()

    res = runner.invoke(main, ["evaluate", "--ckpt", str(tmp_path / "run" / "student.ckpt"),
                               "--data", str(corpus), "--n-eval", "4", "--max-new", "4"])
    assert res.exit_code == 0, res.output
    assert "rouge" in res.output

    res = runner.invoke(main, ["compare", "--runs", str(tmp_path / "run"),
                               "--out", str(tmp_path / "cmp.csv")])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "cmp.csv").exists()


def test_train_rejects_missing_config(tmp_path):
    res = CliRunner().invoke(main, ["train", "--config", str(tmp_path / "nope.json")])
    assert res.exit_code != 0
