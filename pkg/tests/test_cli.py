import csv
import io
import json

import numpy as np
import pytest

from latentfuzz.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_command

SMALL = ["--map_size", "64", "--vae-hidden", "32,16", "--filters", "8", "--deconv_blocks", "5",
         "--batch-size", "16", "--train_batch_size", "4", "--steps-per-pass", "3", "--k", "10"]


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert run_command(["fuzz", "--target", "csub", "--epochs", "2", "--seed", "3",
                        "--output", str(out), *SMALL]) == EXIT_OK
    return out


def test_fuzz_default_config_one_epoch(tmp_path, capsys):
    out = tmp_path / "j"
    assert run_command(["fuzz", "--target", "json", "--epochs", "1", "--seed", "1",
                        "--output", str(out)]) == EXIT_OK
    reports = (out / "reports.jsonl").read_text().splitlines()
    assert len(reports) == 1 and json.loads(reports[0])["epoch"] == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs"] == 1 and summary["output"] == str(out)
    assert json.loads((out / "config.json").read_text())["seed"] == 1


def test_snake_and_dashed_flags_agree(campaign):
    cfg = json.loads((campaign / "config.json").read_text())
    assert (cfg["map_size"], cfg["batch_size"], cfg["vae_hidden"]) == (64, 16, [32, 16])


def test_unknown_flag_is_usage_error(capsys):
    assert run_command(["fuzz", "--no-such-flag", "1"]) == EXIT_USAGE
    assert "no-such-flag" in capsys.readouterr().err
    assert run_command([]) == EXIT_USAGE
    assert run_command(["fuzz", "--k", "1"]) == EXIT_USAGE


def test_latent_eval_without_checkpoint(tmp_path, capsys):
    assert run_command(["latent-eval", "--campaign", str(tmp_path)]) == EXIT_RUNTIME
    assert "config.json" in capsys.readouterr().err


def test_resume_extends(campaign, tmp_path):
    import shutil
    d = shutil.copytree(campaign, tmp_path / "r")
    assert run_command(["fuzz", "--resume", str(d), "--epochs", "3"]) == EXIT_OK
    assert len((d / "reports.jsonl").read_text().splitlines()) == 3
    assert run_command(["fuzz", "--resume", str(d), "--k", "20"]) == EXIT_USAGE
    assert run_command(["fuzz", "--target", "csub", "--output", str(d)]) == EXIT_USAGE


def test_generate_random_and_supplied(campaign, tmp_path, capsys):
    assert run_command(["generate", "--campaign", str(campaign), "--n", "3",
                        "--out-dir", str(tmp_path / "g")]) == EXIT_OK
    assert len(list((tmp_path / "g").iterdir())) == 3
    lat = tmp_path / "z.json"
    lat.write_text(json.dumps(np.zeros((2, 16)).tolist()))
    capsys.readouterr()
    assert run_command(["generate", "--campaign", str(campaign), "--latents", str(lat)]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 2
    lat.write_text(json.dumps([[0.0] * 5]))
    assert run_command(["generate", "--campaign", str(campaign), "--latents", str(lat)]) == EXIT_RUNTIME


def test_rank_csv(campaign, capsys):
    assert run_command(["rank", "--campaign", str(campaign), "--limit", "4"]) == EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["rank", "index", "hash", "distance"] and 2 <= len(rows) <= 5
    assert float(rows[1][3]) == 0.0


def test_reports(campaign, tmp_path):
    out = tmp_path / "o"
    assert run_command(["ngram-report", "--campaign", str(campaign), "--out", str(out)]) == EXIT_OK
    assert out.read_text().startswith("length,rank,ngram,count")
    assert run_command(["ngram-report", "--campaign", str(campaign), "--inputs", "x"]) == EXIT_USAGE
    assert run_command(["latent-eval", "--campaign", str(campaign), "--n", "60", "--head", "5",
                        "--reps", "2", "--out", str(out)]) == EXIT_OK
    assert "fft_below_cft" in json.loads(out.read_text())
    assert run_command(["behaviour-eval", "--campaign", str(campaign), "--n", "5",
                        "--out", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())["distances"]) == 5
    assert run_command(["crash-report", "--campaign", str(campaign), "--out", str(out)]) == EXIT_OK
    assert isinstance(json.loads(out.read_text()), list)
