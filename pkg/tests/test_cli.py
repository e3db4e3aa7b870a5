import json

import pytest

from msic.cli import run

TINY = """# small smoke profile
data.n_patients = 40
model.hidden_dim = 8
model.latent_dim = 8
model.attention_heads = 2
train.epochs = 2
train.event_only_epochs = 1
train.lr = 1e-3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "c.cfg").write_text(TINY)
    assert run(["gen-data", "--config", str(d / "c.cfg"), "--seed", "7", "--out", str(d / "d.jsonl"),
                "--split"]) == 0
    assert run(["train", "--config", str(d / "c.cfg"), "--corpus", str(d / "d.train.jsonl"),
                "--vocab-dir", str(d), "--out", str(d / "m.ckpt"), "--telemetry", str(d / "t.jsonl")]) == 0
    return d


def test_gen_data_reproducible(workdir, tmp_path):
    assert run(["gen-data", "--config", str(workdir / "c.cfg"), "--seed", "7", "--out", str(tmp_path / "x.jsonl")]) == 0
    assert (tmp_path / "x.jsonl").read_bytes() == (workdir / "d.jsonl").read_bytes()


def test_evaluate_copy_is_one(workdir, capsys):
    real = str(workdir / "d.jsonl")
    assert run(["evaluate", "--real", real, "--synthetic", real, "--metrics", "unigram"]) == 0
    assert "unigram: 1.000000" in capsys.readouterr().out


def test_train_missing_corpus(workdir, capsys):
    code = run(["train", "--config", str(workdir / "c.cfg"), "--corpus", "missing.jsonl", "--out", "x"])
    assert code == 1 and "missing.jsonl" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["train", "--nope"], [], ["evaluate", "--real", "a"]])
def test_usage_errors(argv):
    assert run(argv) == 1


def test_bad_config_key(tmp_path):
    (tmp_path / "bad.cfg").write_text("train.learning_rate = 1\n")
    assert run(["gen-data", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "o.jsonl")]) == 1


@pytest.mark.parametrize("mode,extra", [("de-novo", ["--n-records", "5", "--reports"]),
                                        ("cross-type", ["--corpus", "d.test.jsonl"]),
                                        ("longitudinal", ["--corpus", "d.test.jsonl", "--steps", "2"])])
def test_synthesize_modes_deterministic(workdir, mode, extra):
    extra = [str(workdir / e) if e.endswith(".jsonl") else e for e in extra]
    outs = []
    for name in ("a", "b"):
        out = workdir / f"{mode}-{name}.jsonl"
        assert run(["synthesize", "--checkpoint", str(workdir / "m.ckpt"), "--vocab-dir", str(workdir),
                    "--mode", mode, "--seed", "3", "--out", str(out), *extra]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_synthesize_needs_corpus(workdir):
    assert run(["synthesize", "--checkpoint", str(workdir / "m.ckpt"), "--vocab-dir", str(workdir),
                "--mode", "cross-type", "--out", str(workdir / "o.jsonl")]) == 1


def test_evaluate_and_attack_reports(workdir):
    syn = workdir / "s.jsonl"
    assert run(["synthesize", "--checkpoint", str(workdir / "m.ckpt"), "--vocab-dir", str(workdir),
                "--mode", "de-novo", "--n-records", "20", "--out", str(syn)]) == 0
    assert run(["evaluate", "--real", str(workdir / "d.train.jsonl"), "--synthetic", str(syn),
                "--vocab-dir", str(workdir), "--out", str(workdir / "ev.json")]) == 0
    report = json.loads((workdir / "ev.json").read_text())
    assert set(report["values"]) == {"unigram", "bigram", "seq_bigram", "dimwise"}
    assert run(["attack", "--train", str(workdir / "d.train.jsonl"), "--test", str(workdir / "d.test.jsonl"),
                "--synthetic", str(syn), "--vocab-dir", str(workdir), "--out", str(workdir / "at.json")]) == 0
    values = json.loads((workdir / "at.json").read_text())["values"]
    assert 0 <= values["membership_accuracy"] <= 1 and "attribute_baseline_f1" in values


def test_unknown_metric(workdir):
    real = str(workdir / "d.jsonl")
    assert run(["evaluate", "--real", real, "--synthetic", real, "--metrics", "nope"]) == 1


def test_checkpoint_vocabulary_mismatch(workdir, tmp_path):
    (tmp_path / "symptom.vocab").write_text("X\n")
    for k in ("diagnosis", "medication"):
        (tmp_path / f"{k}.vocab").write_text((workdir / f"{k}.vocab").read_text())
    assert run(["synthesize", "--checkpoint", str(workdir / "m.ckpt"), "--vocab-dir", str(tmp_path),
                "--mode", "de-novo", "--n-records", "2", "--out", str(tmp_path / "o.jsonl")]) == 1


def test_log_level_env(workdir, monkeypatch):
    monkeypatch.setenv("MSIC_LOG", "debug")
    real = str(workdir / "d.jsonl")
    assert run(["evaluate", "--real", real, "--synthetic", real, "--metrics", "unigram", "--threads", "1"]) == 0
