import json

import pytest

from promptmrc.cli import main
from promptmrc.corpus import read_corpus, split_sentences
from promptmrc.synth import synthetic_schema

TINY = ["--d", "16", "--layers", "1", "--heads", "2", "--ffn", "32", "--dropout", "0"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def corpus(tmp_path, capsys):
    path = tmp_path / "corpus"
    assert run(capsys, "synth", "--out", path, "--docs", 10, "--seed", 7)[0] == 0
    return path


def tree_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_synth_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "synth", "--out", a, "--docs", 12, "--seed", 7)
    run(capsys, "synth", "--out", b, "--docs", 12, "--seed", 7)
    assert tree_bytes(a) == tree_bytes(b) and len(tree_bytes(a)) == 25
    run(capsys, "synth", "--out", tmp_path / "c", "--docs", 12, "--seed", 8)
    assert tree_bytes(tmp_path / "c") != tree_bytes(a)


def test_convert_counts(corpus, tmp_path, capsys):
    schema = corpus / "schema.json"
    docs = read_corpus(corpus, synthetic_schema())
    code, out, _ = run(capsys, "convert", "--brat", corpus, "--schema", schema, "--out", tmp_path / "c.jsonl")
    n_sent = sum(len(split_sentences(d)) for d in docs)
    assert code == 0 and f"instances={3 * n_sent}" in out
    code, out, _ = run(capsys, "convert", "--brat", corpus, "--schema", schema, "--mode", "relation",
                       "--out", tmp_path / "r.jsonl")
    n_trig = sum(1 for d in docs for m in d.concepts if m.category == "Drug")
    assert code == 0 and f"instances={2 * n_trig}" in out


def test_missing_schema_exit_code(corpus, tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code, _, err = run(capsys, "convert", "--brat", corpus, "--schema", missing, "--out", tmp_path / "x")
    assert code == 2 and err.startswith("error[config]") and str(missing) in err


def test_parse_error_exit_code(corpus, tmp_path, capsys):
    (corpus / "doc000.ann").write_text("T1\tDrug 5 2\tbad\n")
    code, _, err = run(capsys, "convert", "--brat", corpus, "--schema", corpus / "schema.json",
                       "--out", tmp_path / "x")
    assert code == 3 and err.startswith("error[parse]")


def test_bad_config_file(corpus, tmp_path, capsys, monkeypatch):
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    monkeypatch.setenv("PROMPTMRC_CONFIG", str(bad))
    code, _, err = run(capsys, "eval", "--gold", corpus, "--pred", corpus)
    assert code == 2 and "invalid JSON" in err


def test_eval_identity(corpus, tmp_path, capsys):
    code, out, _ = run(capsys, "eval", "--gold", corpus, "--pred", corpus, "--criterion", "strict",
                       "--json", tmp_path / "r.json")
    assert code == 0
    assert "concept\tstrict\tmicro_f1=1.0000" in out and "relation\tstrict\tmicro_f1=1.0000" in out
    assert json.loads((tmp_path / "r.json").read_text())[0]["micro"]["f1"] == 1.0


def test_config_file_and_flag_precedence(corpus, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema": str(corpus / "schema.json"),
                               "train": {"max_epochs": 1, "d": 8, "num_heads": 2, "num_layers": 1,
                                         "ffn_size": 8, "learning_rate": 0.5}}))
    code, out, _ = run(capsys, "train", "--config", cfg, "--brat", corpus, "--lr", 0.001, "--out",
                       tmp_path / "m.zip")
    assert code == 0 and "epochs=1" in out
    from promptmrc.model import MrcModel
    meta = MrcModel.load(tmp_path / "m.zip").metadata["train_config"]
    assert meta["learning_rate"] == 0.001 and meta["d"] == 8


def test_pipeline_with_no_triggers(tmp_path, capsys):
    corpus = tmp_path / "plain"
    corpus.mkdir()
    for k, text in enumerate(["Vitals are stable.\n", "No acute distress noted. Labs reviewed.\n",
                              "Follow up next month.\n"]):
        (corpus / f"p{k}.txt").write_text(text)
        (corpus / f"p{k}.ann").write_text("")
    synth = tmp_path / "s"
    run(capsys, "synth", "--out", synth, "--docs", 1)
    schema = synth / "schema.json"
    common = ["--schema", schema, "--brat", corpus, "--epochs", 30, "--lr", 0.01, *TINY]
    assert run(capsys, "train", *common, "--task", "trigger", "--out", tmp_path / "t.zip")[0] == 0
    assert run(capsys, "train", *common, "--out", tmp_path / "r.zip")[0] == 0
    code, out, _ = run(capsys, "pipeline", "--schema", schema, "--trigger-model", tmp_path / "t.zip",
                       "--relation-model", tmp_path / "r.zip", "--brat", corpus, "--out", tmp_path / "o")
    assert code == 0 and "triggers=0" in out and "triples=0" in out
    for k in range(3):
        assert (tmp_path / "o" / f"p{k}.ann").read_text() == ""


def test_pipeline_requires_trigger_model(corpus, tmp_path, capsys):
    code, _, err = run(capsys, "pipeline", "--schema", corpus / "schema.json", "--relation-model", "x.zip",
                       "--brat", corpus, "--out", tmp_path / "o")
    assert code == 2 and "--trigger-model" in err


def test_predict_rejects_other_schema(corpus, tmp_path, capsys):
    run(capsys, "train", "--schema", corpus / "schema.json", "--brat", corpus, "--epochs", 0, *TINY,
        "--out", tmp_path / "m.zip")
    code, _, err = run(capsys, "predict", "--schema", "drug_ade", "--checkpoint", tmp_path / "m.zip",
                       "--brat", corpus, "--out", tmp_path / "o")
    assert code == 2 and "different schema" in err
