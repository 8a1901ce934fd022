from dataclasses import replace

import numpy as np
import pytest

from promptmrc.synth import SyntheticCorpusSpec, generate_corpus
from promptmrc.training import (CrossValResult, TrainConfig, cross_validate, fold_split, select_cell,
                                task_instances, train_model)

TINY = TrainConfig(d=16, num_layers=1, num_heads=2, ffn_size=32, dropout_rate=0.0, max_epochs=3,
                   learning_rate=3e-3, batch_size=4)


@pytest.fixture(scope="module")
def concept_insts(small_corpus, synth_schema):
    return task_instances(small_corpus[:3], synth_schema, "concept")


def test_single_instance_memorised(concept_insts):
    inst = next(i for i in concept_insts if len(i.answer_spans) >= 1)
    cfg = replace(TINY, max_epochs=300, patience=300, learning_rate=1e-2, batch_size=1)
    model = train_model([inst], cfg)
    assert min(row["l_total"] for row in model.metadata["history"]) <= 1e-2
    assert model.predict_spans([inst]) == [sorted(inst.answer_spans)]


def test_same_seed_same_curve(concept_insts):
    a = train_model(concept_insts, TINY)
    b = train_model(concept_insts, TINY)
    assert [r["l_total"] for r in a.metadata["history"]] == [r["l_total"] for r in b.metadata["history"]]
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = train_model(concept_insts, replace(TINY, seed=9))
    assert [r["l_total"] for r in a.metadata["history"]] != [r["l_total"] for r in c.metadata["history"]]


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_zero_learning_rate_freezes_params(concept_insts, optimizer):
    cfg = replace(TINY, learning_rate=0.0, optimizer=optimizer, max_epochs=2, patience=10)
    model = train_model(concept_insts, cfg)
    init = train_model(concept_insts, replace(cfg, max_epochs=0))
    assert all(np.array_equal(model.params[k], init.params[k]) for k in model.params)


def test_training_loss_decreases(concept_insts):
    model = train_model(concept_insts, replace(TINY, max_epochs=6, patience=10))
    losses = [r["l_total"] for r in model.metadata["history"]]
    assert losses[-1] < losses[0]


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        train_model([], TINY)


def test_fold_split_properties():
    ids = [f"d{i}" for i in range(23)]
    folds = fold_split(ids, 5, seed=1)
    assert len(folds) == 5 and sorted(sum(folds, [])) == sorted(ids)
    assert {len(f) for f in folds} == {4, 5}
    assert fold_split(ids, 5, seed=1) == folds and fold_split(ids, 5, seed=2) != folds
    with pytest.raises(ValueError):
        fold_split(ids[:4], 5)


def test_select_cell_tie_break():
    assert select_cell({(1e-5, 4): 0.5, (3e-5, 1): 0.5, (1e-6, 8): 0.4}) == (3e-5, 1)
    assert select_cell({(1e-5, 4): 0.5, (1e-5, 8): 0.5}) == (1e-5, 8)
    assert select_cell({(1e-5, 4): 0.7}) == (1e-5, 4)


def test_cross_validate_single_cell(synth_schema):
    docs = generate_corpus(SyntheticCorpusSpec(num_documents=5, seed=4, max_sentences=3))
    cfg = replace(TINY, max_epochs=1, grid_learning_rates=(1e-3,), grid_batch_sizes=(8,))
    result = cross_validate(docs, synth_schema, cfg)
    assert isinstance(result, CrossValResult)
    assert len(result.table) == 5 and (result.best.learning_rate, result.best.batch_size) == (1e-3, 8)
    assert result.to_tsv().splitlines()[-1].startswith("0.001\t8\tselected")


def test_config_round_trip():
    cfg = replace(TINY, grid_learning_rates=(0.1, 0.2))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_monotone_memorisation_default_lr(concept_insts):
    inst = next(i for i in concept_insts if i.answer_spans)
    model = train_model([inst], TrainConfig(max_epochs=40, patience=100, batch_size=1))
    losses = [r["l_total"] for r in model.metadata["history"]]
    assert all(losses[2 * n - 1] <= losses[n - 1] + 1e-6 for n in range(1, 21))


def test_checkpoint_reproducible(concept_insts, tmp_path):
    a = train_model(concept_insts, TINY)
    b = train_model(concept_insts, TINY)
    a.save(tmp_path / "a.zip")
    b.save(tmp_path / "b.zip")
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()
