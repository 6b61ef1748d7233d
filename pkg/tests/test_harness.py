import dataclasses
import json

import numpy as np
import pytest

from emocond import numcore as nc
from emocond.errors import ConfigError
from emocond.gradsuite import tiny_config
from emocond.harness import (
    ABLATION_COLUMNS, LOG_COLUMNS, LossWeights, Model, TrainConfig, Variant,
    ablate, combined_loss, evaluate, train,
)
from emocond.harness.evaluate import RidgeProbe, mean_abs_cross_cosine, probe_accuracy
from emocond.harness.run import run_experiment
from emocond.harness.train import make_batch, prepare
from emocond.synthdata import Corpus, CorpusSpec, make_corpus, split


def small_config(variant=Variant.V2, steps=30, seed=0, **kw):
    return TrainConfig(
        variant=variant, seed=seed, steps=steps, batch_size=8,
        corpus=CorpusSpec(num_speakers=2, num_emotions=3, frames=6, feature_dim=12, embed_dim=6,
                          pairs_per_stratum=6),
        **kw,
    ).validate()


def loss_setup(cfg, seed=0):
    model = Model.init(cfg)
    data = prepare(make_corpus(cfg.corpus_spec()), cfg)
    batch = make_batch(data, np.arange(4), cfg.model.frames_per_sample, np.random.default_rng(seed))
    return model, batch


# combined objective

@pytest.mark.parametrize("variant", list(Variant))
def test_breakdown_sums_to_total(variant):
    cfg = dataclasses.replace(tiny_config(1), variant=variant)
    model, batch = loss_setup(cfg)
    _, parts = combined_loss(model, batch, cfg)
    assert parts["cfm"] + parts["orth_weighted"] + parts["contrast_weighted"] == pytest.approx(
        parts["total"], abs=1e-12)


def test_zero_weights_reduce_to_flow_loss():
    cfg = dataclasses.replace(tiny_config(0, Variant.V3), weights=LossWeights(0.0, 0.0))
    model, batch = loss_setup(cfg)
    _, parts = combined_loss(model, batch, cfg)
    assert parts["total"] == parts["cfm"]
    v1 = dataclasses.replace(cfg, variant=Variant.V1)
    assert combined_loss(model, batch, v1)[1]["total"] == parts["total"]


def test_v1_ignores_regularizer_weights():
    cfg = tiny_config(2, Variant.V1)
    model, batch = loss_setup(cfg)
    a = combined_loss(model, batch, cfg)[1]
    b = combined_loss(model, batch, dataclasses.replace(cfg, weights=LossWeights(5.0, 5.0)))[1]
    assert a["total"] == b["total"] == a["cfm"]


def test_v4_with_inert_cross_attention_matches_v1():
    cfg = dataclasses.replace(tiny_config(3, Variant.V4), weights=LossWeights(0.0, 0.0))
    model, batch = loss_setup(cfg)
    ca = model.cross_attention
    model = dataclasses.replace(model, cross_attention=type(ca)(ca.W_q, ca.W_k, nc.tensor(np.zeros(ca.W_v.shape))))
    v4 = combined_loss(model, batch, cfg)[1]
    v1 = combined_loss(model, batch, dataclasses.replace(cfg, variant=Variant.V1))[1]
    for key in ("total", "cfm", "orth", "contrast"):
        assert v4[key] == pytest.approx(v1[key], abs=1e-12)


def test_regularizers_logged_even_when_inactive():
    cfg = tiny_config(0, Variant.V1)
    model, batch = loss_setup(cfg)
    parts = combined_loss(model, batch, cfg)[1]
    assert parts["orth"] > 0 and parts["contrast"] > 0
    assert parts["orth_weighted"] == parts["contrast_weighted"] == 0.0


# training loop

def test_single_step_moves_parameters():
    cfg = small_config(steps=1)
    corpus = make_corpus(cfg.corpus_spec())
    before = {k: v.copy() for k, v in Model.init(cfg).state().items()}
    model, rows = train(cfg, corpus)
    after = model.state()
    assert len(rows) == 1
    changed = [k for k in before if not np.array_equal(before[k], after[k])]
    assert "speaker_encoder.projection" in changed and "vector_field.W3" in changed


def test_training_log_is_deterministic(tmp_path):
    cfg = small_config(steps=20)
    corpus = make_corpus(cfg.corpus_spec())
    train(cfg, corpus, log_path=tmp_path / "a.csv")
    train(cfg, corpus, log_path=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(LOG_COLUMNS)


def test_log_steps_are_contiguous():
    cfg = small_config(steps=25)
    _, rows = train(cfg, make_corpus(cfg.corpus_spec()))
    assert [r["step"] for r in rows] == list(range(25))
    assert all(np.isfinite(r[c]) for r in rows for c in LOG_COLUMNS[1:])


def test_different_seeds_give_different_runs():
    a = train(small_config(seed=0, steps=5), make_corpus(small_config(seed=0).corpus_spec()))[1]
    b = train(small_config(seed=1, steps=5), make_corpus(small_config(seed=1).corpus_spec()))[1]
    assert a[-1]["loss_total"] != b[-1]["loss_total"]


@pytest.mark.slow
def test_orthogonality_regularizer_drives_its_loss_down():
    cfg = TrainConfig(variant=Variant.V2, seed=0).validate()
    train_split, _ = split(make_corpus(cfg.corpus_spec()), cfg.train_fraction, cfg.seed)
    _, rows = train(cfg, train_split)
    assert rows[-1]["loss_orth"] < 0.1 * rows[0]["loss_orth"]


# evaluation

def test_cross_cosine_oracle():
    S = np.array([[1.0, 0.0], [1.0, 1.0]])
    E = np.array([[0.0, 2.0], [-1.0, -1.0]])
    assert mean_abs_cross_cosine(S, E) == pytest.approx(0.5)


def test_ridge_probe_separable_and_chance():
    g = np.random.default_rng(0)
    y = np.repeat(np.arange(4), 100)
    centers = g.normal(size=(4, 5)) * 10
    X = centers[y] + g.normal(size=(400, 5))
    assert RidgeProbe().fit(X, y).score(X, y) == 1.0
    # label-independent embeddings, balanced labels: accuracy near 1/4
    accs = []
    for seed in range(20):
        g = np.random.default_rng(100 + seed)
        accs.append(probe_accuracy(g.normal(size=(400, 5)), g.permutation(y),
                                   g.normal(size=(400, 5)), g.permutation(y)))
    assert abs(np.mean(accs) - 0.25) < 0.03


def test_evaluate_is_deterministic():
    cfg = small_config(steps=10)
    corpus = make_corpus(cfg.corpus_spec())
    tr, ev = split(corpus, 0.5, 0)
    model, _ = train(cfg, tr)
    a = evaluate(model, tr, ev, eval_pairs=3).to_dict()
    b = evaluate(model, tr, ev, eval_pairs=3).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["direction_recovery_cosine"] is not None and a["notes"] == []


def test_missing_ground_truth_leaves_recovery_empty():
    cfg = small_config(steps=2)
    corpus = make_corpus(cfg.corpus_spec())
    tr, ev = split(corpus, 0.5, 0)
    model, _ = train(cfg, tr)
    blind = Corpus(ev.spec, ev.samples, None)
    report = evaluate(model, tr, blind, eval_pairs=3)
    assert report.direction_recovery_cosine is None
    assert any("ground truth" in n for n in report.notes)
    assert 0.0 <= report.emotion_probe_acc <= 1.0


# experiments and ablation

def test_run_experiment_writes_report(tmp_path):
    cfg = small_config(steps=5)
    result = run_experiment(cfg, out_dir=tmp_path)
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["corpus_hash"] == result.corpus_hash
    assert payload["config"]["variant"] == "v2"
    assert (tmp_path / "train_log.csv").exists()


def test_ablation_rows_share_corpus(tmp_path):
    rows = ablate(small_config(steps=5), out_dir=tmp_path)
    assert [r["variant"] for r in rows] == ["v1", "v2", "v3", "v4"]
    assert len({r["corpus_hash"] for r in rows}) == 1
    assert all(r["status"] == "ok" for r in rows)
    header = (tmp_path / "ablation.csv").read_text().splitlines()[0]
    assert header == ",".join(ABLATION_COLUMNS)


def test_failing_variant_is_recorded(monkeypatch):
    import emocond.harness.run as run_mod

    real = run_mod.run_experiment

    def flaky(cfg, corpus=None, out_dir=None):
        if cfg.variant is Variant.V3:
            raise FloatingPointError("boom")
        return real(cfg, corpus, out_dir)

    monkeypatch.setattr(run_mod, "run_experiment", flaky)
    rows = ablate(small_config(steps=3))
    status = {r["variant"]: r["status"] for r in rows}
    assert status == {"v1": "ok", "v2": "ok", "v3": "failed", "v4": "ok"}
    failed = rows[2]
    assert "boom" in failed["error"] and failed["mean_abs_cross_cosine"] == ""


# configuration

def test_overrides_parse_json_values():
    cfg = TrainConfig().with_overrides(["steps=12", "weights.lambda_orth=0.3", "variant=v4", "corpus.seed=5"])
    assert cfg.steps == 12 and cfg.weights.lambda_orth == 0.3 and cfg.variant is Variant.V4


@pytest.mark.parametrize("item", ["nosuch=1", "weights.nope=2", "steps"])
def test_bad_override_paths(item):
    with pytest.raises(ConfigError):
        TrainConfig().with_overrides([item])


@pytest.mark.parametrize("item", ["steps=0", "lr=-1", "batch_size=1", "variant=v9", "train_fraction=1.5"])
def test_invalid_values_rejected(item):
    with pytest.raises(ConfigError):
        TrainConfig().with_overrides([item]).validate()


def test_config_round_trip():
    cfg = TrainConfig().with_overrides(["variant=v3", "model.hidden=8"])
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_model_save_load_round_trip(tmp_path):
    cfg = small_config(steps=3)
    model, _ = train(cfg, make_corpus(cfg.corpus_spec()))
    model.save(tmp_path)
    loaded = Model.load(tmp_path, cfg)
    for (name, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert np.array_equal(a.data, b.data), name
