import math

import numpy as np
import pytest
import torch

from semrte.batching import collate, encode_corpus
from semrte.corpus import LabelInventory
from semrte.encoder import EncoderConfig, build_vocab
from semrte.errors import ConfigError, DataError
from semrte.fixtures import make_overfit_fixture
from semrte.fusion import EntailmentModel, FusionConfig
from semrte.training import (
    AdamState,
    GradCheckReport,
    PARAM_GROUPS,
    TrainConfig,
    adamw_step,
    batch_slices,
    cross_entropy,
    cross_entropy_from_logits,
    grad_check,
    train,
)

from test_fusion import _tiny_setup


def test_cross_entropy_uniform():
    assert cross_entropy((1 / 3, 1 / 3, 1 / 3), 0) == pytest.approx(math.log(3))


def test_cross_entropy_limit():
    assert cross_entropy((1 - 2e-9, 1e-9, 1e-9), 0) == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_validates():
    with pytest.raises(DataError, match="positive"):
        cross_entropy((0.0, 0.5, 0.5), 1)
    with pytest.raises(DataError, match="sum to 1"):
        cross_entropy((0.5, 0.2, 0.2), 1)


def test_cross_entropy_logits_matches_extended_precision():
    rng = np.random.default_rng(83)
    logits = rng.normal(scale=3.0, size=(16, 3))
    golds = rng.integers(0, 3, size=16)
    got = float(
        cross_entropy_from_logits(torch.from_numpy(logits), torch.from_numpy(golds))
    )
    ld = logits.astype(np.longdouble)
    per_example = np.log(np.exp(ld).sum(axis=1)) - ld[np.arange(16), golds]
    assert got == pytest.approx(float(per_example.mean()), abs=1e-9)


def test_cross_entropy_batch_mean():
    probs = [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25]]
    expected = (math.log(2) + math.log(2)) / 2
    assert cross_entropy(probs, [0, 1]) == pytest.approx(expected)


def _param_dict():
    return {
        "w": torch.full((2, 2), 2.0),
        "b": torch.zeros(3),  # 1-D: no decay
    }


def test_adamw_zero_grad_is_pure_decay():
    params = _param_dict()
    grads = {"w": torch.zeros(2, 2), "b": torch.zeros(3)}
    cfg = TrainConfig(learning_rate=1e-2, weight_decay=0.01)
    state = AdamState.fresh(params)
    adamw_step(params, grads, state, cfg)
    assert torch.allclose(params["w"], torch.full((2, 2), 2.0 * (1 - 1e-4)))
    assert torch.equal(params["b"], torch.zeros(3))


def test_adamw_single_step_closed_form():
    g = 0.7
    params = {"w": torch.zeros(1, 1)}
    grads = {"w": torch.full((1, 1), g)}
    cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
    adamw_step(params, grads, AdamState.fresh(params), cfg)
    # after one step m_hat = g, v_hat = g^2: update = -lr * g / (|g| + eps)
    expected = -cfg.learning_rate * g / (abs(g) + cfg.epsilon)
    assert float(params["w"]) == pytest.approx(expected, rel=1e-12)


def test_adamw_deterministic():
    outs = []
    for _ in range(2):
        params = _param_dict()
        state = AdamState.fresh(params)
        cfg = TrainConfig(learning_rate=3e-3, weight_decay=0.01)
        torch.manual_seed(5)
        for _step in range(10):
            grads = {
                "w": torch.randn(2, 2, generator=torch.Generator().manual_seed(_step)),
                "b": torch.randn(3, generator=torch.Generator().manual_seed(_step + 99)),
            }
            adamw_step(params, grads, state, cfg)
        outs.append({k: v.clone() for k, v in params.items()})
    assert torch.equal(outs[0]["w"], outs[1]["w"])
    assert torch.equal(outs[0]["b"], outs[1]["b"])


def test_adamw_shape_mismatch():
    params = {"w": torch.zeros(2, 2)}
    grads = {"w": torch.zeros(3)}
    with pytest.raises(DataError, match="shape"):
        adamw_step(params, grads, AdamState.fresh(params), TrainConfig())


def test_batch_slices_step_count():
    slices = batch_slices(16185, 12)
    assert len(slices) == 1349  # ceil(16185 / 12)
    assert len(slices[-1]) == 16185 - 1348 * 12
    assert sum(len(s) for s in slices) == 16185


def _encoded_overfit(seed=0, m=2):
    fixture = make_overfit_fixture(seed=seed)
    pairs = fixture.train_pairs
    vocab = build_vocab([t for p in pairs for t in p.text1 + p.text2], 3)
    inventory = LabelInventory.from_label_sequences(
        row for a in fixture.aspect_sets.values() for row in a.aspects
    )
    enc = EncoderConfig(d_model=32, layers=1, heads=2, ffn_dim=64, max_length=48, seed=14)
    fus = FusionConfig(label_embed_dim=8, gru_hidden=8, sem_proj_dim=16, num_aspects=m)
    model = EntailmentModel(vocab.size, inventory.num_ids, enc, fus)
    examples = encode_corpus(pairs, fixture.aspect_sets, vocab, inventory, m, 48)
    return model, examples


def test_train_requires_data(tmp_path):
    model, examples = _encoded_overfit()
    cfg = TrainConfig(epochs=1)
    with pytest.raises(DataError, match="training set is empty"):
        train(model, [], examples, cfg, tmp_path / "c.ckpt")


def test_train_lr_zero_freezes_parameters(tmp_path):
    model, examples = _encoded_overfit()
    before = {n: p.clone() for n, p in model.named_parameters()}
    cfg = TrainConfig(learning_rate=0.0, weight_decay=0.01, batch_size=8, epochs=3, seed=1)
    log = train(model, examples, examples, cfg, tmp_path / "c.ckpt")
    for n, p in model.named_parameters():
        assert torch.equal(before[n], p)
    losses = [r.train_loss for r in log.records]
    assert max(losses) - min(losses) < 1e-12


def test_train_seed_determinism(tmp_path):
    logs = []
    for run in range(2):
        model, examples = _encoded_overfit(seed=4)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=3, seed=11)
        logs.append(train(model, examples, examples, cfg, tmp_path / f"c{run}.ckpt"))
    a, b = logs
    assert [r.train_loss for r in a.records] == [r.train_loss for r in b.records]
    assert [r.val_accuracy for r in a.records] == [r.val_accuracy for r in b.records]
    assert [r.val_f1 for r in a.records] == [r.val_f1 for r in b.records]


def test_train_loss_decreases_on_separable_corpus(tmp_path):
    model, examples = _encoded_overfit(seed=2)
    cfg = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=12, seed=7)
    log = train(model, examples, examples, cfg, tmp_path / "c.ckpt")
    losses = [r.train_loss for r in log.records]
    for earlier, later in zip(losses, losses[1:]):
        assert later <= earlier * 1.05
    assert losses[-1] < losses[0]


def test_train_log_jsonl_one_record_per_epoch(tmp_path):
    model, examples = _encoded_overfit(seed=2)
    cfg = TrainConfig(learning_rate=1e-3, batch_size=16, epochs=2, seed=7)
    log = train(model, examples, examples, cfg, tmp_path / "c.ckpt")
    lines = log.to_jsonl().strip().splitlines()
    assert len(lines) == 3  # 2 epoch records + checkpoint pointer
    assert all(r.epoch == i + 1 for i, r in enumerate(log.records))


def _micro_setup():
    model, _, examples = _tiny_setup(m=2, seed=55)
    micro = EntailmentModel(
        model.encoder.vocab_size,
        model.semantics.num_label_ids,
        EncoderConfig(d_model=8, layers=1, heads=1, ffn_dim=12, max_length=24, seed=5),
        FusionConfig(label_embed_dim=4, gru_hidden=3, sem_proj_dim=6, num_aspects=2),
        dtype=torch.float64,
    )
    return micro, collate(examples[:2])


def test_grad_check_passes_on_micro_config():
    model, batch = _micro_setup()
    report = grad_check(model, batch, tolerance=1e-4)
    assert isinstance(report, GradCheckReport)
    assert set(report.group_errors) == set(PARAM_GROUPS)
    assert report.passed, report.group_errors


def test_grad_check_detects_corrupted_gradient():
    model, batch = _micro_setup()
    params = dict(model.named_parameters())
    for p in params.values():
        p.grad = None
    loss = cross_entropy_from_logits(model.forward_logits(batch), batch.golds)
    loss.backward()
    analytic = {n: p.grad.clone() for n, p in params.items()}
    name = max(analytic, key=lambda n: float(analytic[n].abs().max()))
    flat = analytic[name].view(-1)
    flat[int(flat.abs().argmax())] *= 2.0
    report = grad_check(model, batch, tolerance=1e-4, analytic=analytic)
    assert not report.passed


def test_grad_check_zero_loss_reports_zero_errors():
    model, batch = _micro_setup()
    # identical inputs with one gold per class and a zeroed classifier:
    # the batch-mean gradient vanishes everywhere
    ex = batch.examples[0]
    from semrte.batching import EncodedExample

    clones = [
        EncodedExample(
            pair_id=ex.pair_id,
            lang=ex.lang,
            gold=g,
            subword_ids=ex.subword_ids,
            word_spans=ex.word_spans,
            grid=ex.grid,
            predicates1=ex.predicates1,
            predicates2=ex.predicates2,
        )
        for g in (0, 1, 2)
    ]
    balanced = collate(clones)
    with torch.no_grad():
        model.cls_w.zero_()
        model.cls_b.zero_()
    report = grad_check(model, balanced, tolerance=1e-4)
    assert report.passed
    assert max(report.group_errors.values()) < 1e-6
