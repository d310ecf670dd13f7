import json

import numpy as np
import pytest

from conftest import tiny_send_config
from send_diar import autodiff as ad
from send_diar.corpus import SimConfig, make_world, simulate_dataset
from send_diar.optim import Adam, OptimizerConfig
from send_diar.send import SendModel, send_forward, send_loss
from send_diar.training import TrainConfig, TrainingDiverged, fit, send_targets, train, validation_examples


def tiny_data(samples=3, seed=0):
    sim = SimConfig(seed=seed, num_speakers_range=(2, 2), turns_range=(2, 3), utterance_length_range=(6, 10),
                    feature_dim=6, embedding_dim=5, overlap_ratio=0.0)
    world = make_world(sim, 6)
    return simulate_dataset(sim, samples, world, np.arange(4), "t"), simulate_dataset(sim, 2, world, [4, 5], "v")


def test_learning_rate_schedule():
    cfg = OptimizerConfig(peak_lr=1.0, warmup_steps=4)
    assert [cfg.lr_at(s) for s in (1, 4, 16)] == [0.25, 1.0, 0.5]
    assert OptimizerConfig(peak_lr=0.0).lr_at(10) == 0.0


def test_zero_learning_rate_leaves_parameters(rng):
    model = SendModel(tiny_send_config(feature_dim=6, embedding_dim=5), rng)
    before = [p.data.copy() for p in model.parameters()]
    data = tiny_data()
    train(model, *data, TrainConfig(epochs=2, optimizer=OptimizerConfig(peak_lr=0.0)))
    for b, p in zip(before, model.parameters()):
        np.testing.assert_array_equal(b, p.data)


def test_overfits_a_single_sample(rng):
    model = SendModel(tiny_send_config(feature_dim=6, embedding_dim=5), rng)
    train_set, _ = tiny_data(samples=1)
    ex = validation_examples(train_set, 4, 0)[0]
    targets = send_targets(model, ex)
    cfg = TrainConfig(epochs=400, batch_size=1, optimizer=OptimizerConfig(peak_lr=1e-2, warmup_steps=0))
    records = fit(model.parameters(), lambda e: [ex], lambda ex: send_loss(send_forward(ex.features, ex.bank, model),
                                                                             targets), lambda: 0.0, cfg)
    assert records[-1].loss < 0.01


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_loss_aborts(rng):
    w = ad.Parameter(np.ones(2))
    w.data[0] = np.inf
    with pytest.raises(TrainingDiverged, match="nan"):
        fit([w], lambda e: [0], lambda ex: ad.sum(w - w), lambda: 0.0, TrainConfig(epochs=1))


def test_empty_training_set(rng):
    w = ad.Parameter(np.ones(2))
    with pytest.raises(ValueError):
        fit([w], lambda e: [], lambda ex: ad.sum(w), lambda: 0.0, TrainConfig(epochs=1))


def test_loss_non_increasing_on_separable_task():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(-2, 0.5, (40, 3)), rng.normal(2, 0.5, (40, 3))])
    y = np.repeat([0, 1], 40)
    w = ad.Parameter(np.zeros((3, 2)))
    b = ad.Parameter(np.zeros(2))
    cfg = TrainConfig(epochs=40, batch_size=1, optimizer=OptimizerConfig(peak_lr=0.05, warmup_steps=0))
    records = fit([w, b], lambda e: [0], lambda ex: ad.softmax_cross_entropy(ad.matmul(x, w) + b, y), lambda: 0.0, cfg)
    losses = [r.loss for r in records]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.05


def test_adam_clips_large_gradients():
    p = ad.Parameter(np.zeros(2))
    p.grad = np.array([300.0, 400.0])
    opt = Adam([p], OptimizerConfig(peak_lr=0.1, warmup_steps=0, grad_clip=5.0))
    assert opt.step() == pytest.approx(500.0)
    np.testing.assert_allclose(p.data, [-0.1, -0.1], atol=1e-6)


def test_report_records_seed_and_epochs(tmp_path, rng):
    model = SendModel(tiny_send_config(feature_dim=6, embedding_dim=5), rng)
    report = train(model, *tiny_data(), TrainConfig(epochs=2, seed=11), out_dir=tmp_path)
    lines = (tmp_path / "training_report.jsonl").read_text().splitlines()
    assert json.loads(lines[0]) == {"seed": 11}
    assert [json.loads(line)["epoch"] for line in lines[1:]] == [1, 2]
    assert (tmp_path / "model.bin").exists() and report.checkpoint


def test_training_is_deterministic():
    data = tiny_data()
    runs = []
    for _ in range(2):
        model = SendModel(tiny_send_config(feature_dim=6, embedding_dim=5), 3)
        runs.append(train(model, *data, TrainConfig(epochs=2, seed=4)).losses)
    assert runs[0] == runs[1]
