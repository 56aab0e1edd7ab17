import numpy as np
import pytest

from tskfuzz.data import SplitSpec, split, synth_gaussian, zscore_fit_transform
from tskfuzz.errors import ConfigError
from tskfuzz.initializers import InitSpec, init_model
from tskfuzz.model import Defuzz, TskModel
from tskfuzz.trainer import (
    AdamState,
    TrainConfig,
    TrainReport,
    effective_batch_size,
    evaluate,
    train,
)


def make_task(seed=0, n=300, d=10, labeling="cluster-separable"):
    ds = synth_gaussian(n, d, 2, seed=seed, labeling=labeling)
    tr, va, te = split(ds, SplitSpec(0.7, 0.15, seed=seed))
    tr, [va, te], _ = zscore_fit_transform(tr, [va, te])
    return tr, va, te


# ---- batch sizing -----------------------------------------------------------


def test_effective_batch_size_rules():
    assert effective_batch_size(512, 10_000) == 512
    assert effective_batch_size(512, 43) == 43
    assert effective_batch_size(512, 300) == 60
    assert effective_batch_size(60, 60) == 60
    assert effective_batch_size(1, 5) == 1
    with pytest.raises(ConfigError):
        effective_batch_size(0, 10)
    with pytest.raises(ConfigError):
        effective_batch_size(32, 0)


# ---- Adam -------------------------------------------------------------------


def test_adam_single_step_matches_formula():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = [np.array([1.0, -2.0])]
    g = [np.array([0.5, -0.25])]
    adam = AdamState(p)
    adam.step(p, g, lr, b1, b2, eps)
    # bias correction makes the first step lr * g / (|g| + eps)
    expect = np.array([1.0, -2.0]) - lr * g[0] / (np.abs(g[0]) + eps)
    np.testing.assert_allclose(p[0], expect, rtol=1e-12)


def test_adam_constant_gradient_converges_to_signed_step():
    p = [np.array([0.0])]
    g = [np.array([3.0])]
    adam = AdamState(p)
    before = 0.0
    for _ in range(50):
        prev = p[0][0]
        adam.step(p, g, 0.01, 0.9, 0.999, 1e-8)
        assert p[0][0] < prev  # monotone for a constant positive gradient
        step = prev - p[0][0]
        assert step < 0.011  # effective step never exceeds ~lr
        before = step
    assert abs(before - 0.01) < 1e-3


# ---- training loop ----------------------------------------------------------


def test_zero_learning_rate_is_a_no_op():
    tr, va, _ = make_task(seed=1)
    model = init_model(tr, 3, Defuzz.HTSK, InitSpec(seed=1, kmeans_restarts=1))
    cfg = TrainConfig(learning_rate=0.0, max_epochs=50, patience=3, seed=1)
    out, report = train(model, tr, va, cfg)
    np.testing.assert_array_equal(out.centers, model.centers)
    np.testing.assert_array_equal(out.widths, model.widths)
    np.testing.assert_array_equal(out.consequents, model.consequents)
    assert report.best_epoch == 1
    # nothing improves after epoch 1, so patience ends the run at 1 + patience
    assert report.epochs_run == 4
    assert report.restored_best is True


def test_train_does_not_mutate_input_model():
    tr, va, _ = make_task(seed=2)
    model = init_model(tr, 3, Defuzz.HTSK, InitSpec(seed=2, kmeans_restarts=1))
    centers0 = model.centers.copy()
    train(model, tr, va, TrainConfig(max_epochs=3, seed=2))
    np.testing.assert_array_equal(model.centers, centers0)


def test_returned_model_is_best_epoch_snapshot():
    tr, va, _ = make_task(seed=3)
    model = init_model(tr, 4, Defuzz.HTSK, InitSpec(seed=3, kmeans_restarts=1))
    out, report = train(model, tr, va, TrainConfig(max_epochs=12, patience=12, seed=3))
    acc, loss = evaluate(out, va)
    assert acc == max(report.val_accuracy)
    assert acc == report.val_accuracy[report.best_epoch - 1]
    np.testing.assert_allclose(loss, report.val_loss[report.best_epoch - 1], rtol=1e-12)
    assert report.restored_best == (report.best_epoch != report.epochs_run)


def test_training_is_deterministic():
    tr, va, _ = make_task(seed=4)
    cfg = TrainConfig(max_epochs=5, seed=9)
    model = init_model(tr, 3, Defuzz.LOGTSK, InitSpec(seed=4, kmeans_restarts=1))
    out1, rep1 = train(model, tr, va, cfg)
    out2, rep2 = train(model, tr, va, cfg)
    np.testing.assert_array_equal(out1.centers, out2.centers)
    np.testing.assert_array_equal(out1.consequents, out2.consequents)
    assert rep1.train_loss == rep2.train_loss
    assert rep1.val_accuracy == rep2.val_accuracy


def test_separable_task_reaches_high_accuracy():
    tr, va, _ = make_task(seed=5, n=400, d=10)
    model = init_model(tr, 2, Defuzz.HTSK, InitSpec(seed=5, kmeans_restarts=2))
    cfg = TrainConfig(learning_rate=0.05, batch_size=64, max_epochs=50, patience=50, seed=5)
    out, report = train(model, tr, va, cfg)
    assert max(report.val_accuracy) >= 0.95
    assert report.train_loss[-1] < report.train_loss[0]


def test_hooks_see_every_batch_and_epoch():
    tr, va, _ = make_task(seed=6, n=100)
    model = init_model(tr, 2, Defuzz.HTSK, InitSpec(seed=6, kmeans_restarts=1))
    events = []
    cfg = TrainConfig(batch_size=16, max_epochs=3, patience=3, seed=6)
    _, report = train(model, tr, va, cfg, hooks=[events.append])

    batches = [e for e in events if e.kind == "batch"]
    epochs = [e for e in events if e.kind == "epoch"]
    per_epoch = -(-tr.n_samples // 16)  # ceil: partial batches still train
    assert len(batches) == report.epochs_run * per_epoch
    assert [e.batch for e in batches] == list(range(1, len(batches) + 1))
    assert len(epochs) == report.epochs_run
    for e in batches:
        assert e.loss is not None and len(e.grad_l1) == 3
    for e in epochs:
        assert e.val_accuracy is not None and e.val_loss is not None
    assert [e.val_accuracy for e in epochs] == report.val_accuracy


def test_partial_final_batch_is_used():
    tr, va, _ = make_task(seed=7, n=100)
    assert tr.n_samples % 32 != 0  # the final batch really is partial
    model = init_model(tr, 2, Defuzz.HTSK, InitSpec(seed=7, kmeans_restarts=1))
    events = []
    train(model, tr, va, TrainConfig(batch_size=32, max_epochs=1, seed=7),
          hooks=[events.append])
    assert sum(1 for e in events if e.kind == "batch") == -(-tr.n_samples // 32)


def test_train_validates_inputs():
    tr, va, _ = make_task(seed=8)
    model = init_model(tr, 2, Defuzz.HTSK, InitSpec(seed=8, kmeans_restarts=1))
    wrong = synth_gaussian(30, tr.n_features + 1, 2, seed=0)
    with pytest.raises(ConfigError):
        train(model, wrong, va, TrainConfig())
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(adam_beta1=1.0)


def test_report_dict_excludes_wall_time_by_default():
    report = TrainReport(train_loss=[1.0], val_accuracy=[0.5], val_loss=[0.7],
                         best_epoch=1, epochs_run=1, restored_best=False,
                         wall_time_s=12.5)
    d = report.to_dict()
    assert "wall_time_s" not in d
    assert report.to_dict(include_wall_time=True)["wall_time_s"] == 12.5


def test_evaluate_empty_dataset_rejected():
    tr, va, _ = make_task(seed=9)
    model = init_model(tr, 2, Defuzz.HTSK, InitSpec(seed=9, kmeans_restarts=1))
    empty = tr.subset(np.array([], dtype=int))
    with pytest.raises(ConfigError):
        evaluate(model, empty)
