import json

import numpy as np
import pytest

from patchnet import network as N
from patchnet import trainer as Tr
from patchnet.data import LabeledImage, build_training_pool
from patchnet.errors import DivergenceError, MissingClassError


def _tiny_pool(seed=0, n_images=2, size=8):
    """Bright 5 x 5 blocks are class 1, dark ones class 0."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n_images):
        labels = np.kron(rng.integers(0, 2, size=(4, 4)), np.ones((5, 5), dtype=np.int64))[:10, :10]
        pixels = np.repeat((0.2 + 0.6 * labels)[None], 3, axis=0) + rng.normal(0, 0.05, (3, 10, 10))
        images.append(LabeledImage(np.clip(pixels, 0, 1), labels))
    return build_training_pool(images, 100, rng=seed, size=size)


def test_sgd_step_matches_hand_update():
    model = N.build(N.tiny_spec("road"), "normalized", 0)
    state = Tr.OptimizerState(model)
    before = [p.copy() for _, _, p, _ in model.parameters()]
    grads = {(i, n): np.full_like(p, 0.5) for i, n, p, _ in model.parameters()}
    Tr.sgd_step(model, state, lr=0.1, momentum=0.9, grads=grads)
    Tr.sgd_step(model, state, lr=0.1, momentum=0.9, grads=grads)
    # v1 = -0.05, v2 = 0.9 * v1 - 0.05 = -0.095; total -0.145
    for b, (_, _, p, _) in zip(before, model.parameters()):
        np.testing.assert_allclose(p, b - 0.145, rtol=1e-6, atol=1e-6)


def test_zero_momentum_is_plain_sgd():
    model = N.build(N.tiny_spec("road"), "normalized", 1)
    state = Tr.OptimizerState(model)
    for _, _, _, g in model.parameters():
        g[...] = 1.0
    before = [p.copy() for _, _, p, _ in model.parameters()]
    for _ in range(3):
        Tr.sgd_step(model, state, lr=0.01, momentum=0.0)
    for b, (_, _, p, _) in zip(before, model.parameters()):
        np.testing.assert_allclose(p, b - 0.03, atol=1e-6)


def test_class_weights():
    assert Tr.compute_class_weights({0: 4, 1: 1}) == {0: 0.25, 1: 1.0}
    assert Tr.compute_class_weights({0: 4, 1: 0}) == {0: 0.25}
    with pytest.raises(MissingClassError):
        Tr.compute_class_weights({0: 4, 1: 0}, classes=[0, 1])


@pytest.mark.parametrize("kwargs", [
    {"batch_size": 0}, {"learning_rate": 0.0}, {"momentum": 1.0},
    {"iterations_per_epoch": 0}, {"weighting": "balanced"}, {"init": "xavier"},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        Tr.TrainConfig(**kwargs)


def _tiny_config(**kw):
    base = dict(batch_size=16, learning_rate=0.05, momentum=0.9, epochs=3, iterations_per_epoch=40, seed=4)
    base.update(kw)
    return Tr.TrainConfig(**base)


def test_training_learns_easy_task():
    pool = _tiny_pool()
    # a 2-filter ReLU net can start dead; this seed does not
    model = N.build(N.tiny_spec("road", spatial_prior=False), "normalized", 1)
    before = Tr.evaluate_pool(model, pool)
    report = Tr.train(model, pool, _tiny_config(learning_rate=0.01), validate=lambda m: Tr.evaluate_pool(m, pool))
    assert report.records[-1]["val_loss"] < before["val_loss"]
    assert report.records[-1]["val_accuracy"] > 0.9
    assert [r["epoch"] for r in report.records] == [1, 2, 3]


def test_training_is_deterministic():
    pool = _tiny_pool(1)
    models = []
    for _ in range(2):
        m = N.build(N.tiny_spec("road"), "normalized", 7)
        Tr.train(m, pool, _tiny_config(epochs=1))
        models.append(m.to_bytes())
    assert models[0] == models[1]
    other = N.build(N.tiny_spec("road"), "normalized", 7)
    Tr.train(other, pool, _tiny_config(epochs=1, seed=5))
    assert other.to_bytes() != models[0]


def test_divergence_is_reported():
    pool = _tiny_pool(2)
    model = N.build(N.tiny_spec("road", spatial_prior=False), "normalized", 0)
    for _, _, p, _ in model.parameters():
        p[...] = np.nan
    with pytest.raises(DivergenceError) as info:
        Tr.train(model, pool, _tiny_config(epochs=1))
    assert info.value.iteration == 0


def test_callbacks_and_report(tmp_path):
    pool = _tiny_pool(3)
    model = N.build(N.tiny_spec("urban", spatial_prior=False), "normalized", 0)
    seen = []
    report = Tr.train(model, pool, _tiny_config(epochs=2, iterations_per_epoch=5), callbacks=[seen.append])
    assert seen == report.records
    report.to_jsonl(tmp_path / "r.jsonl", header={"config": {"seed": 4}})
    lines = [json.loads(l) for l in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert lines[0] == {"config": {"seed": 4}}
    assert [l["epoch"] for l in lines[1:]] == [1, 2]
    assert all("wall_ms" in l and "train_loss" in l for l in lines[1:])


def test_evaluate_pool_keys():
    pool = _tiny_pool(4)
    road = N.build(N.tiny_spec("road"), "normalized", 0)
    res = Tr.evaluate_pool(road, pool)
    assert {"val_loss", "val_accuracy", "val_arr", "val_maxf", "val_metric"} <= set(res)
    urban = N.build(N.tiny_spec("urban"), "normalized", 0)
    assert "val_maxf" not in Tr.evaluate_pool(urban, pool)


def test_config_hash_is_order_independent():
    assert Tr.config_hash({"a": 1, "b": 2}) == Tr.config_hash({"b": 2, "a": 1})
    assert Tr.config_hash({"a": 1}) != Tr.config_hash({"a": 2})


def test_training_records_input_mean():
    pool = _tiny_pool(5)
    model = N.build(N.tiny_spec("road"), "normalized", 0)
    Tr.train(model, pool, _tiny_config(epochs=1, iterations_per_epoch=2))
    expected = np.mean([im.pixels.reshape(3, -1).mean(axis=1) for im in pool.images], axis=0)
    np.testing.assert_allclose(model.metadata["input_mean"], expected, rtol=1e-6)
    # an existing mean (e.g. when fine-tuning) is kept
    model.metadata["input_mean"] = [0.5, 0.5, 0.5]
    Tr.train(model, pool, _tiny_config(epochs=1, iterations_per_epoch=2))
    assert model.metadata["input_mean"] == [0.5, 0.5, 0.5]
