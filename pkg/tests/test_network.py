"""Tests for the MLP detector: shapes, determinism, forward passes, and the
parameter text format."""

import numpy as np
import pytest

from boxdistill.autodiff import Tape
from boxdistill.distributions import EdgeSupport, default_support
from boxdistill.network import (
    ModelConfig,
    ModelParams,
    decode_predictions,
    forward,
    forward_batch,
    forward_batch_on_tape,
    init_params,
    load_params,
    parameter_count,
    params_on_tape,
    predict_detections,
    save_params,
)
from boxdistill.scenes import generate_dataset, generate_object_views


def zero_params(n_features: int, hidden: int = 6, n_bins: int = 17, n_classes: int = 2) -> ModelParams:
    out = 4 * n_bins + n_classes
    return ModelParams(
        [np.zeros((hidden, n_features)), np.zeros((out, hidden))],
        [np.zeros(hidden), np.zeros(out)],
        n_bins,
        n_classes,
    )


# ---------------------------------------------------------------------------
# ModelConfig


def test_output_size():
    assert ModelConfig(hidden_widths=(32,)).output_size == 4 * 17 + 2
    assert ModelConfig(hidden_widths=(8,), n_bins=5, n_classes=3).output_size == 23


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(hidden_widths=()), "hidden widths"),
        (dict(hidden_widths=(16, 0)), "hidden widths"),
        (dict(hidden_widths=(8,), n_bins=1), "n_bins"),
        (dict(hidden_widths=(8,), n_classes=1), "n_classes"),
    ],
)
def test_config_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        ModelConfig(**kwargs)


def test_config_coerces_widths_to_ints():
    config = ModelConfig(hidden_widths=[24.0, 12])
    assert config.hidden_widths == (24, 12)


# ---------------------------------------------------------------------------
# init_params


def test_init_params_shapes_and_zero_biases():
    config = ModelConfig(hidden_widths=(10, 6), n_bins=9, n_classes=3)
    params = init_params(config, 13)
    assert [w.shape for w in params.weights] == [(10, 13), (6, 10), (39, 6)]
    assert [b.shape for b in params.biases] == [(10,), (6,), (39,)]
    assert all(np.all(b == 0.0) for b in params.biases)
    assert params.n_features == 13


def test_init_params_deterministic_in_seed():
    config = ModelConfig(hidden_widths=(12,), seed=7)
    assert init_params(config, 13).digest() == init_params(config, 13).digest()
    assert init_params(config, 13).digest() != init_params(config, 13, seed=8).digest()
    # Explicit seed overrides the config seed.
    override = init_params(config, 13, seed=7)
    assert override.digest() == init_params(config, 13).digest()


def test_init_params_rejects_bad_feature_count():
    with pytest.raises(ValueError, match="n_features"):
        init_params(ModelConfig(), 0)


def test_parameter_count_matches_params():
    config = ModelConfig(hidden_widths=(10, 6), n_bins=9, n_classes=3)
    params = init_params(config, 13)
    expected = 10 * 13 + 10 + 6 * 10 + 6 + 39 * 6 + 39
    assert parameter_count(config, 13) == expected
    assert params.parameter_count == expected


# ---------------------------------------------------------------------------
# forward passes


def test_zero_params_give_zero_logits():
    params = zero_params(13)
    loc, cls = forward(params, np.arange(13.0))
    assert loc.shape == (4, 17)
    assert cls.shape == (2,)
    assert np.all(loc == 0.0)
    assert np.all(cls == 0.0)


def test_forward_matches_forward_batch_rows():
    params = init_params(ModelConfig(hidden_widths=(8,), seed=3), 13)
    features = np.random.default_rng(0).normal(size=(5, 13))
    loc_batch, cls_batch = forward_batch(params, features)
    assert loc_batch.shape == (5, 4, 17)
    assert cls_batch.shape == (5, 2)
    for i in range(5):
        loc_one, cls_one = forward(params, features[i])
        assert np.allclose(loc_one, loc_batch[i], rtol=0.0, atol=1e-12)
        assert np.allclose(cls_one, cls_batch[i], rtol=0.0, atol=1e-12)


def test_forward_batch_rejects_wrong_rank():
    params = init_params(ModelConfig(), 13)
    with pytest.raises(ValueError, match="matrix"):
        forward_batch(params, np.zeros(13))


def test_forward_does_not_mutate_params_or_features():
    params = init_params(ModelConfig(seed=1), 13)
    before = params.digest()
    features = np.random.default_rng(1).normal(size=(3, 13))
    snapshot = features.copy()
    forward_batch(params, features)
    assert params.digest() == before
    assert np.array_equal(features, snapshot)


def test_tape_forward_matches_plain_forward():
    params = init_params(ModelConfig(hidden_widths=(9, 5), seed=4), 13)
    features = np.random.default_rng(2).normal(size=(6, 13))
    loc_plain, cls_plain = forward_batch(params, features)

    tape = Tape()
    layers = params_on_tape(tape, params)
    loc_node, cls_node = forward_batch_on_tape(
        tape, layers, features, n_bins=params.n_bins, n_classes=params.n_classes
    )
    assert np.array_equal(loc_node.value, loc_plain.reshape(6, 4 * 17))
    assert np.array_equal(cls_node.value, cls_plain)


def test_params_on_tape_registers_all_layers():
    params = init_params(ModelConfig(hidden_widths=(9, 5)), 13)
    tape = Tape()
    layers = params_on_tape(tape, params)
    assert len(layers) == 3
    for (w_node, b_node), w, b in zip(layers, params.weights, params.biases):
        assert np.array_equal(w_node.value, w)
        assert np.array_equal(b_node.value, b)


# ---------------------------------------------------------------------------
# digest / copy


def test_digest_detects_single_bit_change():
    params = init_params(ModelConfig(seed=5), 13)
    twin = params.copy()
    assert twin.digest() == params.digest()
    twin.weights[0][0, 0] = np.nextafter(twin.weights[0][0, 0], np.inf)
    assert twin.digest() != params.digest()


def test_copy_is_deep():
    params = init_params(ModelConfig(seed=6), 13)
    twin = params.copy()
    twin.biases[0][0] = 99.0
    assert params.biases[0][0] == 0.0


# ---------------------------------------------------------------------------
# save / load


def test_save_load_round_trip_bit_exact(tmp_path):
    params = init_params(ModelConfig(hidden_widths=(11, 7), n_bins=9, n_classes=4, seed=8), 13)
    path = tmp_path / "model.txt"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.digest() == params.digest()
    assert loaded.n_bins == 9
    assert loaded.n_classes == 4
    assert loaded.parameter_count == params.parameter_count


def test_save_is_deterministic(tmp_path):
    params = init_params(ModelConfig(seed=9), 13)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    save_params(params, a)
    save_params(params, b)
    assert a.read_bytes() == b.read_bytes()


def test_load_requires_meta_line(tmp_path):
    path = tmp_path / "model.txt"
    path.write_text("layer0.weight shape=1x1\n1.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="meta line"):
        load_params(path)


def test_load_reports_unrecognized_line(tmp_path):
    params = init_params(ModelConfig(hidden_widths=(2,)), 3)
    path = tmp_path / "model.txt"
    save_params(params, path)
    with path.open("a", encoding="utf-8") as fh:
        fh.write("garbage here\n")
    with pytest.raises(ValueError, match="unrecognized parameter line"):
        load_params(path)


def test_load_rejects_mismatched_blocks(tmp_path):
    path = tmp_path / "model.txt"
    path.write_text(
        "meta n_bins=17 n_classes=2\nlayer0.weight shape=1x2\n1.0,2.0\n",
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="mismatched"):
        load_params(path)


# ---------------------------------------------------------------------------
# decoding and suppression


def test_decode_predictions_centered_for_zero_params():
    samples = generate_dataset(5, 0.0, seed=20)
    params = zero_params(samples[0].features.shape[0])
    support = default_support()
    boxes = decode_predictions(params, samples, support)
    assert len(boxes) == len(samples)
    mid = (support.e_min + support.e_max) / 2.0
    for sample, box in zip(samples, boxes):
        # Uniform edge distributions decode to the support midpoint offset.
        assert box.x1 == pytest.approx(sample.anchor.x - mid, abs=1e-12)
        assert box.y2 == pytest.approx(sample.anchor.y + mid, abs=1e-12)
        assert box.score == pytest.approx(0.5)
        assert box.class_id == 0


def test_decode_predictions_rejects_support_mismatch():
    samples = generate_dataset(2, 0.0, seed=20)
    params = zero_params(samples[0].features.shape[0])
    with pytest.raises(ValueError, match="support has"):
        decode_predictions(params, samples, EdgeSupport(0.0, 16.0, 9))


def test_predict_detections_suppresses_duplicate_views():
    samples = generate_object_views(1, 5, 0.0, seed=22, anchor_jitter=0.5)
    params = zero_params(samples[0].features.shape[0])
    support = default_support()
    kept = predict_detections(params, samples, support, nms_threshold=0.6)
    assert len(kept) == 1
    # IoU never exceeds 1, so a threshold of 1.0 suppresses nothing.
    loose = predict_detections(params, samples, support, nms_threshold=1.0)
    assert len(loose) == 5
