import json

import numpy as np
import pytest

from qdnn_lab.checkpoint import FORMAT_TAG, load_checkpoint, save_checkpoint
from qdnn_lab.data import generate_eval_set
from qdnn_lab.errors import ConfigurationError
from qdnn_lab.evalviz import evaluate_accuracy
from qdnn_lab.models import ModelConfig, build_fcdnn
from qdnn_lab.quant import QuantSpec
from qdnn_lab.rng import RandomSource
from qdnn_lab.train import TrainConfig, pretrain_float, retrain_quantized


def test_roundtrip_bit_exact(tmp_path):
    net = build_fcdnn(ModelConfig(16, 4, residual=True), RandomSource(0).split("init"))
    path = tmp_path / "model.ckpt.json"
    save_checkpoint(str(path), net, {"note": "test"})
    loaded, extra = load_checkpoint(str(path))
    assert extra == {"note": "test"}
    assert loaded.config == net.config
    for a, b in zip(net.layers, loaded.layers):
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)
    assert loaded.quant is None


def test_quant_state_roundtrip(tmp_path, small_dataset):
    cfg = TrainConfig(epochs=2, batch_size=64, lr=0.02, seed=0, eval_density=25.0)
    net, _ = pretrain_float(
        build_fcdnn(ModelConfig(12, 4), RandomSource(1).split("init")), small_dataset, cfg
    )
    spec = QuantSpec(weight_bits=2, activation_bits=3)
    trained, _ = retrain_quantized(net, small_dataset, spec, cfg)
    path = tmp_path / "quant.ckpt.json"
    save_checkpoint(str(path), trained)
    loaded, _ = load_checkpoint(str(path))
    assert loaded.quant.spec == spec
    for a, b in zip(trained.quant.layers, loaded.quant.layers):
        assert a.delta == b.delta
        if a.alpha is None:
            assert b.alpha is None
        else:
            assert float(a.alpha) == float(b.alpha)


def test_quantized_eval_reproducible_from_checkpoint_alone(tmp_path, small_dataset):
    cfg = TrainConfig(epochs=2, batch_size=64, lr=0.02, seed=0, eval_density=25.0)
    net, _ = pretrain_float(
        build_fcdnn(ModelConfig(12, 4), RandomSource(2).split("init")), small_dataset, cfg
    )
    trained, _ = retrain_quantized(net, small_dataset, QuantSpec(weight_bits=2, activation_bits=2), cfg)
    points, labels = generate_eval_set(small_dataset.spec, 25.0)
    acc_before = evaluate_accuracy(trained, points, labels, quant_view=True)
    path = tmp_path / "q.ckpt.json"
    save_checkpoint(str(path), trained)
    loaded, _ = load_checkpoint(str(path))
    acc_after = evaluate_accuracy(loaded, points, labels, quant_view=True)
    assert acc_after == acc_before


def test_rejects_wrong_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ConfigurationError):
        load_checkpoint(str(path))


def test_rejects_shape_mismatch(tmp_path):
    net = build_fcdnn(ModelConfig(8, 3), RandomSource(3).split("init"))
    path = tmp_path / "model.ckpt.json"
    save_checkpoint(str(path), net)
    doc = json.loads(path.read_text())
    doc["arch"]["width"] = 16
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigurationError):
        load_checkpoint(str(path))


def test_format_tag_present(tmp_path):
    net = build_fcdnn(ModelConfig(4, 2), RandomSource(4).split("init"))
    path = tmp_path / "m.ckpt.json"
    save_checkpoint(str(path), net)
    assert json.loads(path.read_text())["format"] == FORMAT_TAG
