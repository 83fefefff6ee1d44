"""Tests for checkpoint save and restore."""
import json

import numpy as np
import pytest

from matcap.checkpoint import (
    FORMAT_VERSION,
    build_document,
    decode_tensor,
    dumps,
    encode_tensor,
    load_checkpoint,
    loads,
    restore_params,
    restore_rng,
    save_checkpoint,
)
from matcap.errors import CheckpointError
from matcap.linalg import seeded_rng
from matcap.matntm import MatNtmModel, build_model
from matcap.tasks import gen_copy_task
from matcap.training import OptimizerState


def _document(config, seed=5, rng=None):
    model = build_model(config.model, seeded_rng(seed))
    return model, build_document(config.model, model.params, 7, OptimizerState(), rng, created="2024-01-01T00:00:00+00:00")


# --- tensors ---

class TestTensors:
    def test_bits_survive(self):
        values = np.array([[np.pi, -0.0], [1e-300, 123456.789]])
        assert np.array_equal(decode_tensor(encode_tensor("x", values)), values)

    def test_truncated_payload(self):
        record = encode_tensor("x", np.ones((2, 2)))
        record.shape = [3, 3]
        with pytest.raises(CheckpointError):
            decode_tensor(record)

    def test_bad_base64(self):
        record = encode_tensor("x", np.ones(1))
        record.data = "not base64!"
        with pytest.raises(CheckpointError):
            decode_tensor(record)


# --- documents ---

class TestDocuments:
    def test_round_trip_gives_identical_outputs(self, tiny_config, tmp_path):
        model, doc = _document(tiny_config)
        path = save_checkpoint(tmp_path / "ckpt.json", doc)
        restored = MatNtmModel(tiny_config.model, restore_params(load_checkpoint(path)))
        sample = gen_copy_task(2, 1, 3, seeded_rng(1), length=3)
        a, _ = model.forward_sequence(sample.inputs, 3)
        b, _ = restored.forward_sequence(sample.inputs, 3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_serialization_is_stable(self, tiny_config):
        _, doc = _document(tiny_config)
        assert dumps(loads(dumps(doc))) == dumps(doc)

    def test_rng_continues(self, tiny_config):
        rng = seeded_rng(3)
        rng.random(5)
        _, doc = _document(tiny_config, rng=rng)
        restored = restore_rng(loads(dumps(doc)))
        assert restored.random() == rng.random()

    def test_no_rng(self, tiny_config):
        _, doc = _document(tiny_config)
        assert restore_rng(doc) is None

    def test_unknown_version(self, tiny_config):
        _, doc = _document(tiny_config)
        payload = json.loads(dumps(doc))
        payload["format_version"] = FORMAT_VERSION + 1
        with pytest.raises(CheckpointError):
            loads(json.dumps(payload))

    def test_extra_field_rejected(self, tiny_config):
        _, doc = _document(tiny_config)
        payload = json.loads(dumps(doc))
        payload["surprise"] = 1
        with pytest.raises(CheckpointError):
            loads(json.dumps(payload))

    def test_not_json(self):
        with pytest.raises(CheckpointError):
            loads("{")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.json")
