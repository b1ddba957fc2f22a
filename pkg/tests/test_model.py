import json

import numpy as np
import pytest

from survsynth import model as model_io
from survsynth.dataset import fit_codec
from survsynth.denoiser import init_params
from survsynth.model import CheckpointError, Model
from survsynth.survival_loss import SurvLossConfig


@pytest.fixture
def model(small_schema, small_cohort):
    params = init_params(small_schema, widths=(8,), surv_width=4, time_dim=4, seed=1)
    return Model(small_schema, fit_codec(small_cohort, small_schema), params, SurvLossConfig(5.0, 0.2), {"seed": 1})


def test_round_trip_is_exact(tmp_path, model):
    path = tmp_path / "m.ckpt"
    digest = model_io.save(model, path)
    back = model_io.load(path)
    assert digest == model_io.file_hash(path)
    assert back.schema == model.schema
    assert list(back.params.tensors) == list(model.params.tensors)
    for k, v in model.params.tensors.items():
        assert np.array_equal(back.params.tensors[k], v)
    np.testing.assert_array_equal(back.codec.cont_std, model.codec.cont_std)
    assert back.surv_cfg == model.surv_cfg
    assert back.meta == model.meta


def test_serialization_is_byte_stable(tmp_path, model):
    blob = model_io.dumps(model)
    assert model_io.dumps(model_io.loads(blob)) == blob


def test_tampered_schema_hash_rejected(model):
    doc = json.loads(model_io.dumps(model))
    doc["schema_hash"] = "0" * 64
    with pytest.raises(CheckpointError, match="hash"):
        model_io.loads(json.dumps(doc).encode())


def test_wrong_tensor_shape_rejected(model):
    doc = json.loads(model_io.dumps(model))
    doc["tensors"][0]["shape"] = [1, 1]
    with pytest.raises(CheckpointError):
        model_io.loads(json.dumps(doc).encode())


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        model_io.load(tmp_path / "nope.ckpt")


def test_garbage_rejected():
    with pytest.raises(CheckpointError):
        model_io.loads(b"not json")
