"""Trained-model bundle and its checkpoint file.

A checkpoint is a single JSON document: schema (with label orderings),
schema hash, codec statistics, schedule constants, survival-loss settings,
network layout, and every tensor as little-endian float64 bytes in base64.
Keys are sorted and tensors keep their layer order, so identical state
always serializes to identical bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CodecStats, FeatureSchema
from .denoiser import DenoiserParams, param_shapes
from .diffusion import NoiseSchedule
from .survival_loss import SurvLossConfig

FORMAT = "survsynth-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Model:
    schema: FeatureSchema
    codec: CodecStats
    params: DenoiserParams
    surv_cfg: SurvLossConfig
    meta: dict = field(default_factory=dict)

    @property
    def schedule(self) -> NoiseSchedule:
        return self.params.schedule


def _encode_tensor(name: str, arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return {"name": name, "shape": list(arr.shape), "dtype": "<f8", "data": base64.b64encode(data).decode()}


def _decode_tensor(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype=entry["dtype"]).astype(float).reshape(entry["shape"])


def dumps(model: Model) -> bytes:
    p = model.params
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "schema": model.schema.to_dict(),
        "schema_hash": model.schema.hash(),
        "codec": model.codec.to_dict(),
        "schedule": p.schedule.to_dict(),
        "surv_loss": model.surv_cfg.to_dict(),
        "network": {
            "d_cont": p.d_cont,
            "cardinalities": list(p.cardinalities),
            "widths": list(p.widths),
            "surv_width": p.surv_width,
            "time_dim": p.time_dim,
        },
        "tensors": [_encode_tensor(k, v) for k, v in p.tensors.items()],
        "meta": model.meta,
    }
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()


def loads(blob: bytes) -> Model:
    try:
        doc = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a survsynth checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    try:
        return _from_doc(doc)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {type(exc).__name__}: {exc}") from None


def _from_doc(doc: dict) -> Model:
    schema = FeatureSchema.from_dict(doc["schema"])
    if schema.hash() != doc["schema_hash"]:
        raise CheckpointError("schema hash does not match the stored schema")
    codec = CodecStats.from_dict(doc["codec"])
    net = doc["network"]
    if net["d_cont"] != schema.d_cont or net["cardinalities"] != schema.cardinalities:
        raise CheckpointError("network layout does not match the schema")
    expected = param_shapes(net["d_cont"], net["cardinalities"], net["widths"], net["surv_width"], net["time_dim"])
    tensors = {}
    for entry in doc["tensors"]:
        arr = _decode_tensor(entry)
        if expected.get(entry["name"]) != arr.shape:
            raise CheckpointError(f"tensor {entry['name']!r} has unexpected shape {arr.shape}")
        tensors[entry["name"]] = arr
    if list(tensors) != list(expected):
        raise CheckpointError("checkpoint tensors do not match the declared network")
    params = DenoiserParams(
        tensors,
        net["d_cont"],
        list(net["cardinalities"]),
        tuple(net["widths"]),
        net["surv_width"],
        net["time_dim"],
        NoiseSchedule(**doc["schedule"]),
    )
    return Model(schema, codec, params, SurvLossConfig(**doc["surv_loss"]), doc.get("meta", {}))


def save(model: Model, path: str | Path) -> str:
    """Write the checkpoint and return its sha256."""
    blob = dumps(model)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path: str | Path) -> Model:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
