"""Model JSON: stable key order, shortest round-trip float repr."""

from __future__ import annotations

import math

import numpy as np

from .. import io as rio
from .mlp import MlpModel


def model_to_dict(model: MlpModel) -> dict:
    val = model.meta.get("val_mae")
    return {
        "mode": model.mode,
        "input_dim": model.input_dim,
        "hidden_dims": list(model.hidden_dims),
        "seed": model.seed,
        "weights": [{"W": w.tolist(), "b": b.tolist()}
                    for w, b in zip(model.weights, model.biases)],
        "train_config": model.meta.get("train_config"),
        "val_mae": None if val is None or math.isnan(val) else float(val),
    }


def model_from_dict(d: dict) -> MlpModel:
    weights = [np.array(layer["W"], dtype=np.float64) for layer in d["weights"]]
    biases = [np.array(layer["b"], dtype=np.float64) for layer in d["weights"]]
    meta = {"train_config": d.get("train_config"), "val_mae": d.get("val_mae")}
    model = MlpModel(d["mode"], int(d["input_dim"]), tuple(d["hidden_dims"]), weights, biases,
                     int(d.get("seed", 0)), meta)
    if weights[0].shape[1] != model.input_dim or weights[-1].shape[0] != 9:
        raise ValueError("model weights do not match the declared dimensions")
    return model


def save_model(path, model: MlpModel) -> None:
    rio.write_json(path, model_to_dict(model))


def load_model(path) -> MlpModel:
    return model_from_dict(rio.read_json(path))
