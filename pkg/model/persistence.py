# model/persistence.py
# TrainedModel <-> .npz: a JSON header plus one flat float64 parameter array.

import json
from pathlib import Path

import numpy as np

from ingestion.types import ColumnStats
from model.network import PARAM_NAMES, ModelConfig, check_shapes
from model.training import TrainedModel

FORMAT_VERSION = 1


def save_model(model: TrainedModel, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    offsets, chunks, pos = {}, [], 0
    for name in PARAM_NAMES:
        arr = np.asarray(model.params[name], dtype=np.float64)
        offsets[name] = {"start": pos, "shape": list(arr.shape)}
        chunks.append(arr.ravel())
        pos += arr.size

    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "forcing_stats": model.forcing_stats.to_dict(),
        "static_stats": model.static_stats.to_dict(),
        "flow_stats": model.flow_stats.to_dict(),
        "donors": list(model.donors),
        "best_epoch": model.best_epoch,
        "history": model.history,
        "offsets": offsets,
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), params=np.concatenate(chunks))
    return str(path)


def load_model(path) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        flat = data["params"].astype(np.float64)

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")

    config = ModelConfig(**header["config"])
    params = {}
    for name, spec in header["offsets"].items():
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        params[name] = flat[spec["start"]:spec["start"] + size].reshape(shape).copy()
    check_shapes(config, params)

    return TrainedModel(
        config=config,
        params=params,
        best_epoch=int(header["best_epoch"]),
        forcing_stats=ColumnStats.from_dict(header["forcing_stats"]),
        static_stats=ColumnStats.from_dict(header["static_stats"]),
        flow_stats=ColumnStats.from_dict(header["flow_stats"]),
        donors=tuple(header["donors"]),
        history=header.get("history", []),
    )
