"""Versioned JSON persistence for fitted models.

Floats are serialized with Python's shortest round-trip representation,
so load(save(m)) reproduces the weight matrix bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import FeatureScale, ModelParams

__all__ = ["FORMAT_VERSION", "LoadedModel", "save_model", "load_model", "file_fingerprint"]

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LoadedModel:
    params: ModelParams
    feature_scale: FeatureScale | None
    metadata: dict


def file_fingerprint(path: str | Path) -> str:
    """sha256 of the file's bytes, used to stamp models with their training data."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_model(
    path: str | Path,
    params: ModelParams,
    feature_scale: FeatureScale | None = None,
    metadata: dict | None = None,
) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "k": params.k_experts,
        "d": params.n_features,
        "gamma": params.gamma,
        "weights": params.weights.tolist(),
        "feature_scale": (
            None
            if feature_scale is None
            else {"shift": feature_scale.shift.tolist(), "scale": feature_scale.scale.tolist()}
        ),
        "training_metadata": metadata or {},
    }
    with Path(path).open("w") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")


def load_model(path: str | Path) -> LoadedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such model file: {path}")
    try:
        with path.open() as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"model file {path} has format version {version!r}, expected {FORMAT_VERSION}"
        )
    try:
        weights = np.asarray(doc["weights"], dtype=float)
        params = ModelParams(weights, float(doc["gamma"]))
        if params.k_experts != int(doc["k"]) or params.n_features != int(doc["d"]):
            raise DataError(
                f"model file {path} is inconsistent: weight shape {weights.shape} "
                f"vs declared k={doc['k']}, d={doc['d']}"
            )
        raw_scale = doc.get("feature_scale")
        scale = (
            None
            if raw_scale is None
            else FeatureScale(
                np.asarray(raw_scale["shift"], dtype=float),
                np.asarray(raw_scale["scale"], dtype=float),
            )
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file {path}: {exc}") from None
    return LoadedModel(params=params, feature_scale=scale, metadata=doc.get("training_metadata", {}))
