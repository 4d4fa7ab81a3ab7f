"""Versioned, human-readable model files.

Models are written as indented JSON. Floats go through ``repr`` so a
save -> load -> save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import TskModel
from .data import StandardizationStats
from .errors import DataError, UnsupportedFormatVersion

FORMAT_VERSION = 1


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _per_feature(model: TskModel, values) -> list[list[float]]:
    return [_floats(values[a:b]) for a, b in zip(model.mf_offsets[:-1], model.mf_offsets[1:])]


def model_to_dict(model: TskModel) -> dict:
    features = [
        {"name": name, "kind": kind, "mean": float(mu), "std": float(sd)}
        for name, kind, mu, sd in zip(
            model.feature_names, model.kinds, model.standardizer.means, model.standardizer.stds
        )
    ]
    mf_bank = [
        {"centers": c, "log_widths": w}
        for c, w in zip(_per_feature(model, model.centers), _per_feature(model, model.log_widths))
    ]
    rules = [
        {"antecedent": [int(j) for j in model.antecedents[k]],
         "weights": _floats(model.weights[k]),
         "bias": float(model.biases[k])}
        for k in range(model.n_rules)
    ]
    provenance = dict(model.provenance)
    if model.init_centers is not None:
        provenance["init_snapshot"] = {
            "centers": _per_feature(model, model.init_centers),
            "log_widths": _per_feature(model, model.init_log_widths),
        }
    return {
        "format_version": FORMAT_VERSION,
        "threshold": float(model.threshold),
        "features": features,
        "mf_bank": mf_bank,
        "rules": rules,
        "provenance": provenance,
    }


def model_from_dict(doc: dict) -> TskModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatVersion(f"model format_version {version!r} is not supported")
    try:
        feats = doc["features"]
        bank = doc["mf_bank"]
        rules = doc["rules"]
        counts = [len(b["centers"]) for b in bank]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        provenance = dict(doc.get("provenance", {}))
        snap = provenance.pop("init_snapshot", None)
        n = len(feats)
        model = TskModel(
            feature_names=tuple(f["name"] for f in feats),
            kinds=tuple(f["kind"] for f in feats),
            centers=np.array([c for b in bank for c in b["centers"]], dtype=np.float64),
            log_widths=np.array([w for b in bank for w in b["log_widths"]], dtype=np.float64),
            mf_offsets=offsets,
            antecedents=np.array([r["antecedent"] for r in rules], dtype=np.int64).reshape(len(rules), n),
            weights=np.array([r["weights"] for r in rules], dtype=np.float64).reshape(len(rules), n),
            biases=np.array([r["bias"] for r in rules], dtype=np.float64),
            standardizer=StandardizationStats(
                np.array([f["mean"] for f in feats], dtype=np.float64),
                np.array([f["std"] for f in feats], dtype=np.float64),
            ),
            threshold=float(doc["threshold"]),
            init_centers=None if snap is None else np.array([c for b in snap["centers"] for c in b], dtype=np.float64),
            init_log_widths=None if snap is None else np.array([w for b in snap["log_widths"] for w in b], dtype=np.float64),
            provenance=provenance,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from exc
    return model


def dumps_model(model: TskModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def loads_model(text: str) -> TskModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def save_model(model: TskModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> TskModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
