"""Model file format "tdm-1".

A model is a single JSON document:

    {
      "format": "tdm-1",
      "n": <int>, "d": <int>,
      "vocabulary": [<word>, ...],
      "P_L": <matrix>, "P_R": <matrix>,
      "M": [<matrix>, ...]          # n entries
    }

where every matrix is a d x d nested array of [re, im] pairs.  Floats are
written with Python's shortest round-trip representation, so writing and
re-reading a model reproduces every entry bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .corpus import UNKNOWN_TOKEN, Vocabulary
from .exceptions import ValidationError
from .model import Density, Dictionary, TraceDensityModel

FORMAT_TAG = "tdm-1"


def _matrix_to_json(m: np.ndarray) -> list[list[list[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(rows, d: int, name: str) -> np.ndarray:
    try:
        m = np.array(
            [[complex(cell[0], cell[1]) for cell in row] for row in rows],
            dtype=np.complex128,
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"{name}: malformed matrix entries") from exc
    if m.shape != (d, d):
        raise ValidationError(f"{name}: expected shape ({d}, {d}), got {m.shape}")
    if not np.all(np.isfinite(m.view(np.float64))):
        raise ValidationError(f"{name}: non-finite entries")
    return m


def model_to_dict(model: TraceDensityModel) -> dict:
    return {
        "format": FORMAT_TAG,
        "n": model.n,
        "d": model.d,
        "vocabulary": list(model.vocab.words),
        "P_L": _matrix_to_json(model.p_left.matrix),
        "P_R": _matrix_to_json(model.p_right.matrix),
        "M": [_matrix_to_json(m) for m in model.dictionary.mats],
    }


def model_from_dict(doc: dict) -> TraceDensityModel:
    if not isinstance(doc, dict):
        raise ValidationError("model document must be a JSON object")
    tag = doc.get("format")
    if tag != FORMAT_TAG:
        raise ValidationError(f"unsupported format tag {tag!r}, expected {FORMAT_TAG!r}")
    missing = {"n", "d", "vocabulary", "P_L", "P_R", "M"} - doc.keys()
    if missing:
        raise ValidationError(f"model document missing fields: {sorted(missing)}")
    n, d = doc["n"], doc["d"]
    if not (isinstance(n, int) and isinstance(d, int) and n >= 1 and d >= 1):
        raise ValidationError("n and d must be positive integers")
    words = doc["vocabulary"]
    if not isinstance(words, list) or len(words) != n:
        raise ValidationError(f"vocabulary must list exactly n={n} words")
    if len(doc["M"]) != n:
        raise ValidationError(f"M must list exactly n={n} matrices")
    # The format has no unknown-token field; by convention a literal <unk>
    # in the vocabulary is the out-of-vocabulary target.
    unknown = UNKNOWN_TOKEN if UNKNOWN_TOKEN in words else None
    try:
        vocab = Vocabulary(tuple(words), unknown_token=unknown)
    except Exception as exc:
        raise ValidationError(f"bad vocabulary: {exc}") from exc
    mats = np.stack(
        [_matrix_from_json(m, d, f"M[{i}]") for i, m in enumerate(doc["M"])]
    )
    return TraceDensityModel(
        vocab=vocab,
        dictionary=Dictionary(mats),
        p_left=Density(_matrix_from_json(doc["P_L"], d, "P_L")),
        p_right=Density(_matrix_from_json(doc["P_R"], d, "P_R")),
    )


def save_model(model: TraceDensityModel, path) -> None:
    doc = model_to_dict(model)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, allow_nan=False)
        fh.write("\n")


def load_model(path) -> TraceDensityModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return model_from_dict(doc)
