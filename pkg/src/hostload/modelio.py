"""Model files: versioned, self-describing, checksummed.

Layout (see docs/model_format.md)::

    HOSTLOAD-MODEL 1\\n
    <header: one line of JSON, keys sorted>\\n
    <payload: float64 little-endian arrays, concatenated in header order>
    \\nsha256=<hex digest of everything above>\\n
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .baselines import ArModel
from .bilstm import BiLstmModel
from .ingest import Scaler
from .lstm import LstmParams

MAGIC = b"HOSTLOAD-MODEL"
VERSION = 1
_DTYPE = np.dtype("<f8")


class ModelFileError(ValueError):
    pass


def _arrays(model) -> tuple[dict, dict[str, np.ndarray]]:
    if isinstance(model, ArModel):
        header = {"kind": "ar", "order": model.order}
        arrays = {"coefficients": model.coefficients, "intercept": np.array([model.intercept])}
    elif isinstance(model, BiLstmModel):
        header = {
            "kind": "bilstm" if model.bidirectional else "lstm",
            "window": model.window,
            "input_size": model.input_size,
            "hidden_size": model.hidden_size,
            "fc_size": model.fc_size,
            "output_size": model.output_size,
            "fusion": model.fusion,
        }
        arrays = {"fusion_weights": np.array([model.lambda1, model.lambda2])}
        arrays.update(model.parameters())
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    if model.scaler is not None:
        arrays = {"scaler": np.array([model.scaler.mean, model.scaler.std]), **arrays}
    return header, arrays


def dumps(model, meta: dict | None = None) -> bytes:
    header, arrays = _arrays(model)
    meta = dict(getattr(model, "meta", None) or {}, **(meta or {}))
    header.update(
        version=VERSION,
        dtype="float64-le",
        meta=meta,
        arrays=[[name, list(a.shape)] for name, a in arrays.items()],
    )
    body = MAGIC + b" " + str(VERSION).encode() + b"\n"
    body += json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    body += b"".join(np.ascontiguousarray(a, dtype=_DTYPE).tobytes() for a in arrays.values())
    return body + b"\nsha256=" + hashlib.sha256(body).hexdigest().encode() + b"\n"


def loads(blob: bytes):
    tail = blob.rfind(b"\nsha256=")
    if tail < 0:
        raise ModelFileError("missing checksum trailer")
    body = blob[:tail]
    digest = blob[tail + len(b"\nsha256="):].strip().decode("ascii", "replace")
    if hashlib.sha256(body).hexdigest() != digest:
        raise ModelFileError("checksum mismatch; model file is corrupt")
    first = body.find(b"\n")
    second = body.find(b"\n", first + 1)
    magic = body[:first].split(b" ")
    if len(magic) != 2 or magic[0] != MAGIC:
        raise ModelFileError("not a host-load model file")
    if int(magic[1]) != VERSION:
        raise ModelFileError(f"unsupported model file version {magic[1].decode()}")
    header = json.loads(body[first + 1:second])
    payload = body[second + 1:]
    arrays, offset = {}, 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * _DTYPE.itemsize
        if offset + nbytes > len(payload):
            raise ModelFileError("payload shorter than declared arrays")
        arrays[name] = np.frombuffer(payload, _DTYPE, count, offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise ModelFileError("payload longer than declared arrays")

    scaler = None
    if "scaler" in arrays:
        mean, std = arrays.pop("scaler")
        scaler = Scaler(float(mean), float(std))
    meta = header.get("meta", {})
    kind = header["kind"]
    if kind == "ar":
        return ArModel(arrays["coefficients"], float(arrays["intercept"][0]), scaler, meta)
    lam1, lam2 = arrays.pop("fusion_weights")
    fwd = LstmParams(**{k[4:]: v for k, v in arrays.items() if k.startswith("fwd.")})
    bwd = None
    if kind == "bilstm":
        bwd = LstmParams(**{k[4:]: v for k, v in arrays.items() if k.startswith("bwd.")})
    return BiLstmModel(fwd, bwd, arrays["w_fc"], arrays["b_fc"], arrays["w_r"], header["window"],
                       float(lam1), float(lam2), header["fusion"], scaler, meta)


def save_model(path, model, meta: dict | None = None) -> str:
    blob = dumps(model, meta)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {os.fspath(path)!r}: {exc}") from exc
