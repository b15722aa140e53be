"""WDSM1 checkpoint format.

Layout: the ASCII line ``WDSM1``, one JSON line with the model config and a
tensor index (name, shape, dtype, byte offset into the payload), then the
raw little-endian IEEE-754 payload.  Save -> load is bitwise lossless.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .errors import CheckpointError
from .tensor import Tensor

MAGIC = "WDSM"
VERSION = "1"

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(params: Dict[str, Tensor], config: dict, path) -> None:
    index = []
    chunks = []
    offset = 0
    for name in params:
        arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
        dtype_name = arr.dtype.name
        if dtype_name not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported tensor dtype {dtype_name}")
        raw = np.ascontiguousarray(arr).astype(_DTYPE_CODES[dtype_name], copy=False).tobytes()
        index.append(
            {"name": name, "shape": list(arr.shape), "dtype": dtype_name, "offset": offset}
        )
        chunks.append(raw)
        offset += len(raw)
    meta = json.dumps({"config": config, "tensors": index}, sort_keys=True)
    blob = (MAGIC + VERSION + "\n").encode("ascii") + meta.encode("utf-8") + b"\n" + b"".join(chunks)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> Tuple[Dict[str, Tensor], dict]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError("bad magic: missing header line")
    header = data[:nl]
    if header[:4] != MAGIC.encode("ascii"):
        raise CheckpointError(f"bad magic {header[:5]!r}")
    version = header[4:].decode("ascii", errors="replace")
    if version != VERSION:
        raise CheckpointError(f"unknown checkpoint version {version!r}")
    nl2 = data.find(b"\n", nl + 1)
    if nl2 < 0:
        raise CheckpointError("truncated checkpoint: missing metadata line")
    try:
        meta = json.loads(data[nl + 1 : nl2].decode("utf-8"))
        config = meta["config"]
        index = meta["tensors"]
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt metadata: {exc}") from exc

    payload = data[nl2 + 1 :]
    params: Dict[str, Tensor] = {}
    for rec in index:
        try:
            name, shape, dtype_name, offset = rec["name"], rec["shape"], rec["dtype"], rec["offset"]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"corrupt tensor index: {exc}") from exc
        if dtype_name not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported tensor dtype {dtype_name}")
        code = np.dtype(_DTYPE_CODES[dtype_name])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * code.itemsize
        if end > len(payload):
            raise CheckpointError(
                f"truncated payload: tensor {name!r} needs bytes up to {end}, have {len(payload)}"
            )
        arr = np.frombuffer(payload[offset:end], dtype=code).reshape(shape)
        params[name] = Tensor(arr.astype(dtype_name), requires_grad=True)
    return params, config
