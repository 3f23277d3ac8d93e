"""Binary checkpoint format for model parameters.

Layout (all integers little-endian uint32, arrays little-endian float32,
C order):

    magic   b"GLRK"
    version 1
    config_len, config JSON (UTF-8, sorted keys, compact separators)
    sha256(config bytes)          32 bytes
    param_count
    repeated per parameter, in model order:
        name_len, name UTF-8
        ndim, dims[ndim]
        values float32

The embedded config is whatever dict the caller passes; the model layer
stores enough to rebuild the network before loading weights into it.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..errors import ConfigurationError

MAGIC = b"GLRK"
VERSION = 1


def config_digest(config: dict) -> str:
    return hashlib.sha256(_config_bytes(config)).hexdigest()


def _config_bytes(config: dict) -> bytes:
    return json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_params(path, config: dict, named_params) -> None:
    """Write (name, float array) pairs plus the config dict to ``path``."""
    cfg = _config_bytes(config)
    named_params = list(named_params)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(hashlib.sha256(cfg).digest())
        fh.write(struct.pack("<I", len(named_params)))
        for name, arr in named_params:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            a = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def load_params(path):
    """Read a checkpoint; returns (config dict, ordered dict name -> array)."""
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise ConfigurationError(f"truncated checkpoint {path}")
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4) != MAGIC:
        raise ConfigurationError(f"{path} is not a glarekit checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg_raw = take(cfg_len)
    digest = take(32)
    if hashlib.sha256(cfg_raw).digest() != digest:
        raise ConfigurationError(f"checkpoint config digest mismatch in {path}")
    config = json.loads(cfg_raw.decode("utf-8"))

    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_vals = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * n_vals), dtype="<f4").reshape(shape).copy()
        params[name] = arr
    if off != len(data):
        raise ConfigurationError(f"trailing bytes in checkpoint {path}")
    return config, params
