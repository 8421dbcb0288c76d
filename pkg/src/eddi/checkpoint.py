"""Versioned binary model container (.pvae).

Layout: 4-byte magic ``PVAE``, little-endian u32 format version, u32 header
length, a UTF-8 JSON header, then the raw little-endian float64 bytes of
every parameter array in header order.  The header carries the schema, the
encoder config, decoder widths, the variance floor, and the exact name and
shape of every array, so a loader can validate the payload before touching
it.  Saving is deterministic: sorted keys, sorted array names, no
timestamps, hence save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, encoder_param_shapes
from .errors import CheckpointError, ShapeError
from .model import PartialVae, VariableSchema

MAGIC = b"PVAE"
VERSION = 1


def expected_param_shapes(model: PartialVae) -> dict[str, tuple[int, ...]]:
    shapes = encoder_param_shapes(model.encoder_config, model.schema.n_variables)
    sizes = model.decoder_sizes()
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes[f"dec.w{i}"] = (a, b)
        shapes[f"dec.b{i}"] = (b,)
    return shapes


def save(model: PartialVae, path: str | Path) -> None:
    names = sorted(model.params)
    header = {
        "arrays": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "decoder_hidden": list(model.decoder_hidden),
        "encoder": asdict(model.encoder_config),
        "schema": model.schema.to_json_dict(),
        "var_floor": model.var_floor,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load(path: str | Path) -> PartialVae:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated before header")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if len(raw) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode())
    except ValueError as e:
        raise CheckpointError(f"{path}: unreadable header: {e}")
    schema = VariableSchema.from_json_dict(header["schema"])
    enc = dict(header["encoder"])
    enc["post_hidden"] = tuple(enc["post_hidden"])
    config = EncoderConfig(**enc)
    model = PartialVae(
        schema=schema,
        encoder_config=config,
        decoder_hidden=tuple(header["decoder_hidden"]),
        params={},
        var_floor=float(header["var_floor"]),
    )
    expected = expected_param_shapes(model)
    declared = {a["name"]: tuple(a["shape"]) for a in header["arrays"]}
    if set(declared) != set(expected):
        missing = sorted(set(expected) - set(declared))
        extra = sorted(set(declared) - set(expected))
        raise ShapeError(
            f"{path}: parameter set mismatch (missing {missing}, unexpected {extra})"
        )
    for name, shape in declared.items():
        if shape != expected[name]:
            raise ShapeError(
                f"{path}: parameter {name!r} has shape {shape}, expected {expected[name]}"
            )
    offset = 12 + header_len
    params = {}
    for entry in header["arrays"]:
        name, shape = entry["name"], tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated payload at parameter {name!r}")
        params[name] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    model.params = params
    return model
