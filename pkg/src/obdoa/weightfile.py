"""Binary weight container (magic ``OBWT1``) and architecture sidecar.

Layout, all little-endian:

========  ==========================================================
header    magic 5s | version u16 | arch JSON length u32 | arch JSON
tensor    name length u16 | name UTF-8 | rank u8 | dims u32 x rank |
          payload f32 row-major
========  ==========================================================

Tensor records repeat until end of file.  The architecture JSON embedded
in the header is identical to the sidecar file written next to the
weights, and every tensor is shape-checked against it on load.
"""

from __future__ import annotations

import json
import pathlib
import struct

import numpy as np

from .network import NetArchitecture, WeightBundle

WEIGHT_MAGIC = b"OBWT1"
WEIGHT_VERSION = 1


class WeightFormatError(ValueError):
    """Raised for corrupt, truncated, or mismatched weight containers."""


def save_weights(bundle: WeightBundle, path, sidecar: bool = True):
    """Write a bundle to ``path``; tensor order is sorted by name so a
    given bundle always serializes to identical bytes."""
    path = pathlib.Path(path)
    arch_json = json.dumps(bundle.architecture.to_dict(), sort_keys=True)
    blob = arch_json.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<5sHI", WEIGHT_MAGIC, WEIGHT_VERSION, len(blob)))
        fh.write(blob)
        for name in sorted(bundle.tensors):
            arr = np.ascontiguousarray(bundle.tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            arr.tofile(fh)
    if sidecar:
        path.with_suffix(path.suffix + ".json").write_text(arch_json + "\n")


def load_weights(path) -> WeightBundle:
    """Read and validate a weight container.

    Raises WeightFormatError for bad magic, unsupported versions, any
    truncation, or tensors whose shapes disagree with the declared
    architecture (the offending tensor is named in the message).
    """
    path = pathlib.Path(path)
    raw = path.read_bytes()
    head = struct.Struct("<5sHI")
    if len(raw) < head.size:
        raise WeightFormatError(f"{path}: corrupt weight container (truncated header)")
    magic, version, arch_len = head.unpack_from(raw)
    if magic != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: not a weight container (bad magic)")
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"{path}: unsupported weight format version {version}")
    offset = head.size
    if len(raw) < offset + arch_len:
        raise WeightFormatError(f"{path}: corrupt weight container (truncated header)")
    try:
        arch = NetArchitecture.from_dict(json.loads(raw[offset:offset + arch_len]))
    except (ValueError, KeyError, TypeError) as exc:
        raise WeightFormatError(f"{path}: invalid architecture block: {exc}") from exc
    offset += arch_len

    tensors: dict[str, np.ndarray] = {}
    while offset < len(raw):
        if offset + 2 > len(raw):
            raise WeightFormatError(f"{path}: corrupt weight container (truncated record)")
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + name_len + 1 > len(raw):
            raise WeightFormatError(f"{path}: corrupt weight container (truncated record)")
        try:
            name = raw[offset:offset + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(
                f"{path}: corrupt weight container (bad tensor name)") from exc
        offset += name_len
        rank = raw[offset]
        offset += 1
        if offset + 4 * rank > len(raw):
            raise WeightFormatError(f"{path}: corrupt weight container (truncated record)")
        dims = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        if offset + 4 * count > len(raw):
            raise WeightFormatError(
                f"{path}: corrupt weight container (tensor {name!r} truncated)")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = arr.reshape(dims).copy()

    try:
        return WeightBundle(architecture=arch, tensors=tensors)
    except ValueError as exc:
        raise WeightFormatError(f"{path}: {exc}") from exc


def load_architecture_sidecar(path) -> NetArchitecture:
    data = json.loads(pathlib.Path(path).read_text())
    return NetArchitecture.from_dict(data)
