"""Wire formats shared with the inference side.

The trainer talks to the estimation toolkit only through files: it reads
``OBDOA1`` datasets, and writes ``OBWT1`` weight containers plus the
architecture JSON sidecar.  The layouts are re-implemented here from the
format documentation so the two packages stay independent.
"""

from __future__ import annotations

import json
import pathlib
import struct

import numpy as np

DATASET_MAGIC = b"OBDOA1"
WEIGHT_MAGIC = b"OBWT1"

_DATASET_HEADER = struct.Struct("<6sHIIIdddQ")

PRESETS = {
    "sla18": (0, 1, 2, 3, 4, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19),
    "sla10": (0, 3, 4, 5, 6, 7, 11, 16, 18, 19),
}


def parse_geometry(spec: str) -> np.ndarray:
    """Preset name, ``ula:<N>``, or comma-separated half-wavelength positions."""
    text = spec.strip().lower()
    if text in PRESETS:
        return np.asarray(PRESETS[text], dtype=float)
    if text.startswith("ula"):
        n = int(text[3:].strip(":()"))
        return np.arange(n, dtype=float)
    return np.asarray([float(p) for p in text.split(",")], dtype=float)


class Dataset:
    """In-memory view of an ``OBDOA1`` file."""

    def __init__(self, path):
        raw = pathlib.Path(path).read_bytes()
        (magic, version, self.n, self.m, self.k,
         self.fov_min, self.fov_max, self.step,
         self.count) = _DATASET_HEADER.unpack_from(raw)
        if magic != DATASET_MAGIC:
            raise ValueError(f"{path}: not an OBDOA1 dataset")
        if version != 1:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        rec = np.dtype([
            ("y", "<i1", (self.n, 2)),
            ("s_star", "<f4", (self.m,)),
            ("beta_star", "<f4", (self.m,)),
            ("snr_db", "<f4"),
            ("doas", "<f8", (self.k,)),
        ])
        body = raw[_DATASET_HEADER.size:]
        if len(body) != self.count * rec.itemsize:
            raise ValueError(f"{path}: truncated dataset")
        self.records = np.frombuffer(body, dtype=rec)

    def grid_points(self) -> np.ndarray:
        return self.fov_min + self.step * np.arange(self.m)

    def __len__(self):
        return self.count


def write_weights(path, arch: dict, tensors: dict[str, np.ndarray]):
    """Emit an ``OBWT1`` container plus its JSON sidecar.

    Tensors are written in sorted name order so identical weights always
    produce identical bytes.
    """
    path = pathlib.Path(path)
    blob = json.dumps(arch, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<5sHI", WEIGHT_MAGIC, 1, len(blob)))
        fh.write(blob)
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            arr.tofile(fh)
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(arch, sort_keys=True) + "\n")
