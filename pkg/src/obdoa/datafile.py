"""Binary file formats for labeled datasets and stored snapshots.

Both formats are little-endian and fixed-layout so that other languages
and tools can parse them without a schema.

Dataset container (magic ``OBDOA1``, version 1):

========  =======================================================
header    magic 6s | version u16 | N u32 | M u32 | K u32 |
          fov_min f64 | fov_max f64 | step f64 | count u64
record    y: N x (i8 re, i8 im) | s_star: M f32 | beta_star: M f32 |
          snr_db f32 | true DOAs: K f64
========  =======================================================

Snapshot container (magic ``OBSNP1``, version 1): N u32, element
positions as N f64 (half-wavelength units), then N (i8, i8) sign pairs.
"""

from __future__ import annotations

import pathlib
import struct

import numpy as np

from .geometry import ArrayGeometry, GridSpec
from .simulate import DatasetConfig, OneBitSnapshot

DATASET_MAGIC = b"OBDOA1"
DATASET_VERSION = 1
SNAPSHOT_MAGIC = b"OBSNP1"
SNAPSHOT_VERSION = 1

_HEADER = struct.Struct("<6sHIIIdddQ")


def _record_dtype(n: int, m: int, k: int) -> np.dtype:
    return np.dtype([
        ("y", "<i1", (n, 2)),
        ("s_star", "<f4", (m,)),
        ("beta_star", "<f4", (m,)),
        ("snr_db", "<f4"),
        ("doas", "<f8", (k,)),
    ])


class DatasetWriter:
    """Streams fixed-size labeled records to a dataset file."""

    def __init__(self, path, cfg: DatasetConfig, count: int):
        self.path = pathlib.Path(path)
        self.n = cfg.geometry.n_elements
        self.m = cfg.grid.size
        self.k = cfg.n_sources
        self._dtype = _record_dtype(self.n, self.m, self.k)
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(
            DATASET_MAGIC, DATASET_VERSION, self.n, self.m, self.k,
            cfg.grid.fov_min_deg, cfg.grid.fov_max_deg, cfg.grid.step_deg,
            count))
        self._expected = count
        self._written = 0

    def append(self, y: np.ndarray, s_star, beta_star, snr_db: float, doas):
        rec = np.zeros(1, dtype=self._dtype)
        rec["y"][0, :, 0] = np.real(y).astype(np.int8)
        rec["y"][0, :, 1] = np.imag(y).astype(np.int8)
        rec["s_star"][0] = s_star
        rec["beta_star"][0] = beta_star
        rec["snr_db"][0] = snr_db
        rec["doas"][0] = doas
        rec.tofile(self._fh)
        self._written += 1

    def close(self):
        self._fh.close()
        if self._written != self._expected:
            raise ValueError(
                f"dataset {self.path} declared {self._expected} records, "
                f"wrote {self._written}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


class DatasetReader:
    """Seekable reader for ``OBDOA1`` files."""

    def __init__(self, path):
        self.path = pathlib.Path(path)
        raw = self.path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{self.path}: truncated dataset header")
        (magic, version, self.n, self.m, self.k,
         fov_min, fov_max, step, self.count) = _HEADER.unpack_from(raw)
        if magic != DATASET_MAGIC:
            raise ValueError(f"{self.path}: not a dataset file (bad magic)")
        if version != DATASET_VERSION:
            raise ValueError(f"{self.path}: unsupported dataset version {version}")
        self.grid = GridSpec(fov_min, fov_max, step)
        if self.grid.size != self.m:
            raise ValueError(f"{self.path}: header M={self.m} does not match grid")
        self._dtype = _record_dtype(self.n, self.m, self.k)
        body = raw[_HEADER.size:]
        if len(body) != self.count * self._dtype.itemsize:
            raise ValueError(f"{self.path}: record payload size mismatch")
        self._records = np.frombuffer(body, dtype=self._dtype)

    def __len__(self) -> int:
        return self.count

    def record(self, i: int) -> dict:
        rec = self._records[i]
        y = rec["y"][:, 0].astype(float) + 1j * rec["y"][:, 1].astype(float)
        return {
            "y": y,
            "s_star": np.array(rec["s_star"]),
            "beta_star": np.array(rec["beta_star"]),
            "snr_db": float(rec["snr_db"]),
            "doas": np.array(rec["doas"]),
        }

    def __iter__(self):
        for i in range(self.count):
            yield self.record(i)


def save_snapshot(path, snapshot: OneBitSnapshot, geometry: ArrayGeometry):
    """Store a snapshot together with the geometry that produced it."""
    y = snapshot.y
    n = y.shape[0]
    if geometry.n_elements != n:
        raise ValueError("snapshot length does not match geometry")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<6sHI", SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n))
        geometry.position_array().astype("<f8").tofile(fh)
        pairs = np.empty((n, 2), dtype="<i1")
        pairs[:, 0] = y.real
        pairs[:, 1] = y.imag
        pairs.tofile(fh)


def load_snapshot(path) -> tuple[OneBitSnapshot, ArrayGeometry]:
    raw = pathlib.Path(path).read_bytes()
    head = struct.Struct("<6sHI")
    if len(raw) < head.size:
        raise ValueError(f"{path}: truncated snapshot file")
    magic, version, n = head.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    need = head.size + 8 * n + 2 * n
    if len(raw) != need:
        raise ValueError(f"{path}: snapshot payload size mismatch")
    pos = np.frombuffer(raw, dtype="<f8", count=n, offset=head.size)
    pairs = np.frombuffer(raw, dtype="<i1", count=2 * n,
                          offset=head.size + 8 * n).reshape(n, 2)
    geom = ArrayGeometry(tuple(pos.tolist()))
    y = pairs[:, 0].astype(float) + 1j * pairs[:, 1].astype(float)
    return OneBitSnapshot(y=y), geom
