"""Single-snapshot scene simulation, one-bit quantization, and labeling.

The measurement chain is ``y = csgn(A(theta) s + n)`` with circular complex
Gaussian noise.  Only the sign of each real and imaginary part survives, so
the model is invariant to any positive scaling of the unquantized scene;
what matters is the noise level relative to the source amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, GridSpec, steering_vector


@dataclass(frozen=True)
class SourceScene:
    """Ground-truth sources: DOAs in degrees, complex amplitudes, noise sigma."""

    doas: tuple[float, ...]
    coeffs: tuple[complex, ...]
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "doas", tuple(float(d) for d in self.doas))
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))
        if len(self.doas) < 1:
            raise ValueError("scene needs at least one source")
        if len(self.doas) != len(self.coeffs):
            raise ValueError("doas and coeffs must have equal length")
        if len(set(self.doas)) != len(self.doas):
            raise ValueError("source DOAs must be pairwise distinct")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def n_sources(self) -> int:
        return len(self.doas)


@dataclass(frozen=True, eq=False)
class OneBitSnapshot:
    """One-bit quantized snapshot: entries in {1+1j, 1-1j, -1+1j, -1-1j}."""

    y: np.ndarray
    scene: SourceScene | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        if y.ndim != 1:
            raise ValueError("snapshot must be a vector")
        if not (np.all(np.abs(y.real) == 1.0) and np.all(np.abs(y.imag) == 1.0)):
            raise ValueError("snapshot entries must be one-bit (+/-1 +/- 1j)")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n_elements(self) -> int:
        return self.y.shape[0]


def csgn(z) -> np.ndarray:
    """Complex sign: ``sign(Re) + 1j*sign(Im)`` with ``sign(0) = +1``.

    The tie rule keeps the quantizer deterministic; exact zeros have
    measure zero under Gaussian noise.
    """
    z = np.asarray(z, dtype=complex)
    re = np.where(z.real >= 0, 1.0, -1.0)
    im = np.where(z.imag >= 0, 1.0, -1.0)
    return re + 1j * im


def snr_to_sigma(snr_db: float) -> float:
    """Noise standard deviation for a unit-amplitude source at ``snr_db``."""
    return 10.0 ** (-snr_db / 20.0)


def unquantized_snapshot(geom: ArrayGeometry, scene: SourceScene, rng) -> np.ndarray:
    """Noisy array output before quantization, ``A(theta) s + n``.

    Noise is circular complex Gaussian with total variance ``sigma**2`` per
    entry (``sigma**2 / 2`` per real component).
    """
    z = np.zeros(geom.n_elements, dtype=complex)
    for theta, s in zip(scene.doas, scene.coeffs):
        z += steering_vector(geom, theta) * s
    if scene.sigma > 0:
        scale = scene.sigma / np.sqrt(2.0)
        z += scale * (rng.standard_normal(geom.n_elements)
                      + 1j * rng.standard_normal(geom.n_elements))
    return z


def simulate_snapshot(geom: ArrayGeometry, scene: SourceScene, seed) -> OneBitSnapshot:
    """Simulate one quantized snapshot; identical ``seed`` gives identical y.

    ``seed`` may be an int or a sequence of ints (sub-stream key).
    """
    rng = np.random.default_rng(seed)
    z = unquantized_snapshot(geom, scene, rng)
    return OneBitSnapshot(y=csgn(z), scene=scene)


def label_sample(scene: SourceScene, grid: GridSpec):
    """On-grid magnitude and signed off-grid gap labels for a scene.

    Each source is assigned to its nearest grid point ``m``; the magnitude
    label there is ``|s_k|`` and the gap label is ``theta_k - grid[m]`` in
    degrees.  Gaps are stored signed so they can serve as regression
    targets over a symmetric interval.
    """
    m = grid.size
    s_star = np.zeros(m, dtype=np.float32)
    beta_star = np.zeros(m, dtype=np.float32)
    points = grid.points()
    taken = {}
    for theta, coef in zip(scene.doas, scene.coeffs):
        idx = grid.nearest_index(theta)
        if idx in taken:
            raise ValueError(
                f"sources at {taken[idx]} and {theta} deg share grid index {idx}")
        taken[idx] = theta
        s_star[idx] = abs(coef)
        beta_star[idx] = theta - points[idx]
    half = grid.step_deg / 2
    if np.any(np.abs(beta_star) > half * (1 + 1e-6)):
        raise ValueError("off-grid gap exceeds half a grid interval")
    return s_star, beta_star


@dataclass(frozen=True)
class DatasetConfig:
    """Recipe for a labeled one-bit dataset.

    DOAs are drawn by picking distinct interior grid points uniformly and
    adding offsets from U(-1, 1) degrees; endpoint bins are excluded so the
    true angles stay inside the field of view.  Source coefficients have
    real and imaginary parts from U(0.5, 1).
    """

    geometry: ArrayGeometry
    grid: GridSpec = field(default_factory=GridSpec)
    n_sources: int = 2
    snr_set_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    count: int = 100_000
    split: float = 0.9
    offset_max_deg: float = 1.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0.0 < self.split <= 1.0:
            raise ValueError("split must be in (0, 1]")
        if not 1 <= self.n_sources < self.geometry.n_elements:
            raise ValueError("need 1 <= n_sources < n_elements")
        if self.offset_max_deg > self.grid.step_deg / 2:
            raise ValueError("offset range must fit within half a grid interval")
        if self.grid.size < self.n_sources + 2:
            raise ValueError("grid too small for the requested source count")


def draw_scene(cfg: DatasetConfig, rng) -> tuple[SourceScene, float]:
    """Draw one random scene (and its SNR) per the dataset recipe."""
    m = cfg.grid.size
    while True:
        idx = rng.integers(1, m - 1, size=cfg.n_sources)
        if len(set(idx.tolist())) == cfg.n_sources:
            break
    offsets = rng.uniform(-cfg.offset_max_deg, cfg.offset_max_deg, size=cfg.n_sources)
    doas = cfg.grid.points()[idx] + offsets
    re = rng.uniform(0.5, 1.0, size=cfg.n_sources)
    im = rng.uniform(0.5, 1.0, size=cfg.n_sources)
    snr_db = float(rng.choice(np.asarray(cfg.snr_set_db, dtype=float)))
    scene = SourceScene(doas=tuple(doas), coeffs=tuple(re + 1j * im),
                        sigma=snr_to_sigma(snr_db))
    return scene, snr_db


def generate_sample(cfg: DatasetConfig, seed: int, index: int):
    """Generate labeled sample ``index`` of a dataset.

    Each sample derives its own random stream from ``(seed, index)``, so
    any worker partition produces the identical dataset.
    """
    rng = np.random.default_rng([seed, index])
    scene, snr_db = draw_scene(cfg, rng)
    snap = simulate_snapshot(cfg.geometry, scene, [seed, index, 1])
    s_star, beta_star = label_sample(scene, cfg.grid)
    return snap, s_star, beta_star, snr_db


def _sample_block(cfg: DatasetConfig, seed: int, indices):
    out = []
    for i in indices:
        snap, s_star, beta_star, snr_db = generate_sample(cfg, seed, i)
        out.append((snap.y, s_star, beta_star, snr_db, snap.scene.doas))
    return out


def generate_dataset(cfg: DatasetConfig, seed: int, out_dir, jobs: int = 1) -> dict:
    """Write train/validation dataset files; returns their paths and counts.

    The first ``floor(count * split)`` samples stream to ``train.obdoa``,
    the rest to ``val.obdoa``.  Every sample derives its stream from
    ``(seed, index)``, so the output is byte-identical for any ``jobs``.
    """
    import concurrent.futures
    import pathlib

    from . import datafile

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_train = int(cfg.count * cfg.split)
    paths = {"train": out / "train.obdoa", "val": out / "val.obdoa"}
    counts = {"train": n_train, "val": cfg.count - n_train}

    index = 0
    for part in ("train", "val"):
        if counts[part] == 0:
            paths[part] = None
            continue
        indices = range(index, index + counts[part])
        index += counts[part]
        with datafile.DatasetWriter(paths[part], cfg, counts[part]) as writer:
            if jobs > 1:
                chunks = [indices[i:i + 256] for i in range(0, len(indices), 256)]
                with concurrent.futures.ProcessPoolExecutor(jobs) as pool:
                    for block in pool.map(_sample_block, [cfg] * len(chunks),
                                          [seed] * len(chunks), chunks):
                        for record in block:
                            writer.append(*record)
            else:
                for record in _sample_block(cfg, seed, indices):
                    writer.append(*record)
    return {
        "train_path": str(paths["train"]) if paths["train"] else None,
        "val_path": str(paths["val"]) if paths["val"] else None,
        "n_train": counts["train"],
        "n_val": counts["val"],
    }
