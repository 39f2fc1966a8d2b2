"""Inference-only forward pass of the unrolled estimator.

The network replays the solver's structure with learned refinements: a
matched-filter initialization, a stack of spectrum-refinement phases that
replace the normal-equation solve with small 1-D convolutions on the real
and imaginary channels, and final phases that additionally regress the
per-bin off-grid gaps from the spectrum magnitudes through a bounded
fully connected head.

All operations are pure functions of the inputs and a read-only weight
bundle, so a single bundle can serve concurrent callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DictionaryPair, GridSpec
from .simulate import OneBitSnapshot
from .solver import compute_v

BN_EPS = 1e-5  # fixed inference epsilon shared with the training side

DEFAULT_CONV_SPEC = ((4, 16, 3), (16, 16, 3), (16, 2, 3))
DEFAULT_FC_WIDTHS = (256, 256, 128)  # widths of the first three gap-head layers


@dataclass(frozen=True)
class NetArchitecture:
    """Phase counts and layer shapes; every phase preserves spectrum length.

    ``conv_spec`` applies to each phase (each phase owns its weights); the
    first layer must take 4 channels (real/imaginary of the spectrum and
    of the MM feature), the last must emit 2, and kernels must be odd so
    symmetric zero padding keeps the length.  The gap head is exactly 4
    fully connected layers from M back to M.
    """

    grid: GridSpec
    k1: int = 4
    k2: int = 2
    conv_spec: tuple[tuple[int, int, int], ...] = DEFAULT_CONV_SPEC
    fc_spec: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.fc_spec:
            object.__setattr__(self, "fc_spec", DEFAULT_FC_WIDTHS + (self.grid.size,))
        if self.k1 < 0 or self.k2 < 0 or self.k1 + self.k2 < 1:
            raise ValueError("need at least one unrolled phase")
        spec = tuple(tuple(int(v) for v in layer) for layer in self.conv_spec)
        object.__setattr__(self, "conv_spec", spec)
        if spec[0][0] != 4:
            raise ValueError("first conv layer must take 4 input channels")
        if spec[-1][1] != 2:
            raise ValueError("last conv layer must emit 2 output channels")
        for i, (cin, cout, k) in enumerate(spec):
            if k % 2 != 1 or k < 1:
                raise ValueError(f"conv layer {i}: kernel size must be odd")
            if i > 0 and cin != spec[i - 1][1]:
                raise ValueError(f"conv layer {i}: channel mismatch")
        fc = tuple(int(w) for w in self.fc_spec)
        object.__setattr__(self, "fc_spec", fc)
        if len(fc) != 4:
            raise ValueError("gap head must have exactly 4 fully connected layers")
        if fc[-1] != self.grid.size:
            raise ValueError(
                f"gap head output width {fc[-1]} must equal grid size {self.grid.size}")

    @property
    def n_phases(self) -> int:
        return self.k1 + self.k2

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        """Expected name -> shape map for a complete weight bundle."""
        shapes: dict[str, tuple[int, ...]] = {}
        for block, count in (("block1", self.k1), ("block2", self.k2)):
            for p in range(count):
                for l, (cin, cout, k) in enumerate(self.conv_spec):
                    base = f"{block}.phase{p}.conv{l}"
                    shapes[f"{base}.weight"] = (cout, cin, k)
                    shapes[f"{base}.bias"] = (cout,)
                    shapes[f"{base}.prelu"] = (cout,)
        widths = (self.grid.size,) + self.fc_spec
        for l in range(4):
            shapes[f"gap.fc{l}.weight"] = (widths[l + 1], widths[l])
            shapes[f"gap.fc{l}.bias"] = (widths[l + 1],)
            for stat in ("scale", "shift", "mean", "var"):
                shapes[f"gap.bn{l}.{stat}"] = (widths[l + 1],)
        return shapes

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "k2": self.k2,
            "conv_spec": [list(layer) for layer in self.conv_spec],
            "fc_spec": list(self.fc_spec),
            "grid": {
                "fov_min_deg": self.grid.fov_min_deg,
                "fov_max_deg": self.grid.fov_max_deg,
                "step_deg": self.grid.step_deg,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetArchitecture":
        grid = GridSpec(data["grid"]["fov_min_deg"], data["grid"]["fov_max_deg"],
                        data["grid"]["step_deg"])
        return cls(grid=grid, k1=int(data["k1"]), k2=int(data["k2"]),
                   conv_spec=tuple(tuple(l) for l in data["conv_spec"]),
                   fc_spec=tuple(data["fc_spec"]))


@dataclass(frozen=True, eq=False)
class WeightBundle:
    """Named float32 tensors for one architecture, immutable after load."""

    architecture: NetArchitecture
    tensors: dict[str, np.ndarray]
    format_version: int = 1

    def __post_init__(self):
        expected = self.architecture.tensor_shapes()
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ValueError(f"weight bundle is missing tensor {name!r}")
            got = self.tensors[name].shape
            if got != shape:
                raise ValueError(
                    f"tensor {name!r} has shape {got}, expected {shape}")
        extras = set(self.tensors) - set(expected)
        if extras:
            raise ValueError(f"weight bundle has unknown tensors {sorted(extras)}")
        for l in range(4):
            if np.any(self.tensors[f"gap.bn{l}.var"] <= 0):
                raise ValueError(f"gap.bn{l}.var must be strictly positive")
        for arr in self.tensors.values():
            arr.setflags(write=False)

    def conv_params(self, block: str, phase: int):
        """List of (weight, bias, prelu_slope) for one phase's conv stack."""
        out = []
        for l in range(len(self.architecture.conv_spec)):
            base = f"{block}.phase{phase}.conv{l}"
            out.append((self.tensors[f"{base}.weight"],
                        self.tensors[f"{base}.bias"],
                        self.tensors[f"{base}.prelu"]))
        return out

    def gap_params(self):
        out = []
        for l in range(4):
            out.append((self.tensors[f"gap.fc{l}.weight"],
                        self.tensors[f"gap.fc{l}.bias"],
                        self.tensors[f"gap.bn{l}.scale"],
                        self.tensors[f"gap.bn{l}.shift"],
                        self.tensors[f"gap.bn{l}.mean"],
                        self.tensors[f"gap.bn{l}.var"]))
        return out

    @classmethod
    def zeros(cls, architecture: NetArchitecture) -> "WeightBundle":
        """All-zero weights (unit batch-norm variance): the identity network."""
        tensors = {}
        for name, shape in architecture.tensor_shapes().items():
            fill = 1.0 if name.endswith(".var") else 0.0
            tensors[name] = np.full(shape, fill, dtype=np.float32)
        return cls(architecture=architecture, tensors=tensors)

    @classmethod
    def random(cls, architecture: NetArchitecture, seed: int = 0,
               scale: float = 0.1) -> "WeightBundle":
        """Random bundle for structural tests; variances stay positive."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in architecture.tensor_shapes().items():
            arr = rng.normal(0.0, scale, size=shape).astype(np.float32)
            if name.endswith(".var"):
                arr = np.abs(arr) + np.float32(0.5)
            tensors[name] = arr
        return cls(architecture=architecture, tensors=tensors)


@dataclass
class SpectrumEstimate:
    """Max-normalized spectrum plus per-bin gaps, both over the grid."""

    magnitudes: np.ndarray
    beta: np.ndarray
    grid: GridSpec
    doas: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.magnitudes.shape != self.beta.shape:
            raise ValueError("magnitudes and beta must have equal length")
        if np.any(self.magnitudes < 0) or np.any(self.magnitudes > 1 + 1e-12):
            raise ValueError("magnitudes must lie in [0, 1]")
        half = self.grid.step_deg / 2
        if np.any(np.abs(self.beta) > half * (1 + 1e-12)):
            raise ValueError("beta must lie within half a grid interval")


def init_block(y: OneBitSnapshot, pair: DictionaryPair) -> np.ndarray:
    """Matched-filter initialization ``A^H y`` (no gaps assumed)."""
    if y.n_elements != pair.n_elements:
        raise ValueError("snapshot length does not match dictionary")
    return pair.A.conj().T @ y.y


def mm_feature(y: OneBitSnapshot, pair: DictionaryPair,
               x_hat: np.ndarray) -> np.ndarray:
    """Pseudo-measurement back-projected to the grid, ``A^H v``."""
    return pair.A.conj().T @ compute_v(y, pair.A, x_hat)


def _prelu(x: np.ndarray, slope: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, slope[:, None] * x)


def _conv1d_same(channels: np.ndarray, weight: np.ndarray,
                 bias: np.ndarray) -> np.ndarray:
    """Cross-correlation with symmetric zero padding, length preserved."""
    cout, cin, k = weight.shape
    m = channels.shape[1]
    pad = (k - 1) // 2
    padded = np.zeros((cin, m + 2 * pad))
    padded[:, pad:pad + m] = channels
    out = np.tile(bias[:, None].astype(float), (1, m))
    for j in range(k):
        out += weight[:, :, j].astype(float) @ padded[:, j:j + m]
    return out


def _conv_stack(channels: np.ndarray, params) -> np.ndarray:
    for weight, bias, slope in params:
        channels = _prelu(_conv1d_same(channels, weight, bias), slope.astype(float))
    return channels


def _phase_refine(x_hat: np.ndarray, feature: np.ndarray, params) -> np.ndarray:
    stacked = np.vstack([x_hat.real, x_hat.imag, feature.real, feature.imag])
    delta = _conv_stack(stacked, params)
    return x_hat + delta[0] + 1j * delta[1]


def block1_phase(x_hat: np.ndarray, feature: np.ndarray, params) -> np.ndarray:
    """One spectrum-refinement phase: conv stack plus residual connection.

    ``params`` is the ``(weight, bias, prelu)`` list for the phase; with
    all-zero weights the phase is the identity on ``x_hat``.
    """
    if x_hat.shape != feature.shape:
        raise ValueError("spectrum and feature must have equal length")
    return _phase_refine(x_hat, feature, params)


def gap_head(magnitudes: np.ndarray, params, step_deg: float) -> np.ndarray:
    """Bounded gap regression: 4 x (affine, batch norm, tanh), scaled to
    half a grid interval.  Batch norm uses the stored running statistics,
    so single-sample and batched evaluation agree."""
    h = magnitudes.astype(float)
    for weight, bias, scale, shift, mean, var in params:
        h = weight.astype(float) @ h + bias.astype(float)
        h = (h - mean) / np.sqrt(var.astype(float) + BN_EPS) * scale + shift
        h = np.tanh(h)
    return h * (step_deg / 2)


def block2_phase(x_hat: np.ndarray, feature: np.ndarray, conv_params,
                 gap_params, step_deg: float):
    """Spectrum refinement plus gap regression from ``|x_hat_next|``."""
    x_next = _phase_refine(x_hat, feature, conv_params)
    beta = gap_head(np.abs(x_next), gap_params, step_deg)
    return x_next, beta


def normalize_magnitudes(x_hat: np.ndarray) -> np.ndarray:
    mags = np.abs(x_hat)
    peak = mags.max()
    return mags / peak if peak > 0 else mags


def forward(y: OneBitSnapshot, pair: DictionaryPair,
            weights: WeightBundle) -> SpectrumEstimate:
    """Full inference pass: init, K1 refinement phases, K2 gap phases."""
    arch = weights.architecture
    if arch.grid != pair.grid:
        raise ValueError(
            f"weight bundle was trained for M={arch.grid.size}, "
            f"dictionary has M={pair.grid.size}")
    x = init_block(y, pair)
    beta = np.zeros(pair.n_grid)
    for p in range(arch.k1):
        feature = mm_feature(y, pair, x)
        x = block1_phase(x, feature, weights.conv_params("block1", p))
    gap_params = weights.gap_params()
    for p in range(arch.k2):
        feature = mm_feature(y, pair, x)
        x, beta = block2_phase(x, feature, weights.conv_params("block2", p),
                               gap_params, pair.grid.step_deg)
    return SpectrumEstimate(magnitudes=normalize_magnitudes(x), beta=beta,
                            grid=pair.grid)
