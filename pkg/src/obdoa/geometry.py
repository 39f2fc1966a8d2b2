"""Array geometries, steering vectors, and angular-grid dictionaries.

Element positions are expressed in half-wavelength units, so the phase of
element ``n`` at angle ``theta`` is ``pi * p_n * sin(theta)``.  Angles on
public interfaces are degrees; derivatives are taken with respect to the
angle in radians, which is the only convention under which a first-order
Taylor step ``a(t) + b(t) * delta`` is consistent.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

PRESETS = {
    "sla18": (0, 1, 2, 3, 4, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19),
    "sla10": (0, 3, 4, 5, 6, 7, 11, 16, 18, 19),
}


@dataclass(frozen=True)
class ArrayGeometry:
    """A linear array described by element positions in half-wavelengths.

    Positions must be strictly increasing and start at 0 (the first
    element is the phase reference).
    """

    positions: tuple[float, ...]
    name: str | None = None

    def __post_init__(self):
        pos = tuple(float(p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) < 2:
            raise ValueError("array needs at least 2 elements")
        if pos[0] != 0.0:
            raise ValueError("first element position must be 0")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("element positions must be strictly increasing")

    @property
    def n_elements(self) -> int:
        return len(self.positions)

    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class GridSpec:
    """Uniform angular grid over a field of view, in degrees."""

    fov_min_deg: float = -60.0
    fov_max_deg: float = 60.0
    step_deg: float = 2.0

    def __post_init__(self):
        if not self.fov_min_deg < self.fov_max_deg:
            raise ValueError("fov_min_deg must be < fov_max_deg")
        if self.step_deg <= 0:
            raise ValueError("step_deg must be > 0")

    @property
    def size(self) -> int:
        span = self.fov_max_deg - self.fov_min_deg
        return int(math.floor(span / self.step_deg + 1e-9)) + 1

    def points(self) -> np.ndarray:
        """Grid angles in degrees, both endpoints included when they align."""
        return self.fov_min_deg + self.step_deg * np.arange(self.size)

    def nearest_index(self, theta_deg: float) -> int:
        """Index of the grid point closest to ``theta_deg`` (ties go low)."""
        if not self.contains(theta_deg):
            raise ValueError(f"angle {theta_deg} deg outside grid field of view")
        return int(np.argmin(np.abs(self.points() - theta_deg)))

    def contains(self, theta_deg: float) -> bool:
        return self.fov_min_deg <= theta_deg <= self.fov_max_deg


@dataclass(frozen=True, eq=False)
class DictionaryPair:
    """Steering dictionary and its angular derivative over a fixed grid.

    ``A[:, m]`` is the steering vector at grid point ``m``; ``B[:, m]`` is
    its derivative with respect to angle in radians.  Arrays are read-only.
    """

    A: np.ndarray
    B: np.ndarray
    grid: GridSpec
    geometry: ArrayGeometry

    @property
    def n_elements(self) -> int:
        return self.A.shape[0]

    @property
    def n_grid(self) -> int:
        return self.A.shape[1]


def make_geometry(spec) -> ArrayGeometry:
    """Build a geometry from a preset name, ``ula:<N>``, or explicit positions.

    Accepts ``"sla18"``, ``"sla10"``, ``"ula:8"`` (also ``"ula(8)"``), a
    comma-separated position string such as ``"0,2,5"``, or any sequence of
    positions in half-wavelength units.
    """
    if isinstance(spec, ArrayGeometry):
        return spec
    if isinstance(spec, str):
        text = spec.strip().lower()
        if text in PRESETS:
            return ArrayGeometry(PRESETS[text], name=text)
        if text.startswith("ula"):
            inner = text[3:].strip(":()")
            try:
                n = int(inner)
            except ValueError:
                raise ValueError(f"cannot parse ULA size from {spec!r}") from None
            return ula(n)
        parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
        if len(parts) < 2:
            raise ValueError(f"unknown geometry spec {spec!r}")
        return ArrayGeometry(tuple(float(p) for p in parts))
    return ArrayGeometry(tuple(spec))


def ula(n: int) -> ArrayGeometry:
    """Uniform linear array with ``n`` elements at half-wavelength spacing."""
    if n < 2:
        raise ValueError("ULA needs at least 2 elements")
    return ArrayGeometry(tuple(range(n)), name=f"ula:{n}")


def _check_angle(theta_deg: float):
    if not -90.0 <= theta_deg <= 90.0:
        raise ValueError(f"angle {theta_deg} deg outside [-90, 90]")


def steering_vector(geom: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Complex array response to a unit source at ``theta_deg``.

    Element ``n`` is ``exp(1j * pi * p_n * sin(theta))``; the first element
    is exactly ``1+0j``.
    """
    _check_angle(theta_deg)
    p = geom.position_array()
    return np.exp(1j * np.pi * p * math.sin(math.radians(theta_deg)))


def steering_derivative(geom: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Derivative of the steering vector with respect to angle in radians."""
    _check_angle(theta_deg)
    p = geom.position_array()
    theta = math.radians(theta_deg)
    return 1j * np.pi * p * math.cos(theta) * np.exp(1j * np.pi * p * math.sin(theta))


@functools.lru_cache(maxsize=32)
def _cached_dictionary(geom: ArrayGeometry, grid: GridSpec) -> DictionaryPair:
    p = geom.position_array()[:, None]
    theta = np.radians(grid.points())[None, :]
    a = np.exp(1j * np.pi * p * np.sin(theta))
    b = 1j * np.pi * p * np.cos(theta) * a
    a.setflags(write=False)
    b.setflags(write=False)
    return DictionaryPair(A=a, B=b, grid=grid, geometry=geom)


def build_dictionary(geom: ArrayGeometry, grid: GridSpec) -> DictionaryPair:
    """On-grid steering dictionary and derivative dictionary for ``grid``.

    Results are cached per ``(geometry, grid)`` pair; the returned arrays
    are shared and immutable.
    """
    return _cached_dictionary(geom, grid)


def effective_dictionary(pair: DictionaryPair, beta_deg: np.ndarray) -> np.ndarray:
    """First-order corrected dictionary ``A + B * diag(beta)``.

    ``beta_deg`` holds per-column off-grid gaps in degrees, each bounded by
    half a grid interval; the product uses radians to match the derivative.
    """
    beta = np.asarray(beta_deg, dtype=float)
    if beta.shape != (pair.n_grid,):
        raise ValueError(f"beta must have length {pair.n_grid}")
    half = pair.grid.step_deg / 2
    if np.any(np.abs(beta) > half * (1 + 1e-12)):
        raise ValueError(f"off-grid gap exceeds half a grid interval ({half} deg)")
    if not beta.any():
        return pair.A
    return pair.A + pair.B * np.radians(beta)[None, :]
