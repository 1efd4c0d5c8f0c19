"""Periodic lattice, wavefunctions and the unitary discrete Fourier transform.

Positions live on ``x_j = -L/2 + j*dx`` (so the origin is a node) and the
dual lattice is ``k = 2*pi*m/L`` stored in FFT order.  The transform is
normalised so that ``(2*pi/L)**dim * sum(|psi_hat|**2) == dx**dim * sum(|psi|**2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import AliasingError

_WORKERS = None


def set_fft_workers(n):
    """Number of threads handed to ``scipy.fft`` (``None`` means one)."""
    global _WORKERS
    _WORKERS = n


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    L: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.L

    @property
    def nyquist(self) -> float:
        return np.pi / self.dx

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @property
    def k_cell_volume(self) -> float:
        return self.dk ** self.dim

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -0.5 * self.L + self.dx * np.arange(self.n)

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Wavenumbers in FFT order; the set is ``2*pi*j/L`` for ``j in [-n/2, n/2)``."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    def axes(self, which="x"):
        """Open (broadcastable) coordinate arrays, one per axis."""
        base = self.x_axis if which == "x" else self.k_axis
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out.append(base.reshape(shape))
        return out

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(a * a for a in self.axes("x"))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(a * a for a in self.axes("k"))

    @cached_property
    def _shift_phase(self) -> np.ndarray:
        # accounts for the lattice starting at -L/2 instead of 0
        ph = np.exp(0.5j * self.k_axis * self.L) * (self.dx / np.sqrt(2 * np.pi))
        out = np.ones(self.shape, dtype=complex)
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out = out * ph.reshape(shape)
        return out

    def points(self) -> np.ndarray:
        """All nodes as an ``(n**dim, dim)`` array in row-major order."""
        mesh = np.meshgrid(*([self.x_axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, x) -> np.ndarray:
        """True for points inside the half-open box ``[-L/2, L/2)**dim``."""
        x = np.asarray(x, dtype=float)
        h = 0.5 * self.L
        return np.all((x >= -h) & (x < h), axis=-1)

    def check_band_limit(self, k_max: float):
        if not k_max < self.nyquist:
            raise AliasingError(
                f"spectral support bound {k_max:.6g} is not below the Nyquist "
                f"wavenumber pi/dx = {self.nyquist:.6g} (dx = {self.dx:.6g})"
            )

    # transforms -----------------------------------------------------------
    def fft(self, values: np.ndarray) -> np.ndarray:
        """Unitary transform over the trailing ``dim`` axes."""
        axes = tuple(range(-self.dim, 0))
        return sfft.fftn(values, axes=axes, workers=_WORKERS) * self._shift_phase

    def ifft(self, values_k: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dim, 0))
        return sfft.ifftn(values_k / self._shift_phase, axes=axes, workers=_WORKERS)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)

    def integrate_k(self, values_k: np.ndarray) -> float:
        return float(np.sum(values_k) * self.k_cell_volume)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex field on ``grid`` stamped with time ``t``; read-only once built."""

    grid: Grid
    t: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if v is self.values and v.flags.writeable:
            v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.integrate(np.abs(self.values) ** 2)))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.t, self.values / self.norm())

    def with_phase(self, theta: float) -> "WaveFunction":
        return WaveFunction(self.grid, self.t, self.values * np.exp(1j * theta))

    def transform(self) -> np.ndarray:
        return self.grid.fft(self.values)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    t: float
    values: np.ndarray = field(repr=False)
    space: str = "x"

    def integrate(self) -> float:
        if self.space == "k":
            return self.grid.integrate_k(self.values)
        return self.grid.integrate(self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """``values`` has shape ``(dim,) + grid.shape``."""

    grid: Grid
    t: float
    values: np.ndarray = field(repr=False)

    def integrate(self) -> np.ndarray:
        axes = tuple(range(1, self.grid.dim + 1))
        return np.sum(self.values, axis=axes) * self.grid.cell_volume


def spectral_gradient(grid: Grid, values: np.ndarray, values_k: np.ndarray | None = None) -> np.ndarray:
    """Spectral gradient of a complex field, shape ``(dim,) + grid.shape``.

    The Nyquist mode is dropped for the odd derivative.
    """
    if values_k is None:
        values_k = grid.fft(values)
    out = np.empty((grid.dim,) + grid.shape, dtype=complex)
    nyq = grid.n // 2
    for ax, k in enumerate(grid.axes("k")):
        kk = k.copy()
        idx = [0] * grid.dim
        idx[ax] = nyq
        kk[tuple(idx)] = 0.0
        out[ax] = grid.ifft(1j * kk * values_k)
    return out
