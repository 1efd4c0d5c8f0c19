"""Multilinear interpolation of lattice fields at scattered points."""
from __future__ import annotations

import itertools

import numpy as np

from .grid import Grid


def multilinear(grid: Grid, field: np.ndarray, points, *, outside: float | None = None) -> np.ndarray:
    """Interpolate ``field`` (shape ``(C,) + grid.shape`` or ``grid.shape``) at ``points``.

    Neighbour indices wrap periodically.  With ``outside`` set, points that
    leave the box get that value instead.
    Returns shape ``(M, C)`` or ``(M,)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    scalar = field.ndim == grid.dim
    f = field.reshape((1 if scalar else field.shape[0], -1))
    n, d = grid.n, grid.dim
    u = (pts + 0.5 * grid.L) / grid.dx
    base = np.floor(u)
    frac = u - base
    base = base.astype(np.int64)
    strides = n ** np.arange(d - 1, -1, -1)
    out = np.zeros((pts.shape[0], f.shape[0]))
    for corner in itertools.product((0, 1), repeat=d):
        c = np.asarray(corner)
        idx = np.mod(base + c, n) @ strides
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        out += w[:, None] * f[:, idx].T
    if outside is not None:
        out[~grid.contains(pts)] = outside
    return out[:, 0] if scalar else out


def trigonometric(grid: Grid, field: np.ndarray, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of a real lattice field at ``points``.

    Exact for band-limited fields; the Nyquist modes are dropped.  The cost
    is ``O(n**dim * M)`` per channel, so it suits surface quadratures with a
    modest number of nodes.  Shapes follow :func:`multilinear`.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    scalar = field.ndim == grid.dim
    f = field.reshape((1,) + grid.shape) if scalar else field
    n, d = grid.n, grid.dim
    axes = tuple(range(1, d + 1))
    F = np.fft.fftn(f, axes=axes) / n**d
    nyq = n // 2
    for ax in axes:
        idx = [slice(None)] * (d + 1)
        idx[ax] = nyq
        F[tuple(idx)] = 0.0
    k = 2 * np.pi * np.fft.fftfreq(n, d=grid.dx)
    E = [np.exp(1j * np.outer(pts[:, ax] + 0.5 * grid.L, k)) for ax in range(d)]
    out = np.empty((pts.shape[0], f.shape[0]))
    for c in range(f.shape[0]):
        G = F[c] @ E[d - 1].T
        for ax in range(d - 2, -1, -1):
            G = np.einsum("...am,ma->...m", G, E[ax])
        out[:, c] = G.real
    return out[:, 0] if scalar else out
