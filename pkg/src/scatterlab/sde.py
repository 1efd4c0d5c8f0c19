"""Nelson diffusions and Bohmian trajectories driven by stored wavefunction frames.

The Nelson drift is ``b = (grad(rho)/2 + J) / rho`` so that, with unit
diffusion, the process density follows ``|psi_t|^2``.  The literal
``(grad(rho) + J) / rho`` form is available as ``convention="paper_literal"``
for the density-tracking comparison.
"""
from __future__ import annotations

import bisect
import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ExtrapolationError, FrameFormatError
from .grid import Grid, WaveFunction, spectral_gradient
from .interp import multilinear

MODES = ("nelson", "bohmian")
CONVENTIONS = ("half", "paper_literal")
EPS_NODE = 1e-10


@dataclass(frozen=True, eq=False)
class DriftFrame:
    grid: Grid
    t: float
    values: np.ndarray = field(repr=False)
    mode: str = "nelson"
    convention: str = "half"
    cap: float = np.inf
    capped_nodes: int = 0


def drift_field(psi: WaveFunction, mode: str = "nelson", *, convention: str = "half",
                dt_sde: float | None = None, cap: float | None = None,
                eps_rel: float = EPS_NODE, grad: np.ndarray | None = None) -> DriftFrame:
    """Drift vector per node.

    Densities below ``eps_rel * max(rho)`` are replaced by that floor and the
    result is capped at ``0.5 * dx / dt_sde`` (or ``cap``) in norm.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if convention not in CONVENTIONS:
        raise ValueError(f"drift convention must be one of {CONVENTIONS}")
    g = psi.grid
    if grad is None:
        grad = spectral_gradient(g, psi.values)
    prod = np.conj(psi.values) * grad          # Re = grad(rho)/2, Im = J
    rho = np.abs(psi.values) ** 2
    denom = np.maximum(rho, eps_rel * rho.max())
    if mode == "bohmian":
        b = prod.imag / denom
    elif convention == "half":
        b = (prod.real + prod.imag) / denom
    else:
        b = (2 * prod.real + prod.imag) / denom
    if cap is None:
        cap = 0.5 * g.dx / dt_sde if dt_sde else np.inf
    capped = 0
    if np.isfinite(cap):
        nrm = np.sqrt(np.sum(b * b, axis=0))
        over = nrm > cap
        capped = int(over.sum())
        if capped:
            b = b * np.where(over, cap / np.where(over, nrm, 1.0), 1.0)
    return DriftFrame(g, float(psi.t), b, mode, convention, float(cap), capped)


class DriftProvider:
    """Time-ordered drift frames with linear-in-time, multilinear-in-space lookup."""

    def __init__(self, frames: Sequence[DriftFrame] = ()):
        self.frames: list[DriftFrame] = []
        self.times: list[float] = []
        for f in frames:
            self.append(f)

    def append(self, frame: DriftFrame):
        if self.times and not frame.t > self.times[-1]:
            raise ValueError("frame times must be strictly increasing")
        if self.frames and frame.grid != self.frames[0].grid:
            raise ValueError("all frames must share one grid")
        self.frames.append(frame)
        self.times.append(frame.t)

    def drop_before(self, t: float):
        """Forget frames that can no longer bracket a request at time >= ``t``."""
        i = bisect.bisect_right(self.times, t) - 1
        if i > 0:
            del self.frames[:i]
            del self.times[:i]

    @property
    def grid(self) -> Grid:
        return self.frames[0].grid

    @property
    def t_min(self) -> float:
        return self.times[0]

    @property
    def t_max(self) -> float:
        return self.times[-1]

    @property
    def cap(self) -> float:
        return min(f.cap for f in self.frames) if self.frames else np.inf

    def __call__(self, t: float, x) -> np.ndarray:
        return interpolate_drift(self, t, x)


def interpolate_drift(provider: DriftProvider, t: float, x) -> np.ndarray:
    """Drift at time ``t`` and positions ``x`` (shape ``(M, dim)``)."""
    if not provider.frames:
        raise ExtrapolationError("drift provider holds no frames")
    tol = 1e-9 * max(1.0, abs(t))
    if t < provider.t_min - tol or t > provider.t_max + tol:
        raise ExtrapolationError(
            f"t = {t:.12g} outside stored frame range [{provider.t_min:.12g}, {provider.t_max:.12g}]"
        )
    times = provider.times
    i = bisect.bisect_right(times, t) - 1
    i = min(max(i, 0), len(times) - 1)
    f0 = provider.frames[i]
    b0 = multilinear(f0.grid, f0.values, x)
    if abs(t - times[i]) <= tol or i == len(times) - 1:
        return b0
    f1 = provider.frames[i + 1]
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1 - w) * b0 + w * multilinear(f1.grid, f1.values, x)


# random streams -----------------------------------------------------------


def path_generators(seed: int, path_ids) -> list[np.random.Generator]:
    """One independent generator per path, keyed by ``(seed, path_id)``."""
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(i),))))
            for i in path_ids]


def _as_generators(rng, n):
    if isinstance(rng, (int, np.integer)):
        return path_generators(int(rng), range(n))
    gens = list(rng)
    if len(gens) != n:
        raise ValueError(f"need {n} generators, got {len(gens)}")
    return gens


def sample_initial(psi: WaveFunction, N: int, rng) -> np.ndarray:
    """``N`` i.i.d. draws from the lattice density of ``psi``.

    Inverse CDF over the flattened grid followed by uniform jitter inside the
    cell centred on the chosen node.  ``rng`` is a seed or ``N`` per-path
    generators (each consumes ``1 + dim`` uniforms).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    g = psi.grid
    gens = _as_generators(rng, N)
    draws = np.array([gen.random(1 + g.dim) for gen in gens])
    cdf = np.cumsum(np.abs(psi.values.ravel()) ** 2)
    flat = np.searchsorted(cdf, draws[:, 0] * cdf[-1], side="right")
    flat = np.minimum(flat, cdf.size - 1)
    idx = np.stack(np.unravel_index(flat, g.shape), axis=1)
    return g.x_axis[idx] + (draws[:, 1:] - 0.5) * g.dx


# ensembles -----------------------------------------------------------------


class PathEnsemble:
    """``N`` paths advanced in lock-step; samples are stored every ``sample_stride`` steps."""

    NOISE_CHUNK = 64

    def __init__(self, grid: Grid, x0: np.ndarray, t0: float, dt_sde: float, *, mode: str = "nelson",
                 convention: str = "half", seed: int = 0, path_ids=None, generators=None,
                 sample_stride: int = 1):
        if not t0 > 0:
            raise ValueError("paths must start at t0 > 0")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.grid = grid
        self.mode = mode
        self.convention = convention
        self.seed = int(seed)
        self.t0 = float(t0)
        self.dt_sde = float(dt_sde)
        self.sample_stride = int(sample_stride)
        self.x = np.array(x0, dtype=float).reshape(-1, grid.dim)
        self.N = self.x.shape[0]
        self.path_ids = np.arange(self.N) if path_ids is None else np.asarray(path_ids)
        self.generators = generators if generators is not None else path_generators(self.seed, self.path_ids)
        self.step = 0
        self.frozen = ~grid.contains(self.x)
        self.cap_hits = 0
        self.max_step_length = 0.0
        self._noise = None
        self._noise_pos = self.NOISE_CHUNK
        self._times = [self.t0]
        self._samples = [self.x.copy()]
        self._stacked = None

    @classmethod
    def start(cls, psi_t0: WaveFunction, N: int, seed: int, dt_sde: float, *, mode: str = "nelson",
              convention: str = "half", sample_stride: int = 1, path_ids=None) -> "PathEnsemble":
        ids = np.arange(N) if path_ids is None else np.asarray(path_ids)
        gens = path_generators(seed, ids)
        x0 = sample_initial(psi_t0, len(ids), gens)
        return cls(psi_t0.grid, x0, psi_t0.t, dt_sde, mode=mode, convention=convention, seed=seed,
                   path_ids=ids, generators=gens, sample_stride=sample_stride)

    @property
    def t(self) -> float:
        return self.t0 + self.step * self.dt_sde

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def sample_times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def positions(self) -> np.ndarray:
        """Stored samples, shape ``(N, samples, dim)``."""
        if self._stacked is None or self._stacked.shape[1] != len(self._samples):
            self._stacked = np.stack(self._samples, axis=1)
        return self._stacked

    @property
    def out_of_box(self) -> int:
        return int(self.frozen.sum())

    def sample_index(self, t: float) -> int:
        times = self.sample_times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored sample at t = {t}")
        return i

    def at(self, t: float) -> np.ndarray:
        return self._samples[self.sample_index(t)]

    def _next_noise(self) -> np.ndarray:
        if self._noise_pos >= self.NOISE_CHUNK:
            k, d = self.NOISE_CHUNK, self.dim
            self._noise = np.stack([g.standard_normal((k, d)) for g in self.generators], axis=0)
            self._noise_pos = 0
        out = self._noise[:, self._noise_pos, :]
        self._noise_pos += 1
        return out

    def _record(self):
        self._times.append(self.t)
        self._samples.append(self.x.copy())


def advance(ensemble: PathEnsemble, provider: DriftProvider | Callable, dt_sde: float | None = None,
            t_stop: float | None = None) -> PathEnsemble:
    """Euler-Maruyama (Nelson) or explicit Euler (Bohmian) steps up to ``t_stop``.

    ``X <- X + b(t, X) dt + sqrt(dt) xi`` with standard normal ``xi`` per axis;
    the Bohmian mode drops the noise.  Paths that leave the box are frozen.
    """
    dt = ensemble.dt_sde if dt_sde is None else float(dt_sde)
    if abs(dt - ensemble.dt_sde) > 1e-15:
        raise ValueError("dt_sde must match the ensemble step")
    if t_stop is None:
        t_stop = provider.t_max
    span = t_stop - ensemble.t
    n = int(round(span / dt))
    if n < 0 or abs(n * dt - span) > 1e-9 * max(1.0, abs(t_stop)):
        raise ValueError(f"t_stop = {t_stop} is not reachable in whole steps of {dt} from t = {ensemble.t}")
    if isinstance(provider, DriftProvider) and provider.frames:
        frame_dt = np.diff(provider.times)
        if frame_dt.size and dt > frame_dt.min() * (1 + 1e-9):
            raise ValueError("dt_sde must not exceed the stored frame spacing")
    cap = getattr(provider, "cap", np.inf)
    sq = np.sqrt(dt)
    noisy = ensemble.mode == "nelson"
    for _ in range(n):
        noise = ensemble._next_noise() if noisy else None
        active = ~ensemble.frozen
        if np.any(active):
            xa = ensemble.x[active]
            b = np.asarray(provider(ensemble.t, xa))
            if np.isfinite(cap):
                ensemble.cap_hits += int(np.sum(np.sum(b * b, axis=1) >= (cap * (1 - 1e-9)) ** 2))
            inc = b * dt
            if noisy:
                inc = inc + sq * noise[active]
            step_len = np.sqrt(np.sum(inc * inc, axis=1))
            if step_len.size:
                ensemble.max_step_length = max(ensemble.max_step_length, float(step_len.max()))
            ensemble.x[active] = xa + inc
            ensemble.frozen |= ~ensemble.grid.contains(ensemble.x)
        ensemble.step += 1
        if ensemble.step % ensemble.sample_stride == 0:
            ensemble._record()
    return ensemble


# dumps -------------------------------------------------------------------

_ENS_MAGIC = b"NSLE"
_ENS_HEAD = struct.Struct("<4sIIIIQI")


def write_ensemble_csv(ensemble: PathEnsemble, path):
    pos = ensemble.positions
    times = ensemble.sample_times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "sample_index", "t"] + [f"x{i + 1}" for i in range(ensemble.dim)])
        for p, pid in enumerate(ensemble.path_ids):
            for s, t in enumerate(times):
                w.writerow([int(pid), s, repr(float(t))] + [repr(float(v)) for v in pos[p, s]])


def write_ensemble_binary(ensemble: PathEnsemble, path):
    """Little-endian block: header, path ids (u64), times (f64), positions (f64)."""
    pos = ensemble.positions
    times = ensemble.sample_times
    mode = MODES.index(ensemble.mode)
    with open(path, "wb") as fh:
        fh.write(_ENS_HEAD.pack(_ENS_MAGIC, 1, ensemble.dim, ensemble.N, times.size, ensemble.seed, mode))
        fh.write(np.asarray(ensemble.path_ids, dtype="<u8").tobytes())
        fh.write(times.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(pos, dtype="<f8").tobytes())


def read_ensemble_binary(path) -> dict:
    data = Path(path).read_bytes()
    if len(data) < _ENS_HEAD.size:
        raise FrameFormatError("ensemble dump too short")
    magic, version, dim, N, S, seed, mode = _ENS_HEAD.unpack_from(data)
    if magic != _ENS_MAGIC or version != 1:
        raise FrameFormatError("not an ensemble dump (bad magic or version)")
    off = _ENS_HEAD.size
    ids = np.frombuffer(data, "<u8", N, off)
    off += 8 * N
    times = np.frombuffer(data, "<f8", S, off)
    off += 8 * S
    pos = np.frombuffer(data, "<f8", N * S * dim, off).reshape(N, S, dim)
    return {"dim": dim, "seed": seed, "mode": MODES[mode], "path_ids": ids, "times": times, "positions": pos}
