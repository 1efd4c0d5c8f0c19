"""Estimators for asymptotic velocity, scattering into cones and flux across surfaces.

Sign convention used throughout: a crossing is ``+1`` when the path enters
``D = C ∩ {|x| > R}``.  The cap flux uses the radial (outward from the
ball) normal, the lateral flux the normal pointing out of the cone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .cones import (CAP, LATERAL, ConeRegion, cap_quadrature, classify_segments, lateral_quadrature,
                    region_contains, _gauss_panels)
from .grid import Grid, WaveFunction, spectral_gradient
from .interp import multilinear, trigonometric
from .propagator import OutStateDensity
from .sde import PathEnsemble


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else 0.0, 0.0
    return float(math.fsum(v) / v.size), float(v.std(ddof=1) / np.sqrt(v.size))


def binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1 - p), 0.0) / n))


# windows -------------------------------------------------------------------


def _step(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3 - 2 * s)


@dataclass(frozen=True)
class WindowFunction:
    """Piecewise-cubic taper: rises on ``[t_start, t_flat_start]``, equals 1
    up to ``t_flat_end`` and falls to 0 at ``t_end``.

    With ``t_start == t_flat_start`` the window is 1 from the start; with
    ``t_end = inf`` it never falls.
    """

    t_start: float
    t_flat_start: float
    t_flat_end: float
    t_end: float
    name: str = ""

    def __post_init__(self):
        if not (self.t_start <= self.t_flat_start <= self.t_flat_end <= self.t_end):
            raise ValueError("window breakpoints must be ordered")

    @classmethod
    def standard(cls, t0: float, flat_end: float, end: float, name: str = "standard") -> "WindowFunction":
        return cls(t0, t0, flat_end, end, name)

    @classmethod
    def constant(cls, t0: float = 0.0) -> "WindowFunction":
        return cls(t0, t0, np.inf, np.inf, "constant")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):        # near-degenerate ramps saturate the step
            return self._eval(t)

    def _eval(self, t):
        up = np.ones_like(t)
        if self.t_flat_start > self.t_start:
            up = _step((t - self.t_start) / (self.t_flat_start - self.t_start))
        down = np.ones_like(t)
        if np.isfinite(self.t_end) and self.t_end > self.t_flat_end:
            down = 1 - _step((t - self.t_flat_end) / (self.t_end - self.t_flat_end))
        elif np.isfinite(self.t_end):
            down = (t <= self.t_end).astype(float)
        return up * down

    @property
    def variation(self) -> float:
        rise = 1.0 if self.t_flat_start > self.t_start else 0.0
        fall = 1.0 if np.isfinite(self.t_end) else 0.0
        return rise + fall


def windowed_integral(times, rates, window) -> float:
    """Trapezoid rule for ``int phi(t) rate(t) dt`` over the frame times."""
    times = np.asarray(times, dtype=float)
    rates = np.asarray(rates, dtype=float)
    return float(integrate.trapezoid(window(times) * rates, times))


# per-frame quantities ----------------------------------------------------------


def _current_values(psi: WaveFunction) -> np.ndarray:
    grad = spectral_gradient(psi.grid, psi.values)
    return np.imag(np.conj(psi.values) * grad)


def default_resolution(grid: Grid, length: float) -> int:
    """Nodes so that neighbouring quadrature points are at most ``dx/2`` apart."""
    return max(16, int(np.ceil(length / (0.5 * grid.dx))))


def cap_resolution(grid: Grid, cone: ConeRegion, R: float) -> int:
    span = 2 * np.pi if cone.full else 2 * cone.half_angle
    m = default_resolution(grid, span * R)
    return m if grid.dim != 3 else max(8, int(np.ceil(m / 4)))


def _surface_rate(grid, J, nodes, weights, normals) -> float:
    if weights.size == 0:
        return 0.0
    jv = multilinear(grid, J, nodes, outside=0.0)
    return float(np.sum(weights * np.einsum("ij,ij->i", jv, normals)))


def cap_flux_rate(psi: WaveFunction, cone: ConeRegion, R: float, m: int | None = None,
                  J: np.ndarray | None = None, quad=None) -> float:
    """``∮_{C∩S_R} J·n`` with the outward radial normal."""
    g = psi.grid
    if J is None:
        J = _current_values(psi)
    if quad is None:
        quad = cap_quadrature(cone, R, m or cap_resolution(g, cone, R))
    return _surface_rate(g, J, *quad)


def lateral_flux_rate(psi: WaveFunction, cone: ConeRegion, R: float, R_outer: float, m: int | None = None,
                      J: np.ndarray | None = None, quad=None) -> float:
    """``∫_{∂C, R<=|x|<=R_outer} J·n`` with the normal pointing out of the cone."""
    g = psi.grid
    if J is None:
        J = _current_values(psi)
    if quad is None:
        quad = lateral_quadrature(cone, R, R_outer, m or default_resolution(g, R_outer - R))
    return _surface_rate(g, J, *quad)


def cone_masses(psi: WaveFunction, cone: ConeRegion, R: float, rho: np.ndarray | None = None):
    """Grid quadrature of ``rho`` over ``C`` and over ``C ∩ {|x| > R}``."""
    g = psi.grid
    rho = np.abs(psi.values) ** 2 if rho is None else rho
    inside = cone.contains_axes(g.axes("x"))
    far = inside & (g.r2 > R * R)
    return g.integrate(np.where(inside, rho, 0.0)), g.integrate(np.where(far, rho, 0.0))


def tail_radius(psi: WaveFunction, tail: float = 1e-8) -> float:
    """Smallest radius with less than ``tail`` probability outside it."""
    g = psi.grid
    r = np.sqrt(g.r2).ravel()
    rho = (np.abs(psi.values) ** 2).ravel() * g.cell_volume
    order = np.argsort(r)[::-1]
    outside = np.cumsum(rho[order])
    k = np.searchsorted(outside, tail)
    return float(r[order][min(k, r.size - 1)]) + g.dx


# pathwise estimators -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VelocityEstimate:
    p_plus: np.ndarray = field(repr=False)
    T: float
    T_half: float
    p_half: np.ndarray = field(repr=False)

    @property
    def discrepancy(self) -> np.ndarray:
        return np.linalg.norm(self.p_plus - self.p_half, axis=1)

    def mean(self):
        return self.p_plus.mean(axis=0), self.p_plus.std(axis=0, ddof=1) / np.sqrt(len(self.p_plus))

    def second_moment(self):
        return mean_se(np.sum(self.p_plus**2, axis=1))


def asymptotic_velocity(ensemble: PathEnsemble, T: float | None = None) -> VelocityEstimate:
    """Per-path ``X_T / T`` with the ``T/2`` horizon for the discrepancy diagnostic."""
    times = ensemble.sample_times
    T = float(times[-1]) if T is None else T
    xT = ensemble.at(T)
    i_half = int(np.argmin(np.abs(times - 0.5 * T)))
    T2 = float(times[i_half])
    return VelocityEstimate(xT / T, T, T2, ensemble.positions[:, i_half] / T2)


@dataclass(frozen=True, eq=False)
class SettlementRecord:
    check_times: np.ndarray
    indicators: np.ndarray = field(repr=False)
    last_flip: np.ndarray = field(repr=False)
    settled: np.ndarray = field(repr=False)
    unsettled: np.ndarray = field(repr=False)
    in_cone_p_plus: np.ndarray = field(repr=False)

    @property
    def fraction_settled_in_cone(self) -> float:
        return float(np.mean(self.settled & ~self.unsettled))

    @property
    def fraction_settled(self) -> float:
        return float(np.mean(~self.unsettled))

    @property
    def fraction_unsettled(self) -> float:
        return float(np.mean(self.unsettled))

    @property
    def mc_fraction(self) -> float:
        return float(np.mean(self.in_cone_p_plus))


def sic_pathwise(ensemble: PathEnsemble, cone: ConeRegion, check_times: Sequence[float] | None = None) -> SettlementRecord:
    """Track ``chi_C(X_t)`` over the tail half of the run.

    A path is unsettled when its indicator last flips during the final
    quarter of the checked window.
    """
    times = ensemble.sample_times
    t0, T = float(times[0]), float(times[-1])
    if check_times is None:
        check_times = times[times >= t0 + 0.5 * (T - t0) - 1e-12]
    check_times = np.asarray(check_times, dtype=float)
    idx = [ensemble.sample_index(t) for t in check_times]
    pos = ensemble.positions[:, idx]
    ind = cone.contains(pos)
    flips = ind[:, 1:] != ind[:, :-1]
    any_flip = flips.any(axis=1)
    last = np.where(any_flip, flips.shape[1] - np.argmax(flips[:, ::-1], axis=1), 0)
    last_flip = np.where(any_flip, check_times[last], -np.inf)
    span = check_times[-1] - check_times[0]
    unsettled = last_flip > check_times[-1] - 0.25 * span
    p_plus = ensemble.at(T) / T
    return SettlementRecord(check_times, ind, last_flip, ind[:, -1], unsettled, cone.contains(p_plus))


@dataclass(frozen=True, eq=False)
class CrossingLedger:
    """Signed crossings of ``∂D`` for every path.

    ``events`` columns: path index, time, piece (0 cap / 1 lateral), sign.
    """

    cone: ConeRegion
    R: float
    N_cap: np.ndarray = field(repr=False)
    N_lat: np.ndarray = field(repr=False)
    start_in: np.ndarray = field(repr=False)
    end_in: np.ndarray = field(repr=False)
    event_path: np.ndarray = field(repr=False)
    event_t: np.ndarray = field(repr=False)
    event_piece: np.ndarray = field(repr=False)
    event_sign: np.ndarray = field(repr=False)
    tangent_drops: int = 0
    corners: int = 0
    unresolved: int = 0
    max_segment: float = 0.0

    @property
    def N_total(self) -> np.ndarray:
        return self.N_cap + self.N_lat

    @property
    def telescoping_ok(self) -> np.ndarray:
        return self.N_total == self.end_in.astype(int) - self.start_in.astype(int)

    @property
    def segment_condition_ok(self) -> bool:
        return self.max_segment <= 0.5 * self.R

    def means(self) -> dict:
        return {"N_cap": mean_se(self.N_cap), "N_lat": mean_se(self.N_lat), "N_total": mean_se(self.N_total)}

    def events_for(self, path: int):
        sel = self.event_path == path
        return list(zip(self.event_t[sel], self.event_piece[sel], self.event_sign[sel]))

    def windowed(self, window) -> np.ndarray:
        """Per-path ``<mu_D, phi> = sum_events sign * phi(t_event)``."""
        out = np.zeros(self.N_cap.size)
        np.add.at(out, self.event_path, self.event_sign * window(self.event_t))
        return out


def crossing_count(ensemble: PathEnsemble, cone: ConeRegion, R: float, block: int = 32) -> CrossingLedger:
    """Classify every stored segment of every path against ``∂(C ∩ {|x| > R})``."""
    pos = ensemble.positions
    times = ensemble.sample_times
    N, S, d = pos.shape
    n_cap = np.zeros(N, dtype=np.int64)
    n_lat = np.zeros(N, dtype=np.int64)
    ev_p, ev_t, ev_k, ev_s = [], [], [], []
    tangent = corners = unresolved = 0
    max_seg = 0.0
    for s0 in range(0, S - 1, block):
        s1 = min(S - 1, s0 + block)
        a = pos[:, s0:s1].reshape(-1, d)
        b = pos[:, s0 + 1:s1 + 1].reshape(-1, d)
        seglen = np.linalg.norm(b - a, axis=1)
        if seglen.size:
            max_seg = max(max_seg, float(seglen.max()))
        # a segment with both ends strictly inside the ball cannot meet ∂D
        keep = np.flatnonzero((np.einsum("ij,ij->i", a, a) >= R * R) | (np.einsum("ij,ij->i", b, b) >= R * R))
        if keep.size == 0:
            continue
        batch = classify_segments(cone, R, a[keep], b[keep])
        tangent += batch.tangent_drops
        corners += batch.corners
        unresolved += batch.unresolved
        if batch.segment.size == 0:
            continue
        seg = keep[batch.segment]
        path = seg // (s1 - s0)
        step = s0 + seg % (s1 - s0)
        t = times[step] + batch.s * (times[step + 1] - times[step])
        cap = batch.piece == CAP
        np.add.at(n_cap, path[cap], batch.sign[cap])
        np.add.at(n_lat, path[~cap], batch.sign[~cap])
        ev_p.append(path)
        ev_t.append(t)
        ev_k.append(batch.piece)
        ev_s.append(batch.sign.astype(np.int64))
    cat = (lambda xs, dt: np.concatenate(xs) if xs else np.empty(0, dtype=dt))
    ev_p, ev_t, ev_k, ev_s = cat(ev_p, np.intp), cat(ev_t, float), cat(ev_k, np.int8), cat(ev_s, np.int64)
    order = np.lexsort((ev_t, ev_p))
    return CrossingLedger(cone, float(R), n_cap, n_lat, region_contains(cone, R, pos[:, 0]),
                          region_contains(cone, R, pos[:, -1]), ev_p[order], ev_t[order], ev_k[order],
                          ev_s[order], tangent, corners, unresolved, max_seg)


@dataclass(frozen=True)
class FasRow:
    R: float
    mean_abs_diff: float
    agreement: float
    telescoping: float
    n_reaching: int


def fas_pathwise(ensemble: PathEnsemble, cone: ConeRegion, R_list: Sequence[float], T: float | None = None,
                 ledgers: dict | None = None) -> list[FasRow]:
    """Per-R comparison of ``N_total`` with ``chi_C(p_+)``, ``p_+ = X_T/T``."""
    vel = asymptotic_velocity(ensemble, T)
    chi = cone.contains(vel.p_plus).astype(int)
    rows = []
    for R in R_list:
        led = ledgers[R] if ledgers and R in ledgers else crossing_count(ensemble, cone, R)
        diff = np.abs(led.N_total - chi)
        reach = int(np.sum(np.linalg.norm(ensemble.positions, axis=2).max(axis=1) > R))
        rows.append(FasRow(float(R), float(diff.mean()), float(np.mean(diff == 0)),
                           float(np.mean(led.telescoping_ok)), reach))
    return rows


# quantum-side estimators --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConeSeries:
    times: np.ndarray
    in_cone: np.ndarray
    in_cone_far: np.ndarray

    @property
    def plateau(self) -> float:
        return float(self.in_cone[-1])

    @property
    def plateau_far(self) -> float:
        return float(self.in_cone_far[-1])


def sic_quantum(frames: Iterable[WaveFunction], cone: ConeRegion, R: float) -> ConeSeries:
    """Time series of ``int_C rho`` and ``int_{C, |x|>R} rho``; the last value is the plateau."""
    ts, a, b = [], [], []
    for psi in frames:
        m1, m2 = cone_masses(psi, cone, R)
        ts.append(psi.t)
        a.append(m1)
        b.append(m2)
    return ConeSeries(np.array(ts), np.array(a), np.array(b))


def flux_series(frames: Iterable[WaveFunction], cone: ConeRegion, R: float, *, piece: str = "cap",
                R_outer: float | None = None, m: int | None = None):
    """``(times, rates)`` of the cap or lateral flux over ``frames``."""
    frames = list(frames)
    if not frames:
        return np.empty(0), np.empty(0)
    g = frames[0].grid
    if piece == "cap":
        quad = cap_quadrature(cone, R, m or cap_resolution(g, cone, R))
    else:
        if R_outer is None:
            R_outer = max(max(tail_radius(f) for f in frames), R + g.dx)
        quad = lateral_quadrature(cone, R, R_outer, m or default_resolution(g, R_outer - R))
    ts = np.array([f.t for f in frames])
    rates = np.array([_surface_rate(g, _current_values(f), *quad) for f in frames])
    return ts, rates


def flux_integral(frames, cone: ConeRegion, R: float, window, m: int | None = None) -> float:
    """``int dt phi(t) ∮_{C∩S_R} J·n`` by the trapezoid rule over frame times."""
    ts, rates = flux_series(frames, cone, R, piece="cap", m=m)
    return windowed_integral(ts, rates, window)


def lateral_flux(frames, cone: ConeRegion, R: float, R_outer: float | None, window, m: int | None = None) -> float:
    """``int dt phi(t) ∫_{∂C ∩ {|x|>R}} J·n`` (normal out of the cone)."""
    ts, rates = flux_series(frames, cone, R, piece="lateral", R_outer=R_outer, m=m)
    return windowed_integral(ts, rates, window)


@dataclass(frozen=True)
class CrossingFluxCheck:
    mc_value: float
    mc_se: float
    quantum_value: float

    @property
    def discrepancy(self) -> float:
        return self.mc_value - self.quantum_value


def crossing_vs_flux(ledger: CrossingLedger, times, cap_rates, lateral_rates, window) -> CrossingFluxCheck:
    """Compare ``E<mu_D, phi>`` with ``-int phi ∮_{∂D} J·n``.

    On the cap the normal exterior to ``D`` points into the ball, on the
    lateral piece it points out of the cone, so the quantum side is
    ``int phi (cap_rate - lateral_rate)``.
    """
    mc, se = mean_se(ledger.windowed(window))
    q = windowed_integral(times, np.asarray(cap_rates) - np.asarray(lateral_rates), window)
    return CrossingFluxCheck(mc, se, q)


def crossing_vs_flux_frames(ensemble: PathEnsemble, frames, cone: ConeRegion, R: float, window,
                            R_outer: float | None = None) -> CrossingFluxCheck:
    frames = list(frames)
    ts, cap = flux_series(frames, cone, R, piece="cap")
    _, lat = flux_series(frames, cone, R, piece="lateral", R_outer=R_outer)
    return crossing_vs_flux(crossing_count(ensemble, cone, R), ts, cap, lat, window)


# continuity ----------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    R: float


@dataclass(frozen=True)
class TruncatedCone:
    cone: ConeRegion
    R: float
    R_outer: float


@dataclass(frozen=True)
class WholeBox:
    pass


def shell_quadrature(cone: ConeRegion, r_in: float, r_out: float, m_r: int, m_ang: int):
    """Volume quadrature of ``C ∩ {r_in <= |x| <= r_out}``."""
    r, wr = _gauss_panels(r_in, r_out, m_r)
    dirs, dw, _ = cap_quadrature(cone, 1.0, m_ang)
    d = cone.dim
    pts = (r[:, None, None] * dirs[None]).reshape(-1, d)
    wts = (wr[:, None] * r[:, None] ** (d - 1) * dw[None, :]).ravel()
    return pts, wts


def ball_transform(grid: Grid, R: float) -> np.ndarray:
    """``int_{|x|<R} exp(i k.x) dx`` on the k-lattice (FFT order)."""
    k = np.sqrt(grid.k2)
    ks = np.where(k > 0, k, 1.0)
    if grid.dim == 1:
        out = 2 * np.sin(ks * R) / ks
        zero = 2 * R
    elif grid.dim == 2:
        out = 2 * np.pi * R * special.j1(ks * R) / ks
        zero = np.pi * R * R
    else:
        out = 4 * np.pi * (np.sin(ks * R) - ks * R * np.cos(ks * R)) / ks**3
        zero = 4 * np.pi * R**3 / 3
    return np.where(k > 0, out, zero)


class RegionProbe:
    """Mass of ``rho`` in a region and net outward current through its boundary.

    ``interpolation="spectral"`` (balls only) integrates the trigonometric
    interpolant of ``rho`` over the ball exactly and evaluates ``J`` on the
    sphere nodes by trigonometric interpolation; ``"linear"`` uses a polar
    volume quadrature with multilinear interpolation.
    """

    def __init__(self, grid: Grid, region, interpolation: str = "linear"):
        self.grid = grid
        self.region = region
        self.spectral = interpolation == "spectral"
        self.volume = None
        self.surfaces = []
        if interpolation not in ("linear", "spectral"):
            raise ValueError(f"unknown interpolation {interpolation!r}")
        if isinstance(region, WholeBox):
            return
        if isinstance(region, Ball):
            full = ConeRegion.full_space(grid.dim)
            m_ang = cap_resolution(grid, full, region.R)
            self.surfaces = [cap_quadrature(full, region.R, m_ang)]
            if self.spectral:
                self._ball_hat = ball_transform(grid, region.R)
            else:
                self.volume = shell_quadrature(full, 0.0, region.R, default_resolution(grid, region.R), m_ang)
        elif isinstance(region, TruncatedCone):
            if self.spectral:
                raise ValueError("spectral interpolation is only available for balls")
            c, R, Ro = region.cone, region.R, region.R_outer
            m_r = default_resolution(grid, Ro - R)
            self.volume = shell_quadrature(c, R, Ro, m_r, cap_resolution(grid, c, Ro))
            inner = cap_quadrature(c, R, cap_resolution(grid, c, R))
            outer = cap_quadrature(c, Ro, cap_resolution(grid, c, Ro))
            lat = lateral_quadrature(c, R, Ro, m_r)
            self.surfaces = [(inner[0], inner[1], -inner[2]), outer, lat]
        else:
            raise TypeError(f"unsupported region {region!r}")

    def mass(self, rho: np.ndarray) -> float:
        g = self.grid
        if self.spectral:
            rho_k = g.fft(rho.astype(complex))
            return float(np.real(np.sum(rho_k * self._ball_hat)) * g.k_cell_volume / (2 * np.pi) ** (g.dim / 2))
        if self.volume is None:
            return g.integrate(rho)
        pts, w = self.volume
        return float(np.sum(w * multilinear(g, rho, pts, outside=0.0)))

    def outflow(self, J: np.ndarray) -> float:
        total = 0.0
        for nodes, w, nrm in self.surfaces:
            if w.size == 0:
                continue
            if self.spectral:
                jv = trigonometric(self.grid, J, nodes)
            else:
                jv = multilinear(self.grid, J, nodes, outside=0.0)
            total += float(np.sum(w * np.einsum("ij,ij->i", jv, nrm)))
        return total


@dataclass(frozen=True, eq=False)
class ContinuityResidual:
    times: np.ndarray
    residual: np.ndarray
    mass: np.ndarray
    outflow: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def continuity_series(times, masses, outflows) -> ContinuityResidual:
    """``r = dM/dt + outflow`` with central differences (non-uniform spacing allowed)."""
    t = np.asarray(times, dtype=float)
    M = np.asarray(masses, dtype=float)
    F = np.asarray(outflows, dtype=float)
    if t.size < 3:
        raise ValueError("continuity residual needs at least 3 frames")
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    dM = (h0**2 * M[2:] - h1**2 * M[:-2] + (h1**2 - h0**2) * M[1:-1]) / (h0 * h1 * (h0 + h1))
    return ContinuityResidual(t[1:-1], dM + F[1:-1], M, F)


def continuity_residual(frames: Iterable[WaveFunction], region, interpolation: str | None = None) -> ContinuityResidual:
    """``d/dt int_region rho + ∮ J.n`` at the interior frames.

    ``interpolation`` defaults to ``"spectral"`` for balls and ``"linear"``
    otherwise (see :class:`RegionProbe`).
    """
    if interpolation is None:
        interpolation = "spectral" if isinstance(region, Ball) else "linear"
    probe = None
    ts, ms, fs = [], [], []
    for psi in frames:
        if probe is None:
            probe = RegionProbe(psi.grid, region, interpolation)
        ts.append(psi.t)
        ms.append(probe.mass(np.abs(psi.values) ** 2))
        fs.append(probe.outflow(_current_values(psi)) if probe.surfaces else 0.0)
    return continuity_series(ts, ms, fs)


# distribution checks --------------------------------------------------------------


def marginal_cdf(grid: Grid, rho: np.ndarray, axis: int):
    """CDF of the per-axis marginal of a lattice density (uniform inside each cell)."""
    other = tuple(a for a in range(grid.dim) if a != axis)
    m = rho.sum(axis=other) if other else rho
    m = m / m.sum()
    edges = np.append(grid.x_axis - 0.5 * grid.dx, grid.x_axis[-1] + 0.5 * grid.dx)
    cum = np.concatenate([[0.0], np.cumsum(m)])
    return lambda x: np.interp(x, edges, cum)


def ks_critical(n: int, alpha: float = 0.01) -> float:
    return float(stats.kstwo.ppf(1 - alpha, n))


def ks_statistic(samples, cdf) -> float:
    return float(stats.kstest(np.asarray(samples), cdf).statistic)


def density_tracking(ensemble_positions: np.ndarray, psi: WaveFunction, alpha: float = 0.01):
    """Per-axis KS statistics of samples against ``|psi|^2``; returns ``(stats, critical)``."""
    rho = np.abs(psi.values) ** 2
    ks = [ks_statistic(ensemble_positions[:, ax], marginal_cdf(psi.grid, rho, ax)) for ax in range(psi.grid.dim)]
    return ks, ks_critical(ensemble_positions.shape[0], alpha)


def momentum_cone_mass(out: OutStateDensity, cone: ConeRegion) -> float:
    return out.cone_mass(cone)


def momentum_second_moment(out: OutStateDensity) -> float:
    g = out.density.grid
    return g.integrate_k(g.k2 * out.density.values)
