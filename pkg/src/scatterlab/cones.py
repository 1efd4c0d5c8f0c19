"""Open cones, their truncations ``D = C ∩ {|x| > R}`` and boundary crossings.

Every cone is stored as ``{x != 0 : angle(x, axis) < half_angle}``; in 1D
that is a half-line (``half_angle = pi/2``), in 2D an angular sector and in
3D a circular cone.  ``full`` cones cover all of space except the apex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CAP, LATERAL = 0, 1
PIECE_NAMES = {CAP: "cap", LATERAL: "lateral"}

TANGENT_DISC = 1e-18
CORNER_TOL = 1e-9


@dataclass(frozen=True)
class ConeRegion:
    axis: tuple
    half_angle: float
    full: bool = False
    name: str = ""

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float).ravel()
        if ax.size not in (1, 2, 3):
            raise ValueError("cone axis must have 1, 2 or 3 components")
        nrm = np.linalg.norm(ax)
        if nrm == 0:
            raise ValueError("cone axis must be non-zero")
        ax = ax / nrm
        if abs(np.linalg.norm(ax) - 1) > 1e-12:
            raise ValueError("axis normalisation failed")
        object.__setattr__(self, "axis", tuple(float(v) for v in ax))
        if not self.full and not 0 < self.half_angle < np.pi:
            raise ValueError(f"half angle must lie in (0, pi), got {self.half_angle}")
        if ax.size == 1 and not self.full and abs(self.half_angle - np.pi / 2) > 1e-15:
            object.__setattr__(self, "half_angle", np.pi / 2)

    # constructors ---------------------------------------------------------
    @classmethod
    def half_line(cls, sign: int = 1, name: str = "") -> "ConeRegion":
        return cls((1.0 if sign > 0 else -1.0,), np.pi / 2, name=name or ("x>0" if sign > 0 else "x<0"))

    @classmethod
    def sector(cls, deg1: float, deg2: float, name: str = "") -> "ConeRegion":
        """2D sector of angles ``(deg1, deg2)`` measured from +x, in degrees."""
        if not deg2 > deg1:
            raise ValueError("sector needs deg2 > deg1")
        if deg2 - deg1 >= 360:
            raise ValueError("sector must be narrower than the full circle")
        c = np.deg2rad(0.5 * (deg1 + deg2))
        return cls((np.cos(c), np.sin(c)), np.deg2rad(0.5 * (deg2 - deg1)),
                   name=name or f"sector[{deg1:g},{deg2:g}]")

    @classmethod
    def circular(cls, axis: Sequence[float], half_angle_deg: float, name: str = "") -> "ConeRegion":
        return cls(tuple(axis), np.deg2rad(half_angle_deg), name=name or f"cone{half_angle_deg:g}")

    @classmethod
    def full_space(cls, dim: int) -> "ConeRegion":
        ax = (1.0,) + (0.0,) * (dim - 1)
        return cls(ax, np.pi, full=True, name="full")

    @property
    def dim(self) -> int:
        return len(self.axis)

    @property
    def cos_alpha(self) -> float:
        return float(np.cos(self.half_angle))

    def label(self) -> str:
        return self.name or f"cone(axis={self.axis}, alpha={np.rad2deg(self.half_angle):g}deg)"

    # membership -----------------------------------------------------------
    def contains(self, x) -> np.ndarray:
        """Strict membership for points of shape ``(..., dim)``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.full:
            return r > 0
        proj = x @ np.asarray(self.axis)
        return (r > 0) & (proj > r * self.cos_alpha)

    def contains_axes(self, axes) -> np.ndarray:
        """Membership on a lattice given as open broadcastable axes.

        For the full-space cone the origin node is kept: its cell lies in
        ``C`` up to a null set, so lattice masses over ``C`` stay normalised.
        """
        r = np.sqrt(sum(a * a for a in axes))
        if self.full:
            return np.ones(r.shape, dtype=bool)
        proj = sum(a * w for a, w in zip(axes, self.axis))
        return (r > 0) & (proj > r * self.cos_alpha)

    def angle(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        c = np.divide(x @ np.asarray(self.axis), r, out=np.ones_like(r), where=r > 0)
        return np.arccos(np.clip(c, -1.0, 1.0))

    def _basis(self):
        """Orthonormal vectors completing the axis (3D only)."""
        w = np.asarray(self.axis)
        helper = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = helper - (helper @ w) * w
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(w, e1)
        return e1, e2

    def _rays(self):
        """2D boundary rays as ``(direction, exterior normal)`` pairs."""
        c = np.arctan2(self.axis[1], self.axis[0])
        out = []
        for sgn in (+1, -1):
            th = c + sgn * self.half_angle
            u = np.array([np.cos(th), np.sin(th)])
            n = sgn * np.array([-np.sin(th), np.cos(th)])
            out.append((u, n))
        return out


def cone_contains(cone: ConeRegion, x) -> np.ndarray:
    return cone.contains(x)


def region_contains(cone: ConeRegion, R: float, x) -> np.ndarray:
    """Membership of ``D = C ∩ {|x| > R}`` (strict on both constraints)."""
    x = np.asarray(x, dtype=float)
    return cone.contains(x) & (np.linalg.norm(x, axis=-1) > R)


# crossings ---------------------------------------------------------------


@dataclass(frozen=True)
class CrossingEvent:
    t_event: float
    point: np.ndarray = field(repr=False)
    piece: str
    sign: int


@dataclass
class CrossingBatch:
    """Signed crossings of many segments; arrays are aligned per event."""

    segment: np.ndarray
    s: np.ndarray
    piece: np.ndarray
    sign: np.ndarray
    points: np.ndarray
    tangent_drops: int = 0
    corners: int = 0
    unresolved: int = 0


def _sphere_roots(a, d, A, R):
    p = np.einsum("ij,ij->i", a, d) / A
    q = (np.einsum("ij,ij->i", a, a) - R * R) / A
    disc = p * p - q
    ok = disc >= TANGENT_DISC
    sq = np.sqrt(np.where(ok, disc, 0.0))
    tangent = (disc >= 0) & ~ok
    r1 = np.where(ok, -p - sq, np.nan)
    r2 = np.where(ok, -p + sq, np.nan)
    return [r1, r2], tangent


def _lateral_roots(cone: ConeRegion, a, d, A):
    """Candidate parameters on the lateral surface ``angle = alpha`` (both nappes filtered later)."""
    m = a.shape[0]
    if cone.full or cone.dim == 1:
        return [], np.zeros(m, bool)
    if cone.dim == 2:
        roots = []
        for u, n in cone._rays():
            nd = d @ n
            na = a @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(np.abs(nd) > 1e-300, -na / nd, np.nan)
            pts = a + s[:, None] * d
            on_ray = pts @ u >= 0
            roots.append(np.where(on_ray, s, np.nan))
        return roots, np.zeros(m, bool)
    w = np.asarray(cone.axis)
    c = cone.cos_alpha
    if abs(c) < 1e-12:
        nd = d @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(nd) > 1e-300, -(a @ w) / nd, np.nan)
        return [s], np.zeros(m, bool)
    aw, dw = a @ w, d @ w
    c2 = c * c
    A3 = dw * dw - c2 * A
    B3 = 2 * (aw * dw - c2 * np.einsum("ij,ij->i", a, d))
    C3 = aw * aw - c2 * np.einsum("ij,ij->i", a, a)
    quad = np.abs(A3) > 1e-14 * A
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(quad, 0.5 * B3 / A3, 0.0)
        q = np.where(quad, C3 / A3, 0.0)
        disc = p * p - q
        ok = quad & (disc >= TANGENT_DISC)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        r1 = np.where(ok, -p - sq, np.nan)
        r2 = np.where(ok, -p + sq, np.nan)
        lin = ~quad & (np.abs(B3) > 1e-300)
        r3 = np.where(lin, -C3 / B3, np.nan)
    tangent = quad & (disc >= 0) & ~ok
    # keep only the nappe on the axis side of cos(alpha)
    out = []
    for s in (r1, r2, r3):
        pts = a + s[:, None] * d
        good = (pts @ w) * c >= 0
        out.append(np.where(good, s, np.nan))
    return out, tangent


def _surface_distances(cone: ConeRegion, R: float, pts):
    r = np.linalg.norm(pts, axis=-1)
    d_sphere = np.abs(r - R)
    if cone.full or cone.dim == 1:
        return d_sphere, np.full_like(r, np.inf)
    ang = cone.angle(pts)
    d_cone = r * np.sin(np.minimum(np.abs(ang - cone.half_angle), np.pi / 2))
    return d_sphere, d_cone


def classify_segments(cone: ConeRegion, R: float, a, b) -> CrossingBatch:
    """Vectorised crossing classification for segments ``a[i] -> b[i]``.

    Candidate roots on the sphere (inside the closed cone) and on the
    lateral surface (outside the open ball) are ordered along each segment,
    and each candidate is signed by the change of ``D``-membership between
    the neighbouring sub-intervals.  The signs therefore telescope exactly
    to ``chi_D(b) - chi_D(a)`` for every segment.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    A = np.einsum("ij,ij->i", d, d)
    m = a.shape[0]
    moving = A > 0
    Asafe = np.where(moving, A, 1.0)

    sph, tan_s = _sphere_roots(a, d, Asafe, R)
    lat, tan_l = _lateral_roots(cone, a, d, Asafe)

    cols, kinds = [], []
    for s in sph:
        pts = a + s[:, None] * d
        r = np.linalg.norm(pts, axis=-1)
        if cone.full:
            inside = np.ones(m, bool)
        else:
            proj = pts @ np.asarray(cone.axis)
            inside = proj >= r * cone.cos_alpha - 1e-12 * R
        cols.append(np.where(inside, s, np.nan))
        kinds.append(CAP)
    for s in lat:
        pts = a + s[:, None] * d
        r = np.linalg.norm(pts, axis=-1)
        cols.append(np.where(r >= R * (1 - 1e-12), s, np.nan))
        kinds.append(LATERAL)

    S = np.stack(cols, axis=1) if cols else np.empty((m, 0))
    P = np.broadcast_to(np.array(kinds, dtype=np.int8), S.shape).copy()
    S[(S < 0) | (S > 1) | ~moving[:, None]] = np.nan

    tangent_drops = int(np.sum(tan_s & moving) + np.sum(tan_l & moving))

    order = np.argsort(S, axis=1)  # NaN sorts last
    S = np.take_along_axis(S, order, axis=1)
    P = np.take_along_axis(P, order, axis=1)

    # merge candidates closer than the corner tolerance
    length = np.sqrt(A)
    corners = 0
    K = S.shape[1]
    merged = np.zeros_like(S, dtype=bool)
    for j in range(1, K):
        close = np.isfinite(S[:, j]) & np.isfinite(S[:, j - 1]) & (
            (S[:, j] - S[:, j - 1]) * length <= CORNER_TOL * R
        )
        if np.any(close):
            corners += int(np.sum(close & (P[:, j] != P[:, j - 1])))
            S[close, j] = np.nan
            merged[close, j - 1] = True
    # re-sort after merging
    order = np.argsort(S, axis=1)
    S = np.take_along_axis(S, order, axis=1)
    P = np.take_along_axis(P, order, axis=1)
    merged = np.take_along_axis(merged, order, axis=1)

    chi_a = region_contains(cone, R, a)
    chi_b = region_contains(cone, R, b)
    valid = np.isfinite(S)
    nvalid = valid.sum(axis=1)

    seg_idx, s_out, piece_out, sign_out = [], [], [], []
    prev = chi_a.astype(np.int8)
    for j in range(K):
        vj = valid[:, j]
        if not np.any(vj):
            break
        if j + 1 < K:
            right = np.where(valid[:, j + 1], S[:, j + 1], 1.0)
        else:
            right = np.ones(m)
        mid = 0.5 * (np.where(vj, S[:, j], 0.0) + right)
        pts_mid = a + mid[:, None] * d
        cur = np.where(vj & (j + 1 < nvalid), region_contains(cone, R, pts_mid), chi_b).astype(np.int8)
        cur = np.where(vj, cur, prev)
        sgn = (cur - prev).astype(np.int8)
        hit = vj & (sgn != 0)
        if np.any(hit):
            idx = np.nonzero(hit)[0]
            seg_idx.append(idx)
            s_out.append(S[idx, j])
            piece = P[idx, j].copy()
            mj = merged[idx, j]
            if np.any(mj):
                pts = a[idx[mj]] + S[idx[mj], j][:, None] * d[idx[mj]]
                ds, dc = _surface_distances(cone, R, pts)
                piece[mj] = np.where(dc < ds, LATERAL, CAP)
            piece_out.append(piece)
            sign_out.append(sgn[idx])
        prev = cur

    # membership changed but no root was found: locate it by bisection
    lost = (nvalid == 0) & (chi_a != chi_b) & moving
    unresolved = int(np.sum(lost))
    if unresolved:
        idx = np.nonzero(lost)[0]
        lo, hi = np.zeros(idx.size), np.ones(idx.size)
        ca = chi_a[idx]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            cm = region_contains(cone, R, a[idx] + mid[:, None] * d[idx])
            same = cm == ca
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        s = 0.5 * (lo + hi)
        pts = a[idx] + s[:, None] * d[idx]
        ds, dc = _surface_distances(cone, R, pts)
        seg_idx.append(idx)
        s_out.append(s)
        piece_out.append(np.where(dc < ds, LATERAL, CAP).astype(np.int8))
        sign_out.append((chi_b[idx].astype(np.int8) - ca.astype(np.int8)))

    if seg_idx:
        seg = np.concatenate(seg_idx)
        s = np.concatenate(s_out)
        piece = np.concatenate(piece_out).astype(np.int8)
        sign = np.concatenate(sign_out).astype(np.int8)
        order = np.lexsort((s, seg))
        seg, s, piece, sign = seg[order], s[order], piece[order], sign[order]
    else:
        seg = np.empty(0, dtype=np.intp)
        s = np.empty(0)
        piece = np.empty(0, dtype=np.int8)
        sign = np.empty(0, dtype=np.int8)
    points = a[seg] + s[:, None] * d[seg]
    return CrossingBatch(seg, s, piece, sign, points, tangent_drops, corners, unresolved)


def classify_segment(cone: ConeRegion, R: float, a, b, t_a: float = 0.0, t_b: float = 1.0) -> list[CrossingEvent]:
    """Signed crossings of ``[a, b]`` with the boundary of ``C ∩ {|x| > R}``.

    Event times are interpolated linearly between ``t_a`` and ``t_b``.  A
    degenerate segment (``a == b``) has no events.
    """
    batch = classify_segments(cone, R, np.asarray(a, float)[None], np.asarray(b, float)[None])
    return [
        CrossingEvent(t_a + s * (t_b - t_a), p, PIECE_NAMES[int(k)], int(sg))
        for s, p, k, sg in zip(batch.s, batch.points, batch.piece, batch.sign)
    ]


# quadratures ---------------------------------------------------------------


def _gauss_panels(lo: float, hi: float, m: int, per_panel: int = 4):
    """Composite Gauss-Legendre rule with about ``m`` nodes on ``[lo, hi]``."""
    panels = max(1, int(np.ceil(m / per_panel)))
    xg, wg = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def cap_quadrature(cone: ConeRegion, R: float, m: int):
    """Nodes, weights and outward (radial) unit normals on ``C ∩ S_R``."""
    if m < 8:
        raise ValueError("cap quadrature needs m >= 8")
    dim = cone.dim
    if dim == 1:
        if cone.full:
            nodes = np.array([[R], [-R]])
            return nodes, np.ones(2), np.sign(nodes)
        w = np.asarray(cone.axis)
        return (R * w)[None, :], np.ones(1), w[None, :].copy()
    if dim == 2:
        c = np.arctan2(cone.axis[1], cone.axis[0])
        if cone.full:
            th = c + 2 * np.pi * np.arange(m) / m
            wts = np.full(m, R * 2 * np.pi / m)
        else:
            a = cone.half_angle
            th = c + a * (2 * np.arange(m) + 1 - m) / m
            wts = np.full(m, R * 2 * a / m)
        normals = np.stack([np.cos(th), np.sin(th)], axis=1)
        return R * normals, wts, normals
    w = np.asarray(cone.axis)
    e1, e2 = cone._basis()
    lo = -1.0 if cone.full else cone.cos_alpha
    xg, wg = np.polynomial.legendre.leggauss(m)
    mu = 0.5 * (1 - lo) * xg + 0.5 * (1 + lo)
    wmu = 0.5 * (1 - lo) * wg
    nphi = 2 * m
    phi = 2 * np.pi * np.arange(nphi) / nphi
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    W = np.broadcast_to(wmu[:, None] * (2 * np.pi / nphi), MU.shape)
    st = np.sqrt(np.clip(1 - MU**2, 0, None))
    normals = (MU[..., None] * w + st[..., None] * (np.cos(PHI)[..., None] * e1 + np.sin(PHI)[..., None] * e2))
    normals = normals.reshape(-1, 3)
    return R * normals, R * R * W.ravel(), normals


def lateral_quadrature(cone: ConeRegion, R: float, R_outer: float, m: int):
    """Quadrature on ``∂C ∩ {R <= |x| <= R_outer}`` with normals exterior to C."""
    if not R_outer > R:
        raise ValueError("R_outer must exceed R")
    dim = cone.dim
    if cone.full or dim == 1:
        return np.empty((0, dim)), np.empty(0), np.empty((0, dim))
    r, wr = _gauss_panels(R, R_outer, m)
    if dim == 2:
        nodes, wts, normals = [], [], []
        for u, n in cone._rays():
            nodes.append(r[:, None] * u)
            wts.append(wr)
            normals.append(np.broadcast_to(n, (r.size, 2)))
        return np.concatenate(nodes), np.concatenate(wts), np.concatenate(normals).copy()
    w = np.asarray(cone.axis)
    e1, e2 = cone._basis()
    a = cone.half_angle
    nphi = max(16, m)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    e = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    gen = np.cos(a) * w + np.sin(a) * e            # unit generators
    nrm = -np.sin(a) * w + np.cos(a) * e           # exterior normals
    nodes = (r[:, None, None] * gen[None, :, :]).reshape(-1, 3)
    wts = (wr[:, None] * r[:, None] * np.sin(a) * (2 * np.pi / nphi) * np.ones(nphi)[None, :]).ravel()
    normals = np.broadcast_to(nrm[None, :, :], (r.size, nphi, 3)).reshape(-1, 3).copy()
    return nodes, wts, normals


def ball_quadrature(dim: int, R: float, m: int):
    """Interior quadrature for the ball of radius ``R`` (polar Gauss rule)."""
    if dim == 1:
        x, w = _gauss_panels(-R, R, m)
        return x[:, None], w
    r, wr = _gauss_panels(0.0, R, m)
    if dim == 2:
        nth = max(16, 2 * m)
        th = 2 * np.pi * np.arange(nth) / nth
        pts = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], axis=-1).reshape(-1, 2)
        wts = (wr[:, None] * r[:, None] * (2 * np.pi / nth) * np.ones(nth)).ravel()
        return pts, wts
    full = ConeRegion.full_space(3)
    dirs, dw, _ = cap_quadrature(full, 1.0, max(8, m // 2))
    pts = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    wts = (wr[:, None] * r[:, None] ** 2 * dw[None, :]).ravel()
    return pts, wts


# collar --------------------------------------------------------------------


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


def collar_function(cone: ConeRegion, R: float, axes, *, kind: str = "tube", width: float | None = None):
    """Smooth ``C^2`` cut-off equal to 1 near the lateral boundary outside ``R``.

    ``kind="tube"``: 1 within Euclidean distance ``width`` (default 1.0) of
    the lateral surface, 0 beyond ``2*width``.  ``kind="angular"``: the same
    in angular distance (default 0.1 rad).  A radial factor switches the
    collar on between ``R - 2w`` and ``R - w`` (``w`` measured in length).
    """
    r = np.sqrt(sum(a * a for a in axes))
    if cone.full or cone.dim == 1:
        return np.zeros(np.broadcast(*axes).shape)
    proj = sum(a * w for a, w in zip(axes, cone.axis))
    with np.errstate(invalid="ignore", divide="ignore"):
        cosb = np.where(r > 0, proj / np.where(r > 0, r, 1.0), 1.0)
    beta = np.arccos(np.clip(cosb, -1, 1))
    gap = np.abs(beta - cone.half_angle)
    if kind == "tube":
        width = 1.0 if width is None else width
        dist = np.where(gap < np.pi / 2, r * np.sin(np.minimum(gap, np.pi / 2)), r)
        radial_w = width
    elif kind == "angular":
        width = 0.1 if width is None else width
        dist = gap
        radial_w = width * max(R, 1.0)
    else:
        raise ValueError(f"unknown collar kind {kind!r}")
    ang = 1.0 - _smoothstep((dist - width) / width)
    start = max(R - 2 * radial_w, 0.0)
    rad = _smoothstep((r - start) / max(R - radial_w - start, 1e-12)) if R > 0 else 1.0
    return np.clip(ang * rad, 0.0, 1.0)
