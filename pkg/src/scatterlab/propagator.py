"""Split-step Fourier evolution for ``H = -Laplacian/2 + V`` and derived fields."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from . import grid as _grid
from .errors import AliasingError, BoxSizeError
from .grid import Grid, ScalarField, VectorField, WaveFunction, spectral_gradient


@dataclass(frozen=True)
class GaussianSpec:
    """``psi_0(x) = (2 pi sigma^2)^(-d/4) exp(-|x-x0|^2/(4 sigma^2) + i k0.x)``.

    Position density has per-axis std ``sigma``; momentum density ``1/(2 sigma)``.
    """

    x0: Sequence[float]
    k0: Sequence[float]
    sigma: float

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        k0 = tuple(float(v) for v in np.atleast_1d(self.k0))
        if len(x0) != len(k0):
            raise ValueError("x0 and k0 must have the same dimension")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "k0", k0)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def sigma_k(self) -> float:
        return 0.5 / self.sigma

    @property
    def k_max(self) -> float:
        """Spectral support bound ``|k0| + 5 sigma_k``."""
        return float(np.linalg.norm(self.k0)) + 5 * self.sigma_k

    def sigma_x(self, t: float) -> float:
        """Per-axis position std of the free evolution at time ``t``."""
        return float(np.sqrt(self.sigma**2 + t**2 / (4 * self.sigma**2)))


@dataclass(frozen=True)
class Potential:
    """Bounded potential sampled on the grid.

    kinds: ``zero``, ``constant`` (value ``V0``) and ``gaussian_bump``
    ``V0 * exp(-|x - center|^2 / (2 w^2))``.
    """

    kind: str = "zero"
    V0: float = 0.0
    w: float = 1.0
    center: Sequence[float] | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "gaussian_bump"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian_bump" and not self.w > 0:
            raise ValueError("gaussian_bump width must be positive")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind != "gaussian_bump" and self.V0 == 0.0)

    def sample(self, grid: Grid) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.shape)
        if self.kind == "constant":
            return np.full(grid.shape, float(self.V0))
        c = self.center or (0.0,) * grid.dim
        r2 = sum((a - ci) ** 2 for a, ci in zip(grid.axes("x"), c))
        return self.V0 * np.exp(-r2 / (2 * self.w**2))


ZERO = Potential()


def _gaussian_values(grid: Grid, spec: GaussianSpec, t: float) -> np.ndarray:
    s2 = spec.sigma**2
    a = s2 + 0.5j * t
    out = np.ones(grid.shape, dtype=complex)
    for ax, x in enumerate(grid.axes("x")):
        x0, k0 = spec.x0[ax], spec.k0[ax]
        u = x - x0
        f = (
            (2 * np.pi * s2) ** -0.25
            * np.sqrt(s2 / a)
            * np.exp(-((u - k0 * t) ** 2) / (4 * a) + 1j * k0 * u - 0.5j * k0**2 * t + 1j * k0 * x0)
        )
        out = out * f
    return out


def _check_spec(grid: Grid, spec: GaussianSpec):
    if spec.dim != grid.dim:
        raise ValueError(f"GaussianSpec has dim {spec.dim}, grid has dim {grid.dim}")
    if not spec.k_max < grid.nyquist:
        raise AliasingError(
            f"|k0| + 5/(2 sigma) = {spec.k_max:.6g} must be below pi/dx = {grid.nyquist:.6g}"
        )
    h = 0.5 * grid.L
    for ax, c in enumerate(spec.x0):
        if c - 5 * spec.sigma < -h or c + 5 * spec.sigma > h:
            raise BoxSizeError(
                f"packet axis {ax}: x0 +/- 5 sigma = [{c - 5 * spec.sigma:.6g}, "
                f"{c + 5 * spec.sigma:.6g}] leaves the box [{-h:.6g}, {h:.6g}]"
            )


def init_gaussian(grid: Grid, spec: GaussianSpec) -> WaveFunction:
    """Sample ``spec`` on ``grid`` at t = 0 and normalise with the grid quadrature."""
    _check_spec(grid, spec)
    return WaveFunction(grid, 0.0, _gaussian_values(grid, spec, 0.0)).normalized()


def free_gaussian_exact(spec: GaussianSpec, t: float, grid: Grid) -> WaveFunction:
    """Closed-form free evolution of ``spec`` sampled on ``grid``.

    Uses the complex width ``a = sigma^2 + i t/2``; the centre moves as
    ``x0 + k0 t`` and the per-axis variance is ``sigma^2 + t^2/(4 sigma^2)``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    _check_spec(grid, spec)
    return WaveFunction(grid, float(t), _gaussian_values(grid, spec, float(t))).normalized()


def evolve(psi: WaveFunction, V: Potential | None, dt: float, steps: int) -> WaveFunction:
    """Strang split-step propagation by ``steps`` steps of size ``dt``.

    Each step applies ``exp(-iV dt/2) F^-1 exp(-i k^2 dt/2) F exp(-iV dt/2)``;
    inner half steps of consecutive steps are fused.  A negative ``dt`` runs
    the recurrence backwards.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0 or dt == 0:
        return WaveFunction(psi.grid, psi.t + steps * dt, psi.values)
    g = psi.grid
    axes = tuple(range(g.dim))
    workers = _grid._WORKERS
    if V is None or V.is_zero:
        # every split factor except the kinetic one is the identity
        phase = np.exp(-0.5j * (steps * dt) * g.k2)
        phi = sfft.ifftn(phase * sfft.fftn(psi.values, axes=axes, workers=workers), axes=axes, workers=workers)
        return WaveFunction(g, psi.t + steps * dt, phi)
    v = V.sample(g)
    half = np.exp(-0.5j * dt * v)
    full = half * half
    kin = np.exp(-0.5j * dt * g.k2)
    phi = psi.values * half
    for i in range(steps):
        phi = sfft.fftn(phi, axes=axes, workers=workers, overwrite_x=True)
        phi *= kin
        phi = sfft.ifftn(phi, axes=axes, workers=workers, overwrite_x=True)
        phi *= full if i < steps - 1 else half
    return WaveFunction(g, psi.t + steps * dt, phi)


def evolve_to(psi: WaveFunction, V: Potential | None, t: float, dt: float) -> WaveFunction:
    """Evolve to time ``t`` using steps no longer than ``dt`` (equal sub-steps)."""
    span = t - psi.t
    if span < 0:
        raise ValueError("evolve_to only runs forward")
    if span == 0:
        return psi
    steps = max(1, int(np.ceil(span / dt - 1e-9)))
    out = evolve(psi, V, span / steps, steps)
    return WaveFunction(out.grid, float(t), out.values)


# observables --------------------------------------------------------------


def density(psi: WaveFunction) -> ScalarField:
    return ScalarField(psi.grid, psi.t, np.abs(psi.values) ** 2)


def current(psi: WaveFunction, grad: np.ndarray | None = None) -> VectorField:
    """``J = Im(conj(psi) grad psi)`` with the spectral gradient."""
    if grad is None:
        grad = spectral_gradient(psi.grid, psi.values)
    return VectorField(psi.grid, psi.t, np.imag(np.conj(psi.values) * grad))


def momentum_density(psi: WaveFunction) -> ScalarField:
    """``|psi_hat(k)|^2`` in FFT order; integrates to 1 with ``(2 pi/L)^dim``."""
    return ScalarField(psi.grid, psi.t, np.abs(psi.transform()) ** 2, space="k")


@dataclass(frozen=True, eq=False)
class OutStateDensity:
    """Late-time momentum density with its two-horizon certificate."""

    density: ScalarField
    l1_distance: float | None
    tolerance: float
    mass: float

    @property
    def converged(self) -> bool | None:
        if self.l1_distance is None:
            return None
        return self.l1_distance <= self.tolerance

    def cone_mass(self, cone) -> float:
        g = self.density.grid
        mask = cone.contains_axes(g.axes("k"))
        return g.integrate_k(np.where(mask, self.density.values, 0.0))


def momentum_l1(a: ScalarField, b: ScalarField) -> float:
    return a.grid.integrate_k(np.abs(a.values - b.values))


def out_state_density(psi_T: WaveFunction, psi_half: WaveFunction | None = None, tol: float = 0.01) -> OutStateDensity:
    """Estimate ``|psi_out_hat|^2`` as the momentum density at the horizon.

    ``exp(iTH0)`` is a pure k-space phase, so the modulus of the outgoing
    state's transform equals ``|psi_hat_T|``.  ``psi_half`` (the frame at
    ``T/2``) supplies the L1 convergence metric.
    """
    rho_k = momentum_density(psi_T)
    l1 = None if psi_half is None else momentum_l1(rho_k, momentum_density(psi_half))
    return OutStateDensity(rho_k, l1, tol, rho_k.integrate())


def _qp_components(psi: WaveFunction, t: float, psi_k: np.ndarray | None = None):
    """Components of ``(P - Q/t) psi`` (P via transform, Q nodewise)."""
    g = psi.grid
    grad = spectral_gradient(g, psi.values, psi_k)
    return [-1j * grad[ax] - x * psi.values / t for ax, x in enumerate(g.axes("x"))]


def h2_diagnostic(psi: WaveFunction, t: float | None = None) -> float:
    """``||(P - Q/t) psi_t||_{L^2}``."""
    t = psi.t if t is None else t
    if not t > 0:
        raise ValueError("h2_diagnostic needs t > 0")
    g = psi.grid
    return float(np.sqrt(sum(g.integrate(np.abs(c) ** 2) for c in _qp_components(psi, t))))


def h1_norm(grid: Grid, values: np.ndarray) -> float:
    """Sobolev norm with weight ``1 + |k|^2`` computed spectrally."""
    vk = grid.fft(values)
    return float(np.sqrt(grid.integrate_k((1 + grid.k2) * np.abs(vk) ** 2)))


def h5_diagnostic(psi: WaveFunction, t: float | None, cone, R: float, *, collar: str = "tube",
                  width: float | None = None, theta: np.ndarray | float | None = None) -> float:
    """``||theta(Q) psi||_{H^1} * ||(P - Q/t) psi||_{H^1}``.

    ``theta`` defaults to the smooth collar of the lateral boundary outside
    radius ``R`` (see :func:`scatterlab.cones.collar_function`); pass
    ``theta=1.0`` to use the constant function.
    """
    from .cones import collar_function

    t = psi.t if t is None else t
    if not t > 0:
        raise ValueError("h5_diagnostic needs t > 0")
    g = psi.grid
    if theta is None:
        theta = collar_function(cone, R, g.axes("x"), kind=collar, width=width)
    first = h1_norm(g, theta * psi.values)
    second = float(np.sqrt(sum(h1_norm(g, c) ** 2 for c in _qp_components(psi, t))))
    return first * second


def energy(psi: WaveFunction, V: Potential | None = None) -> float:
    """``<psi, H psi>`` with the kinetic part evaluated in k-space."""
    g = psi.grid
    kin = 0.5 * g.integrate_k(g.k2 * np.abs(psi.transform()) ** 2)
    if V is None or V.kind == "zero":
        return kin
    return kin + g.integrate(V.sample(g) * np.abs(psi.values) ** 2)


def decay_exponent(times, values) -> float:
    """Slope of the least-squares line through ``(log t, log value)``."""
    lt = np.log(np.asarray(times, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(lt, lv, 1)[0])
