import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab import AliasingError, BoxSizeError, ConeRegion, GaussianSpec, Grid, Potential, WaveFunction
from scatterlab.cones import collar_function
from scatterlab.grid import spectral_gradient
from scatterlab.propagator import (current, decay_exponent, density, energy, evolve, evolve_to, free_gaussian_exact,
                                   h1_norm, h2_diagnostic, h5_diagnostic, init_gaussian, momentum_density,
                                   out_state_density)

G1 = Grid(1, 1024, 200.0)
SPEC1 = GaussianSpec([0.0], [2.0], 1.0)
BUMP1 = Potential("gaussian_bump", V0=1.0, w=1.0, center=(8.0,))


def k_moments(psi, ax=0):
    g = psi.grid
    rho_k = momentum_density(psi).values
    k = g.axes("k")[ax]
    mean = g.integrate_k(k * rho_k)
    return mean, g.integrate_k((k - mean) ** 2 * rho_k)


def x_moments(psi, ax=0):
    g = psi.grid
    rho = density(psi).values
    x = g.axes("x")[ax]
    mean = g.integrate(x * rho)
    return mean, g.integrate((x - mean) ** 2 * rho)


# grid and initial state ------------------------------------------------------------


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        Grid(1, 1000, 10.0)


def test_origin_is_a_node():
    assert G1.x_axis[G1.n // 2] == 0.0
    assert G1.x_axis[0] == -100.0


def test_init_gaussian_normalised_and_centred():
    psi = init_gaussian(G1, GaussianSpec([0.0], [0.0], 1.0))
    assert abs(psi.norm() - 1) <= 1e-12
    mean, var = x_moments(psi)
    assert abs(mean) <= 1e-12
    assert abs(var - 1.0) <= 1e-8


def test_init_gaussian_mean_momentum():
    mean, var = k_moments(init_gaussian(G1, SPEC1))
    assert abs(mean - 2.0) <= 1e-8
    assert abs(var - 0.25) <= 1e-6


def test_aliasing_rejected():
    g = Grid(1, 64, 20.0)                      # Nyquist pi/dx ~ 10.05
    with pytest.raises(AliasingError, match="pi/dx"):
        init_gaussian(g, GaussianSpec([0.0], [9.0], 1.0))


def test_packet_outside_box_rejected():
    with pytest.raises(BoxSizeError):
        init_gaussian(G1, GaussianSpec([98.0], [0.0], 1.0))


def test_parseval():
    psi = evolve(init_gaussian(G1, SPEC1), BUMP1, 0.05, 20)
    assert abs(momentum_density(psi).integrate() - density(psi).integrate()) <= 1e-10


# free evolution -------------------------------------------------------------------


def test_free_exact_at_zero_matches_init():
    a = init_gaussian(G1, SPEC1).values
    b = free_gaussian_exact(SPEC1, 0.0, G1).values
    assert np.max(np.abs(a - b)) <= 1e-14


def test_free_exact_variance_at_t2():
    mean, var = x_moments(free_gaussian_exact(GaussianSpec([0.0], [0.0], 1.0), 2.0, G1))
    assert abs(var - 2.0) <= 1e-10
    assert SPEC1.sigma_x(2.0) ** 2 == pytest.approx(2.0)


def test_free_exact_centre_moves_with_k0():
    mean, _ = x_moments(free_gaussian_exact(SPEC1, 7.0, G1))
    assert abs(mean - 14.0) <= 1e-9


@pytest.mark.parametrize("t", [0.5, 3.0, 10.0])
def test_split_step_matches_closed_form_1d(t):
    psi = evolve(init_gaussian(G1, SPEC1), None, t / 50, 50)
    assert np.max(np.abs(psi.values - free_gaussian_exact(SPEC1, t, G1).values)) <= 1e-8


def test_split_step_matches_closed_form_2d():
    g = Grid(2, 128, 60.0)
    spec = GaussianSpec([-3.0, 1.0], [1.5, -0.5], 1.2)
    psi = evolve(init_gaussian(g, spec), None, 0.25, 16)
    assert np.max(np.abs(psi.values - free_gaussian_exact(spec, 4.0, g).values)) <= 1e-8


def test_free_momentum_density_is_time_independent():
    a = momentum_density(init_gaussian(G1, SPEC1)).values
    b = momentum_density(evolve(init_gaussian(G1, SPEC1), None, 0.1, 60)).values
    assert np.max(np.abs(a - b)) <= 1e-10


def test_out_state_free_equals_initial_momentum_density():
    psi0 = init_gaussian(G1, SPEC1)
    out = out_state_density(evolve(psi0, None, 0.1, 100), evolve(psi0, None, 0.1, 50))
    assert np.max(np.abs(out.density.values - momentum_density(psi0).values)) <= 1e-10
    assert abs(out.mass - 1) <= 1e-10
    assert out.converged


# split-step with a potential ---------------------------------------------------------


def test_reversibility():
    psi = init_gaussian(G1, SPEC1)
    back = evolve(evolve(psi, BUMP1, 0.05, 1), BUMP1, -0.05, 1)
    assert np.max(np.abs(back.values - psi.values)) <= 1e-10


def test_constant_potential_is_a_global_phase():
    psi = init_gaussian(G1, SPEC1)
    c = 0.7
    a = evolve(psi, Potential("constant", V0=c), 0.05, 40)
    b = evolve(psi, None, 0.05, 40)
    assert np.max(np.abs(a.values - b.values * np.exp(-1j * c * 2.0))) <= 1e-10
    assert np.max(np.abs(density(a).values - density(b).values)) <= 1e-10
    assert np.max(np.abs(current(a).values - current(b).values)) <= 1e-10


def test_energy_returns_after_clean_interaction():
    # the packet starts well clear of the bump and ends well clear of it, so
    # the O(dt^2) mid-interaction shift of the modified energy cancels
    spec = GaussianSpec([-15.0], [2.0], 1.0)
    V = Potential("gaussian_bump", V0=1.0, w=1.0, center=(0.0,))
    psi0 = init_gaussian(G1, spec)
    e0 = energy(psi0, V)
    psi = evolve_to(psi0, V, 16.0, 0.0015)
    assert abs(energy(psi, V) - e0) <= 1e-8
    assert abs(psi.norm() - 1) <= 1e-10


def test_evolve_to_stamps_exact_time():
    psi = evolve_to(init_gaussian(G1, SPEC1), None, 1.3, 0.4)
    assert psi.t == 1.3


@settings(max_examples=25)
@given(steps=st.integers(1, 30), dt=st.floats(0.001, 0.3), v0=st.floats(-2.0, 2.0))
def test_norm_preserved(steps, dt, v0):
    V = Potential("gaussian_bump", V0=v0, w=1.0, center=(3.0,))
    psi = evolve(init_gaussian(G1, SPEC1), V, dt, steps)
    assert abs(psi.norm() - 1) <= 1e-10


# observables ------------------------------------------------------------------------


def test_current_of_real_state_vanishes():
    psi = init_gaussian(G1, GaussianSpec([0.0], [0.0], 1.0))
    assert np.max(np.abs(current(psi).values)) <= 1e-12


def test_total_current_is_mean_momentum_2d():
    g = Grid(2, 128, 40.0)
    psi = init_gaussian(g, GaussianSpec([0.0, 0.0], [2.0, 0.0], 1.0))
    np.testing.assert_allclose(current(psi).integrate(), [2.0, 0.0], atol=1e-6)


def test_spectral_gradient_of_plane_wave():
    g = Grid(1, 64, 2 * np.pi * 4)
    k = 2 * np.pi * 3 / g.L
    f = np.exp(1j * k * g.x_axis)
    np.testing.assert_allclose(spectral_gradient(g, f)[0], 1j * k * f, atol=1e-12)


@settings(max_examples=20)
@given(theta=st.floats(-10.0, 10.0))
def test_gauge_invariance(theta):
    psi = evolve(init_gaussian(G1, SPEC1), BUMP1, 0.1, 10)
    phased = psi.with_phase(theta)
    assert np.max(np.abs(density(phased).values - density(psi).values)) <= 1e-12
    assert np.max(np.abs(current(phased).values - current(psi).values)) <= 1e-12
    assert np.max(np.abs(momentum_density(phased).values - momentum_density(psi).values)) <= 1e-12
    assert abs(h2_diagnostic(phased, 3.0) - h2_diagnostic(psi, 3.0)) <= 1e-12


# decay diagnostics -------------------------------------------------------------------


@pytest.mark.parametrize("t", [1.0, 2.0, 5.0, 10.0])
def test_h2_free_identity(t):
    spec = GaussianSpec([0.0], [0.0], 1.0)
    psi = evolve(init_gaussian(G1, spec), None, t, 1)
    # ||Q psi_0|| = sigma = 1 for a centred Gaussian
    assert abs(t * h2_diagnostic(psi, t) - 1.0) <= 1e-6


def test_h2_requires_positive_time():
    with pytest.raises(ValueError):
        h2_diagnostic(init_gaussian(G1, SPEC1), 0.0)


def test_h1_norm_dominates_l2():
    psi = init_gaussian(G1, SPEC1)
    # ||psi||_H1^2 = 1 + <k^2> = 1 + 4 + 0.25
    assert h1_norm(G1, psi.values) == pytest.approx(np.sqrt(5.25), abs=1e-10)


def test_h5_constant_collar_gives_h1_norm():
    g = Grid(2, 128, 60.0)
    psi = init_gaussian(g, GaussianSpec([0.0, 0.0], [2.0, 0.0], 1.0))
    cone = ConeRegion.sector(-30, 30)
    full = h5_diagnostic(psi, 1.0, cone, 5.0, theta=1.0)
    second = h5_diagnostic(psi, 1.0, cone, 5.0, theta=1.0) / h1_norm(g, psi.values)
    assert h1_norm(g, psi.values) >= 1.0
    assert full == pytest.approx(h1_norm(g, psi.values) * second)


def test_h5_collar_factor_vanishes_away_from_collar():
    g = Grid(2, 256, 160.0)
    psi = init_gaussian(g, GaussianSpec([40.0, 0.0], [0.0, 0.0], 1.0))
    cone = ConeRegion.sector(-30, 30)
    # on the axis at r = 40, 20 length units from either edge
    theta = collar_function(cone, 5.0, g.axes("x"))
    assert h1_norm(g, theta * psi.values) <= 1e-8
    assert h5_diagnostic(psi, 1.0, cone, 5.0) <= 1e-6


def test_h5_decay_on_cone_axis():
    g = Grid(2, 1024, 576.0)
    spec = GaussianSpec([0.0, 0.0], [2.0, 0.0], 1.0)
    cone = ConeRegion.sector(-30, 30)
    ts = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
    hs = [h5_diagnostic(free_gaussian_exact(spec, t, g), t, cone, 5.0) for t in ts]
    assert all(np.diff(hs) < 0)
    assert decay_exponent(ts, hs) <= -1.5


def test_decay_exponent_of_power_law():
    t = np.array([1.0, 2.0, 4.0, 8.0])
    assert decay_exponent(t, 3 * t**-1.7) == pytest.approx(-1.7)


def test_wavefunction_is_read_only():
    psi = init_gaussian(G1, SPEC1)
    with pytest.raises(ValueError):
        psi.values[0] = 1.0
    with pytest.raises(ValueError):
        WaveFunction(G1, 0.0, np.zeros(10))
