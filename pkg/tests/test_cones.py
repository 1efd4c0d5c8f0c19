import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from scatterlab import ConeRegion, cap_quadrature, classify_segment, lateral_quadrature, region_contains
from scatterlab.cones import ball_quadrature, classify_segments, collar_function, cone_contains

CONE3 = ConeRegion.circular([1.0, 0.0, 0.0], 30.0)
SECTOR = ConeRegion.sector(-30.0, 30.0)


def dense_oracle(cone, R, a, b, n=10_000):
    """Membership changes of D along ``n`` evenly spaced points of the segment."""
    s = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    inside = region_contains(cone, R, pts).astype(int)
    jumps = np.nonzero(np.diff(inside))[0]
    return s[jumps], np.diff(inside)[jumps]


# membership ----------------------------------------------------------------------------


def test_on_axis_point_outside_ball():
    assert region_contains(CONE3, 1.0, np.array([2.0, 0.0, 0.0]))


def test_sphere_is_excluded():
    assert not region_contains(CONE3, 2.0, np.array([2.0, 0.0, 0.0]))


def test_apex_excluded():
    assert not cone_contains(CONE3, np.zeros(3))
    assert not cone_contains(SECTOR, np.zeros(2))


@pytest.mark.parametrize("scale", [0.01, 1.0, 300.0])
def test_sector_angle_test(scale):
    assert not cone_contains(SECTOR, scale * np.array([1.0, 1.0]) / np.sqrt(2))
    assert cone_contains(SECTOR, scale * np.array([1.0, 0.2]))


def test_lateral_surface_is_excluded():
    x = np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)]) * 5
    assert not cone_contains(SECTOR, x)


def test_half_line_and_full_space():
    c = ConeRegion.half_line(-1)
    assert cone_contains(c, np.array([-0.5])) and not cone_contains(c, np.array([0.5]))
    full = ConeRegion.full_space(2)
    assert region_contains(full, 1.0, np.array([0.0, -3.0]))
    assert not region_contains(full, 1.0, np.array([0.5, 0.5]))


def test_cone_validation():
    with pytest.raises(ValueError):
        ConeRegion.circular([1.0, 0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        ConeRegion.circular([0.0, 0.0, 0.0], 30.0)


def test_axis_normalised():
    c = ConeRegion.circular([3.0, 4.0, 0.0], 20.0)
    assert abs(np.linalg.norm(c.axis) - 1) <= 1e-12


# crossings -------------------------------------------------------------------------------


def test_radial_exit_through_cap():
    ev = classify_segment(CONE3, 5.0, np.array([4.0, 0, 0]), np.array([6.0, 0, 0]), 1.0, 2.0)
    assert len(ev) == 1
    assert ev[0].piece == "cap" and ev[0].sign == +1
    assert ev[0].t_event == pytest.approx(1.5)


def test_radial_return_through_cap():
    ev = classify_segment(CONE3, 5.0, np.array([6.0, 0, 0]), np.array([4.0, 0, 0]))
    assert [(e.piece, e.sign) for e in ev] == [("cap", -1)]


def test_segment_inside_region_nets_zero():
    a, b = np.array([10.0, 1.0, 0.0]), np.array([12.0, -1.0, 0.5])
    ev = classify_segment(CONE3, 5.0, a, b)
    assert sum(e.sign for e in ev) == 0


def test_degenerate_segment():
    a = np.array([10.0, 1.0, 0.0])
    assert classify_segment(CONE3, 5.0, a, a.copy()) == []


def test_lateral_crossing_matches_dense_oracle():
    cone = ConeRegion.sector(-45.0, 45.0)
    a, b = np.array([2.0, 1.2]), np.array([2.0, 2.8])          # crosses y = x at (2, 2), outside R = 1
    ev = classify_segment(cone, 1.0, a, b)
    s, sg = dense_oracle(cone, 1.0, a, b)
    assert [(e.piece, e.sign) for e in ev] == [("lateral", -1)]
    assert sg.tolist() == [-1]
    np.testing.assert_allclose(ev[0].point, [2.0, 2.0], atol=1e-12)


def test_chord_through_ball_and_cone():
    # enters the cone through the lateral ray, dips into the ball, leaves it through the cap
    cone = ConeRegion.sector(-30.0, 30.0)
    a, b = np.array([5.0, 6.0]), np.array([5.0, -0.5])
    ev = classify_segment(cone, 5.5, a, b)
    s, sg = dense_oracle(cone, 5.5, a, b)
    assert [e.sign for e in ev] == sg.tolist()
    assert sum(e.sign for e in ev) == int(region_contains(cone, 5.5, b)) - int(region_contains(cone, 5.5, a))


def _check_event_geometry(cone, R, batch):
    r = np.linalg.norm(batch.points, axis=1)
    cap = batch.piece == 0
    assert np.all(np.abs(r[cap] - R) <= 1e-9 * R)
    ang = cone.angle(batch.points[~cap])
    assert np.all(np.abs(ang - cone.half_angle) <= 1e-9)
    assert np.all(r[~cap] >= R * (1 - 1e-12))


def _random_segments(rng, dim, n, R):
    a = rng.normal(scale=1.6 * R, size=(n, dim))
    b = a + rng.normal(scale=0.4 * R, size=(n, dim))
    return a, b


@pytest.mark.parametrize("cone", [SECTOR, CONE3, ConeRegion.circular([0.3, -0.2, 1.0], 70.0),
                                  ConeRegion.sector(10.0, 200.0)], ids=["sector", "cone30", "cone70", "wide"])
def test_events_agree_with_dense_oracle(cone):
    rng = np.random.default_rng(7)
    R = 2.0
    a, b = _random_segments(rng, cone.dim, 300, R)
    batch = classify_segments(cone, R, a, b)
    _check_event_geometry(cone, R, batch)
    checked = 0
    for i in range(a.shape[0]):
        m = batch.segment == i
        order = np.argsort(batch.s[m])
        s_ev, sg_ev = batch.s[m][order], batch.sign[m][order]
        if s_ev.size > 1 and np.min(np.diff(s_ev)) < 1e-3:
            continue                                # too close for a 10^4-point scan
        s_or, sg_or = dense_oracle(cone, R, a[i], b[i])
        assert sg_ev.tolist() == sg_or.tolist()
        assert np.all(np.abs(s_ev - s_or) <= 2e-4)
        checked += 1
    assert checked > 250


def _telescoping(cone, R, seed, n_lines=10_000, n_seg=12):
    rng = np.random.default_rng(seed)
    starts = rng.normal(scale=1.5 * R, size=(n_lines, 1, cone.dim))
    steps = rng.normal(scale=0.25 * R, size=(n_lines, n_seg, cone.dim))
    lines = np.concatenate([starts, starts + np.cumsum(steps, axis=1)], axis=1)
    a = lines[:, :-1].reshape(-1, cone.dim)
    b = lines[:, 1:].reshape(-1, cone.dim)
    batch = classify_segments(cone, R, a, b)
    net = np.zeros(n_lines, dtype=int)
    np.add.at(net, batch.segment // n_seg, batch.sign)
    want = region_contains(cone, R, lines[:, -1]).astype(int) - region_contains(cone, R, lines[:, 0]).astype(int)
    return net, want


@pytest.mark.parametrize("cone", [SECTOR, CONE3, ConeRegion.half_line(1), ConeRegion.full_space(3)],
                         ids=["sector", "cone", "half-line", "full"])
def test_telescoping_on_random_polylines(cone):
    net, want = _telescoping(cone, 3.0, 11)
    np.testing.assert_array_equal(net, want)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), half=st.floats(5.0, 170.0), R=st.floats(0.1, 20.0))
def test_telescoping_property(seed, half, R):
    cone = ConeRegion.circular([1.0, 0.5, -0.2], half)
    net, want = _telescoping(cone, R, seed, n_lines=200, n_seg=8)
    np.testing.assert_array_equal(net, want)


@settings(max_examples=50)
@given(x=st.lists(st.floats(-50, 50), min_size=2, max_size=2), y=st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_single_segment_telescopes(x, y):
    a, b = np.array(x), np.array(y)
    assume(np.linalg.norm(a - b) > 1e-6)
    ev = classify_segment(SECTOR, 4.0, a, b)
    assert sum(e.sign for e in ev) == int(region_contains(SECTOR, 4.0, b)) - int(region_contains(SECTOR, 4.0, a))


# quadratures --------------------------------------------------------------------------------


def test_cap_area_3d():
    _, w, _ = cap_quadrature(CONE3, 7.0, 16)
    want = 2 * np.pi * 49 * (1 - np.cos(np.pi / 6))
    assert abs(w.sum() - want) <= 1e-10 * want


def test_cap_arc_length_2d():
    _, w, _ = cap_quadrature(SECTOR, 7.0, 64)
    assert w.sum() == pytest.approx(7.0 * np.pi / 3, rel=1e-12)


def test_cap_normals_are_radial_units():
    nodes, w, n = cap_quadrature(CONE3, 3.0, 12)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(nodes, 3.0 * n, atol=1e-12)
    assert np.sum(w * np.sum(n * n, axis=1)) == pytest.approx(w.sum())


def test_cap_requires_resolution():
    with pytest.raises(ValueError):
        cap_quadrature(CONE3, 3.0, 4)


def test_lateral_area_3d():
    _, w, _ = lateral_quadrature(CONE3, 2.0, 9.0, 32)
    want = np.pi * np.sin(np.pi / 6) * (81 - 4)
    assert abs(w.sum() - want) <= 1e-10 * want


def test_lateral_length_2d():
    _, w, _ = lateral_quadrature(SECTOR, 2.0, 9.0, 32)
    assert w.sum() == pytest.approx(14.0, rel=1e-12)


@pytest.mark.parametrize("cone", [SECTOR, CONE3])
def test_lateral_normals_orthogonal_and_exterior(cone):
    nodes, _, n = lateral_quadrature(cone, 2.0, 9.0, 16)
    assert np.max(np.abs(np.sum(n * nodes, axis=1))) <= 1e-12
    assert not np.any(cone_contains(cone, nodes + 1e-3 * n))
    assert np.all(cone_contains(cone, nodes - 1e-3 * n))


def test_lateral_quadrature_needs_outer_radius():
    with pytest.raises(ValueError):
        lateral_quadrature(CONE3, 5.0, 5.0, 16)


@pytest.mark.parametrize("cone", [SECTOR, CONE3], ids=["2d", "3d"])
def test_cap_quadrature_convergence(cone):
    v = np.array([0.3, 0.9, -0.4])[:cone.dim]
    f = lambda x: np.exp(x @ v) * (1 + x[:, 0] ** 2)
    R = 1.5
    nodes, w, _ = cap_quadrature(cone, R, 512)
    ref = np.sum(w * f(nodes))
    errs = []
    for m in (8, 16, 32):
        nodes, w, _ = cap_quadrature(cone, R, m)
        errs.append(abs(np.sum(w * f(nodes)) - ref))
    errs = np.maximum(errs, 1e-300)
    orders = np.log2(errs[:-1] / errs[1:])
    # the arc rule is the midpoint rule (order 2 up to rounding of the estimate);
    # the 3d rule is Gauss x periodic trapezoid and reaches rounding level
    assert np.all((orders >= 1.95) | (errs[1:] <= 1e-13))


@pytest.mark.parametrize("dim,want", [(1, 6.0), (2, np.pi * 9), (3, 4 / 3 * np.pi * 27)])
def test_ball_quadrature_volume(dim, want):
    _, w = ball_quadrature(dim, 3.0, 16)
    assert w.sum() == pytest.approx(want, rel=1e-12)


def test_collar_profile():
    x = np.linspace(-30, 30, 241)
    axes = np.meshgrid(x, x, indexing="ij")
    th = collar_function(SECTOR, 5.0, axes)
    assert th.min() >= 0 and th.max() <= 1
    edge = 20 * np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    assert collar_function(SECTOR, 5.0, [np.array(edge[0]), np.array(edge[1])]) == pytest.approx(1.0)
    # inside the ball the collar is off
    assert collar_function(SECTOR, 5.0, [np.array(0.5), np.array(0.2)]) == 0.0
