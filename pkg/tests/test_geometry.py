import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from escapekit.errors import DomainError, NumericError
from escapekit.geometry import (
    IDENTITY_MAP,
    ConformalMap,
    Disk,
    HalfPlane,
    Polyline,
    _brute_distance,
    hausdorff_distance,
    hyperbolic_distance_halfplane,
    hyperbolic_distance_via_map,
    point_to_polyline_distance,
    points_to_segments_distance,
    segment_circle_crossing,
)


def geodesic_length_real_segment(a, b):
    """Oracle: integrate the density |dz| / Re z along the real segment [a, b]."""
    val, _ = quad(lambda x: 1.0 / x, a, b, epsabs=1e-14, epsrel=1e-14)
    return val


def geodesic_length_vertical_line(a, b):
    # horizontal segment at fixed height, still a geodesic
    val, _ = quad(lambda t: abs(b - a) / (a + t * (b - a)).real, 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    return val


# hyperbolic distance ------------------------------------------------------------


def test_distance_identity():
    assert hyperbolic_distance_halfplane(1, 1) == 0.0


def test_distance_real_segment_matches_integration():
    expected = geodesic_length_real_segment(1.0, 2.0)
    assert hyperbolic_distance_halfplane(1, 2) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.6931, abs=1e-4)


def test_distance_vertical_translation_invariant():
    expected = geodesic_length_vertical_line(1 + 5j, 2 + 5j)
    assert hyperbolic_distance_halfplane(1 + 5j, 2 + 5j) == pytest.approx(expected, abs=1e-12)


def test_distance_shifted_halfplane():
    assert hyperbolic_distance_halfplane(4, 5, HalfPlane(3.0)) == pytest.approx(math.log(2), abs=1e-12)


def test_distance_outside_halfplane_raises():
    with pytest.raises(DomainError):
        hyperbolic_distance_halfplane(-1, 2)
    with pytest.raises(DomainError):
        hyperbolic_distance_halfplane(1, 2, HalfPlane(1.5))


def test_distance_via_identity_map():
    assert hyperbolic_distance_via_map(1, 2, IDENTITY_MAP) == pytest.approx(math.log(2), abs=1e-12)


def test_distance_via_translation_newton():
    # no inverse supplied: the preimage is solved numerically
    shift = ConformalMap(forward=lambda z: z + 10)
    direct = hyperbolic_distance_halfplane(11 - 10, 12 - 10)
    assert hyperbolic_distance_via_map(11, 12, shift) == pytest.approx(direct, abs=1e-10)
    assert direct == pytest.approx(math.log(2), abs=1e-12)


def test_distance_via_map_coincident_points():
    square = ConformalMap(forward=lambda z: z * z)
    assert hyperbolic_distance_via_map(3 + 1j, 3 + 1j, square) == 0.0


def test_preimage_failure_reports_residual():
    flat = ConformalMap(forward=lambda z: 0 * z + 1.0)
    with pytest.raises(NumericError) as info:
        flat.preimage(5.0)
    assert info.value.residual == pytest.approx(4.0)


half_plane_points = st.builds(
    complex,
    st.floats(min_value=0.01, max_value=50.0),
    st.floats(min_value=-50.0, max_value=50.0),
)


@settings(max_examples=300, deadline=None)
@given(half_plane_points, half_plane_points, half_plane_points)
def test_triangle_inequality(a, b, c):
    ab = hyperbolic_distance_halfplane(a, b)
    bc = hyperbolic_distance_halfplane(b, c)
    ac = hyperbolic_distance_halfplane(a, c)
    assert ac <= ab + bc + 1e-9


@settings(max_examples=300, deadline=None)
@given(
    st.builds(complex, st.floats(min_value=1.01, max_value=50.0), st.floats(min_value=-50, max_value=50)),
    st.builds(complex, st.floats(min_value=1.01, max_value=50.0), st.floats(min_value=-50, max_value=50)),
)
def test_smaller_domain_gives_larger_distance(a, b):
    inner = hyperbolic_distance_halfplane(a, b, HalfPlane(1.0))
    outer = hyperbolic_distance_halfplane(a, b, HalfPlane(0.0))
    assert inner >= outer - 1e-9


# polylines and distances ------------------------------------------------------


def test_perpendicular_foot():
    c = Polyline(np.array([1 + 0j, 1 + 1j]), 1.0)
    assert point_to_polyline_distance(0, c) == pytest.approx(1.0)


def test_point_on_vertex():
    c = Polyline(np.array([0j, 2 + 1j, 4 + 0j]), 4.0)
    assert point_to_polyline_distance(2 + 1j, c) == 0.0


def brute_sampled_distance(p, pts, n=10_000):
    """Oracle: minimum over densely sampled curve points."""
    seg = np.diff(pts)
    lengths = np.abs(seg)
    s = np.linspace(0, lengths.sum(), n)
    cum = np.concatenate([[0], np.cumsum(lengths)])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.size - 1)
    samples = pts[i] + seg[i] * ((s - cum[i]) / lengths[i])
    return float(np.abs(samples - p).min()), lengths.sum() / (n - 1)


@pytest.mark.parametrize("seed", range(10))
def test_polyline_distance_against_sampling(seed):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.normal(size=30) + 1j * rng.normal(size=30))
    c = Polyline(pts, float(pts.real.max()))
    p = complex(*rng.normal(scale=4, size=2))
    exact = point_to_polyline_distance(p, c)
    sampled, spacing = brute_sampled_distance(p, pts)
    assert exact <= sampled + 1e-12
    assert sampled - exact <= spacing / 2 + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_accelerated_distance_matches_brute_force(seed):
    # large enough to take the k-d tree path
    rng = np.random.default_rng(100 + seed)
    n = 3000
    verts = np.cumsum(rng.normal(scale=0.2, size=n) + 1j * rng.normal(scale=0.2, size=n))
    pts = verts[rng.integers(0, n, 400)] + rng.normal(scale=2, size=400) + 1j * rng.normal(scale=2, size=400)
    fast = points_to_segments_distance(pts, verts)
    slow = _brute_distance(np.asarray(pts), verts, 4_000_000)
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)


def test_hausdorff_of_shifted_lines():
    a = Polyline(np.linspace(0, 10, 50) + 0j, 10.0)
    b = a.translated(0.5j)
    assert hausdorff_distance(a, b, 0.05) == pytest.approx(0.5)
    assert hausdorff_distance(a, a) == 0.0


def test_polyline_serialization_round_trip(tmp_path):
    c = Polyline(np.array([1 + 2j, 3 - 1j, 7.5 + 0.25j]), 7.5)
    assert Polyline.from_json(c.to_json()) == c
    assert Polyline.from_csv(c.to_csv(), 7.5) == c
    assert c.to_csv().splitlines()[0] == "re,im"
    data = json.loads(c.to_json())
    assert data["truncation_re"] == 7.5
    assert data["points"][0] == [1.0, 2.0]


def test_polyline_rejects_bad_input():
    with pytest.raises(ValueError):
        Polyline(np.array([1 + 0j]), 1.0)
    with pytest.raises(ValueError):
        Polyline(np.array([1 + 0j, complex("nan")]), 1.0)


def test_densify_respects_spacing():
    c = Polyline(np.array([0j, 10 + 0j, 10 + 3j]), 10.0)
    d = c.densified(0.1)
    assert np.abs(np.diff(d)).max() <= 0.1 + 1e-12
    assert d[0] == 0 and d[-1] == 10 + 3j


def test_disk_and_circle_crossing():
    disk = Disk(0j, 2.0)
    assert disk.contains(1.0)
    assert not disk.contains(2.0)
    x = segment_circle_crossing(0j, 5 + 0j, 0j, 2.0)
    assert x == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Disk(0j, 0.0)
