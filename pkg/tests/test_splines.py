import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saiga.splines import (DomainError, FaceId, GeometryError, KnotVector, NurbsVolume, basis_values,
                           box_volume, elevate_degree, face_normal, find_span, format_geometry,
                           h_refine, map_point, parse_geometry, quarter_cylinder_part,
                           uniform_split_knots)


def cox_de_boor(U, p, i, u):
    """Textbook recursion, right end included in the last span."""
    if p == 0:
        if U[i] <= u < U[i + 1]:
            return 1.0
        last = u == U[-1] and U[i] < U[i + 1] and U[i + 1] == U[-1]
        return 1.0 if last else 0.0
    a = 0.0 if U[i + p] == U[i] else (u - U[i]) / (U[i + p] - U[i]) * cox_de_boor(U, p - 1, i, u)
    b = 0.0 if U[i + p + 1] == U[i + 1] else \
        (U[i + p + 1] - u) / (U[i + p + 1] - U[i + 1]) * cox_de_boor(U, p - 1, i + 1, u)
    return a + b


KV_CASES = [
    ([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2),
    ([0, 0, 0, 0, 0.3, 0.3, 0.7, 1, 1, 1, 1], 3),
    ([0, 0, 1, 2, 3, 3], 1),
    ([0, 0, 0, 0.2, 0.45, 0.9, 1, 1, 1], 2),
]


@pytest.mark.parametrize("U,p", KV_CASES)
def test_basis_matches_cox_de_boor(U, p):
    kv = KnotVector(U, p)
    for u in np.linspace(U[0], U[-1], 37):
        span = find_span(kv, u)
        vals = basis_values(kv, u)[0]
        ref = [cox_de_boor(U, p, i, u) for i in range(span - p, span + 1)]
        np.testing.assert_allclose(vals, ref, atol=1e-14)


@pytest.mark.parametrize("U,p", KV_CASES)
def test_basis_derivatives_match_finite_differences(U, p):
    kv = KnotVector(U, p)
    h = 1e-6
    for u in np.linspace(U[0], U[-1], 23)[1:-1]:
        span = find_span(kv, u)
        if find_span(kv, u - h) != span or find_span(kv, u + h) != span:
            continue
        d = basis_values(kv, u, 1)[1]
        fd = (basis_values(kv, u + h)[0] - basis_values(kv, u - h)[0]) / (2 * h)
        np.testing.assert_allclose(d, fd, atol=1e-6 * max(1.0, np.abs(d).max()))


def test_quadratic_midpoint_values():
    kv = KnotVector([0, 0, 0, 1, 2, 3, 3, 3], 2)
    np.testing.assert_allclose(basis_values(kv, 1.5)[0], [0.125, 0.75, 0.125], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=0, max_size=6), st.integers(1, 4),
       st.floats(0.0, 1.0))
def test_partition_of_unity_and_nonnegativity(inner, p, u):
    U = np.concatenate([np.zeros(p + 1), np.sort(inner), np.ones(p + 1)])
    # interior multiplicity at most p
    vals, counts = np.unique(np.sort(inner), return_counts=True)
    if np.any(counts > p):
        return
    kv = KnotVector(U, p)
    N = basis_values(kv, u, 1)
    assert abs(N[0].sum() - 1.0) < 1e-13
    assert np.all(N[0] >= -1e-15)
    assert abs(N[1].sum()) < 1e-9 * max(1.0, np.abs(N[1]).max())


def test_knot_validation():
    with pytest.raises(ValueError):
        KnotVector([0, 0, 0.5, 0.4, 1, 1], 1)
    with pytest.raises(ValueError):
        KnotVector([0, 0.1, 0.5, 1, 1], 1)
    with pytest.raises(ValueError):
        KnotVector([0, 0, 0, 0, 1, 1, 1], 2)     # end multiplicity 4 > p + 1
    with pytest.raises(ValueError):
        KnotVector([0, 1], 1)


def test_find_span_domain():
    kv = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    assert find_span(kv, 0.0) == 2
    assert find_span(kv, 0.5) == 3
    assert find_span(kv, 1.0) == 3
    with pytest.raises(DomainError):
        find_span(kv, 1.01)
    with pytest.raises(DomainError):
        find_span(kv, -0.2)


def test_greville():
    kv = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)
    np.testing.assert_allclose(kv.greville(), [0, 0.25, 0.5, 0.75, 1.0])


def test_arc_is_exact_circle(part, rng):
    xi = np.column_stack([rng.random(1000), np.zeros(1000), rng.random(1000)])
    x, *_ = part.evaluate(xi)
    r = np.hypot(x[:, 0] - 2e-3, x[:, 1])
    assert np.max(np.abs(r - 1e-3)) / 1e-3 < 1e-12


def test_corners_and_normals(part):
    x, J, detJ = map_point(part, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(x, [1e-3, 0, 0], atol=1e-18)
    x, *_ = map_point(part, [1.0, 0.0, 1.0])
    np.testing.assert_allclose(x, [2e-3, 1e-3, 2e-3], atol=1e-18)
    c = math.sqrt(0.5)
    n, _ = face_normal(part, FaceId.ETAMIN, [0.5, 0.5])
    np.testing.assert_allclose(n, [c, -c, 0], atol=1e-12)
    n, _ = face_normal(part, FaceId.ETAMAX, [0.3, 0.5])
    np.testing.assert_allclose(n, [-1, 0, 0], atol=1e-12)
    n, _ = face_normal(part, FaceId.ZETAMAX, [0.3, 0.7])
    np.testing.assert_allclose(n, [0, 0, 1], atol=1e-12)


def test_normals_match_cross_product_fd(part):
    # outward normal of the arc face points toward the cylinder axis
    for u in (0.1, 0.37, 0.8):
        n, _ = face_normal(part, FaceId.ETAMIN, [u, 0.4])
        x, *_ = part.evaluate([[u, 0.0, 0.4]])
        radial = np.array([x[0, 0] - 2e-3, x[0, 1], 0.0])
        np.testing.assert_allclose(n, -radial / np.linalg.norm(radial), atol=1e-12)


def test_refinement_preserves_geometry(part, rng):
    ref = h_refine(part, [[0.1, 0.25, 0.25, 0.7], [0.3, 0.6], [0.5]])
    xi = rng.random((200, 3))
    np.testing.assert_allclose(ref.evaluate(xi)[0], part.evaluate(xi)[0], atol=1e-17)
    assert ref.shape == (9, 4, 3)
    with pytest.raises(ValueError):
        h_refine(part, [[1.0], [], []])


def test_elevation_preserves_geometry(part, rng):
    el = elevate_degree(part, (3, 2, 3))
    assert el.degrees == (3, 2, 3)
    xi = rng.random((200, 3))
    np.testing.assert_allclose(el.evaluate(xi)[0], part.evaluate(xi)[0], atol=1e-17)
    with pytest.raises(ValueError, match="multiplicity"):
        elevate_degree(h_refine(part, [[0.25], [], []]), (3, 2, 2))


def test_uniform_split():
    kv = KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2)
    np.testing.assert_allclose(uniform_split_knots(kv, 2), [0.25, 0.75])


def test_geometry_roundtrip(part):
    text = format_geometry(part)
    back = parse_geometry(text)
    np.testing.assert_array_equal(back.control, part.control)
    np.testing.assert_array_equal(back.weights, part.weights)
    for a, b in zip(back.knots, part.knots):
        np.testing.assert_array_equal(a.values, b.values)


def test_geometry_parse_errors_name_line(part):
    lines = format_geometry(part).splitlines()
    bad = lines.copy()
    bad[6] = "0.1 0.2 oops 1"
    with pytest.raises(GeometryError, match=":7:"):
        parse_geometry("\n".join(bad), "g")
    with pytest.raises(GeometryError, match="control points"):
        parse_geometry("\n".join(lines[:-1]), "g")
    bad = lines.copy()
    bad[2] = "0 0 0.5 1 1"
    with pytest.raises(GeometryError, match=":3:"):
        parse_geometry("\n".join(bad), "g")
    bad = lines.copy()
    bad[6] = bad[6].rsplit(" ", 1)[0] + " -1.0"
    with pytest.raises(GeometryError, match="weights"):
        parse_geometry("\n".join(bad), "g")


def test_negative_jacobian_rejected():
    vol = box_volume((1, 1, 1), (1, 1, 1))
    flipped = NurbsVolume(vol.knots, vol.control[::-1], vol.weights)
    with pytest.raises(GeometryError):
        map_point(flipped, [0.5, 0.5, 0.5])


def test_box_is_affine(rng):
    vol = box_volume((2.0, 3.0, 0.5), (2, 3, 1), (3, 2, 4), origin=(1, 0, 0))
    xi = rng.random((50, 3))
    x, J, *_ = vol.evaluate(xi)
    np.testing.assert_allclose(x, xi * [2.0, 3.0, 0.5] + [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(J, np.broadcast_to(np.diag([2.0, 3.0, 0.5]), J.shape), atol=1e-13)


def test_builtin_part_layout():
    part = quarter_cylinder_part()
    assert part.degrees == (2, 1, 1)
    np.testing.assert_allclose(part.knots[0].values, [0, 0, 0, .5, .5, 1, 1, 1])
    np.testing.assert_allclose(part.weights[:, 0, 0], [1, math.cos(math.pi / 8), 1,
                                                       math.cos(math.pi / 8), 1])
