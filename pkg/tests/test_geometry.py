import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droneharvest import (
    ClusterLayout,
    DronePath,
    Point2,
    PowerModel,
    energy,
    grad_energy,
    grad_length,
    lagrange_residual,
    path_length,
    shrink_toward,
)
from droneharvest.checks import gradient_error
from droneharvest.exceptions import (
    DegenerateSegmentError,
    DimensionError,
    VertexAtHead,
)

from conftest import random_layout

CASE1_HEADS = [[2, 1], [2, 4], [6, 4], [6, 1]]

coord = st.floats(-20, 20, allow_nan=False)


def _path_near(heads, start, rng, scale=0.7):
    return DronePath(start, start, heads + scale * rng.standard_normal(heads.shape))


def test_energy_of_tour_is_zero():
    lay = ClusterLayout(CASE1_HEADS)
    path = DronePath((0, 0), (0, 0), CASE1_HEADS)
    assert energy(path, lay, PowerModel(2)) == 0.0


def test_energy_single_offset_vertex():
    lay = ClusterLayout([[2, 0]])
    path = DronePath((0, 0), (0, 0), [[1, 0]])
    assert energy(path, lay, PowerModel(2)) == pytest.approx(1.0)
    assert energy(path, lay, PowerModel(4)) == pytest.approx(1.0)


def test_path_length_case1_given_order():
    path = DronePath((0, 0), (0, 0), CASE1_HEADS)
    expected = np.sqrt(5) + 3 + 4 + 3 + np.sqrt(37)
    assert path_length(path) == pytest.approx(expected, abs=1e-12)
    assert path_length(path) == pytest.approx(18.3188, abs=1e-4)


def test_grad_length_straight_through_vertex_vanishes():
    path = DronePath((0, 0), (2, 0), [[1, 0]])
    np.testing.assert_allclose(grad_length(path), [0, 0], atol=1e-15)


def test_grad_energy_zero_at_heads():
    lay = ClusterLayout(CASE1_HEADS)
    path = DronePath((0, 0), (0, 0), CASE1_HEADS)
    np.testing.assert_array_equal(grad_energy(path, lay, PowerModel(2)), 0.0)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 8.0])
@pytest.mark.parametrize("J", [1, 3, 6])
def test_gradients_match_finite_differences(rng, p, J):
    heads, start = random_layout(rng, J)
    path = _path_near(heads, start, rng)
    assert gradient_error(path, ClusterLayout(heads), PowerModel(p)) < 1e-6


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0])
def test_grad_energy_finite_at_head_for_small_powers(p):
    lay = ClusterLayout([[1, 1], [3, 1]])
    path = DronePath((0, 0), (0, 0), [[1, 1], [3, 2]])
    g = grad_energy(path, lay, PowerModel(p)).reshape(-1, 2)
    np.testing.assert_array_equal(g[0], [0.0, 0.0])
    assert np.all(np.isfinite(g))


def test_grad_length_degenerate_segment():
    path = DronePath((0, 0), (0, 0), [[1, 1], [1, 1]])
    with pytest.raises(DegenerateSegmentError) as info:
        grad_length(path)
    assert info.value.index == 1


def test_dimension_mismatch():
    lay = ClusterLayout(CASE1_HEADS)
    path = DronePath((0, 0), (0, 0), CASE1_HEADS[:3])
    with pytest.raises(DimensionError):
        energy(path, lay, PowerModel(2))


def test_power_below_two_rejected():
    with pytest.raises(ValueError):
        PowerModel(1.5)


def test_point2_rejects_nan():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)


def test_layouts_are_immutable():
    lay = ClusterLayout(CASE1_HEADS)
    with pytest.raises((AttributeError, ValueError)):
        lay.heads[0, 0] = 99.0
    with pytest.raises(AttributeError):
        lay.foo = 1


def test_lagrange_residual_zero_at_single_head_optimum():
    lay = ClusterLayout([[2, 0]])
    path = DronePath((0, 0), (0, 0), [[1, 0]])
    assert lagrange_residual(path, -1.0, lay, PowerModel(2)) < 1e-14


def test_shrink_toward_full_contraction():
    lay = ClusterLayout([[2, 0], [3, 3]])
    path = DronePath((0, 0), (0, 0), [[1, 0], [2, 2]])
    out = shrink_toward(path, lay, 0, 1.0)
    np.testing.assert_array_equal(out.vertices[0], [2, 0])
    np.testing.assert_array_equal(out.vertices[1], [2, 2])


def test_shrink_toward_at_head_signals():
    lay = ClusterLayout([[2, 0]])
    path = DronePath((0, 0), (0, 0), [[2, 0]])
    with pytest.raises(VertexAtHead):
        shrink_toward(path, lay, 0, 0.5)


@settings(max_examples=60, deadline=None)
@given(x=coord, y=coord, delta=st.floats(0.01, 1.0), p=st.sampled_from([2.0, 4.0, 8.0]))
def test_contraction_never_increases_energy(x, y, delta, p):
    lay = ClusterLayout([[1.0, 2.0], [4.0, -1.0]])
    path = DronePath((0, 0), (0, 0), [[x, y], [0.5, 0.5]])
    try:
        out = shrink_toward(path, lay, 0, delta)
    except VertexAtHead:
        return
    model = PowerModel(p)
    assert energy(out, lay, model) <= energy(path, lay, model) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.tuples(coord, coord), min_size=3, max_size=8, unique=True))
def test_grad_length_bounded_by_two(pts):
    pts = np.array(pts)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.min(seg) < 1e-6:
        return
    path = DronePath(pts[0], pts[-1], pts[1:-1])
    g = grad_length(path).reshape(-1, 2)
    assert np.all(np.linalg.norm(g, axis=1) <= 2 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(dx=coord, dy=coord, theta=st.floats(0, 2 * np.pi), scale=st.floats(0.1, 10))
def test_similarity_invariance(dx, dy, theta, scale):
    heads = np.array([[2.0, 1.0], [2.0, 4.0], [6.0, 4.0]])
    verts = heads + np.array([[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]])
    start = np.zeros(2)
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])

    def tf(a):
        return scale * (np.asarray(a) @ R.T) + [dx, dy]

    p = 2.0
    base = DronePath(start, start, verts)
    moved = DronePath(tf(start), tf(start), tf(verts))
    lay, lay2 = ClusterLayout(heads), ClusterLayout(tf(heads))
    assert path_length(moved) == pytest.approx(scale * path_length(base), rel=1e-9)
    assert energy(moved, lay2, PowerModel(p)) == pytest.approx(
        scale ** p * energy(base, lay, PowerModel(p)), rel=1e-9)
    g = grad_length(base).reshape(-1, 2) @ R.T
    np.testing.assert_allclose(grad_length(moved).reshape(-1, 2), g, atol=1e-9)
