from __future__ import annotations

import numpy as np
import pytest

from geom import (
    CornerSet,
    FourPointDelta,
    Homography,
    corners_plus_delta,
    dlt_backward,
    dlt_solve,
    h4pt_backward,
    h4pt_to_h,
    invert,
    project,
    project_points,
)
from utils.errors import CollinearCorners, DegenerateProjection, ShapeMismatch, SingularHomography


def random_homography(rng: np.random.Generator, projective: float = 1e-4) -> Homography:
    m = np.eye(3)
    m[:2, :2] += rng.uniform(-0.1, 0.1, size=(2, 2))
    m[:2, 2] = rng.uniform(-10.0, 10.0, size=2)
    m[2, :2] = rng.uniform(-projective, projective, size=2)
    return Homography(m)


def test_project_identity_and_translation():
    assert project(Homography.identity(), (5, 7)) == (5.0, 7.0)
    assert project(Homography.translation(5, 3), (0, 0)) == (5.0, 3.0)


def test_project_matches_scalar_evaluation(rng):
    h = random_homography(rng)
    u, v = 37.5, -12.25
    m = h.m
    w = m[2][0] * u + m[2][1] * v + m[2][2]
    expected = ((m[0][0] * u + m[0][1] * v + m[0][2]) / w, (m[1][0] * u + m[1][1] * v + m[1][2]) / w)
    assert project(h, (u, v)) == pytest.approx(expected, abs=1e-12)
    assert project_points(h, np.array([[u, v]]))[0] == pytest.approx(expected, abs=1e-12)


def test_project_at_infinity_raises():
    h = Homography(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]))
    with pytest.raises(DegenerateProjection):
        project(h, (-1.0, 3.0))


def test_homography_normalizes_and_rejects_singular():
    h = Homography(2.0 * np.eye(3))
    assert h.m[2, 2] == 1.0
    np.testing.assert_array_equal(h.m, np.eye(3))
    with pytest.raises(SingularHomography):
        Homography(np.zeros((3, 3)))
    with pytest.raises(ShapeMismatch):
        Homography(np.eye(2))


def test_corners_plus_delta():
    c = CornerSet.square(0, 0, 1)
    assert np.array_equal(corners_plus_delta(c, FourPointDelta.zeros()).pts, c.pts)
    shifted = corners_plus_delta(c, FourPointDelta(np.ones(8)))
    np.testing.assert_array_equal(shifted.pts, c.pts + 1.0)


def test_corners_plus_delta_stays_within_rho(rng):
    c = CornerSet.square(0, 0, 128)
    d = FourPointDelta(rng.uniform(-32, 32, size=8))
    assert np.all(np.abs(corners_plus_delta(c, d).pts - c.pts) <= 32.0)


def test_dlt_identity_is_exact():
    c = CornerSet.square(0, 0, 1)
    np.testing.assert_array_equal(dlt_solve(c, c).m, np.eye(3))


def test_dlt_translation():
    src = CornerSet.square(10, 20, 128)
    dst = CornerSet(src.pts + np.array([5.0, 3.0]))
    h = dlt_solve(src, dst)
    np.testing.assert_allclose(h.m, [[1, 0, 5], [0, 1, 3], [0, 0, 1]], atol=1e-12)
    assert h.m[2, 2] == 1.0


@pytest.mark.parametrize("seed", range(20))
def test_dlt_recovers_constructed_homography(seed):
    rng = np.random.default_rng(seed)
    h_true = random_homography(rng)
    src = CornerSet.square(rng.integers(0, 64), rng.integers(0, 64), 128)
    dst = CornerSet(project_points(h_true, src.pts))
    h = dlt_solve(src, dst)
    np.testing.assert_allclose(h.m, h_true.m, atol=1e-9, rtol=0)
    assert np.max(np.abs(project_points(h, src.pts) - dst.pts)) < 1e-8


@pytest.mark.parametrize("rho", [4.0, 16.0, 32.0])
def test_dlt_recovers_perturbed_squares(rho):
    rng = np.random.default_rng(int(rho))
    for _ in range(1000):
        src = CornerSet.square(rng.integers(0, 64), rng.integers(0, 64), 128)
        dst = corners_plus_delta(src, FourPointDelta(rng.uniform(-rho, rho, size=8)))
        h = dlt_solve(src, dst)
        assert np.max(np.abs(project_points(h, src.pts) - dst.pts)) < 1e-8

        again = dlt_solve(src, CornerSet(project_points(h, src.pts)))
        np.testing.assert_allclose(again.m, h.m, atol=1e-9, rtol=0)


def test_dlt_rejects_collinear_corners():
    src = CornerSet(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 5.0]]))
    with pytest.raises(CollinearCorners):
        dlt_solve(src, CornerSet.square(0, 0, 4))


def test_invert():
    np.testing.assert_array_equal(invert(Homography.identity()).m, np.eye(3))
    np.testing.assert_allclose(invert(Homography.translation(5, 3)).m, Homography.translation(-5, -3).m, atol=1e-15)


def test_invert_product_is_identity(rng):
    for _ in range(10):
        h = random_homography(rng, projective=1e-3)
        product = h.m @ invert(h).m
        assert np.max(np.abs(product / product[2, 2] - np.eye(3))) < 1e-10


def test_invert_when_inverse_has_zero_h33():
    # 左上 2x2 块奇异，det = -1，逆矩阵的 h33 为 0
    h = Homography(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]]))
    h_inv = invert(h)
    assert abs(h_inv.m[2, 2]) < 1e-15
    assert np.linalg.norm(h_inv.m) == pytest.approx(1.0)
    product = h.m @ h_inv.m
    np.testing.assert_allclose(product / product[0, 0], np.eye(3), atol=1e-12)


def _dlt_objective(src: np.ndarray, dst: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(weights * dlt_solve(CornerSet(src), CornerSet(dst)).m))


def test_dlt_backward_zero_upstream():
    src = CornerSet.square(0, 0, 16)
    dst = CornerSet(src.pts + 1.5 * np.array([[1, -1], [0.5, 1], [-1, 0.25], [0, -1]]))
    gs, gd = dlt_backward(src, dst, dlt_solve(src, dst), np.zeros((3, 3)))
    assert not np.any(gs) and not np.any(gd)


@pytest.mark.parametrize("seed", range(100))
def test_dlt_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    src = CornerSet(CornerSet.square(4, 4, 16).pts + rng.uniform(-2, 2, size=(4, 2)))
    dst = CornerSet(src.pts + rng.uniform(-3, 3, size=(4, 2)))
    weights = rng.normal(size=(3, 3))
    weights[2, 2] = 0.0

    grad_src, grad_dst = dlt_backward(src, dst, dlt_solve(src, dst), weights)

    eps = 1e-5
    for analytic, which in ((grad_src, 0), (grad_dst, 1)):
        numeric = np.zeros((4, 2))
        for k in range(4):
            for j in range(2):
                pts = [src.pts.copy(), dst.pts.copy()]
                pts[which][k, j] += eps
                plus = _dlt_objective(*pts, weights)
                pts[which][k, j] -= 2 * eps
                minus = _dlt_objective(*pts, weights)
                numeric[k, j] = (plus - minus) / (2 * eps)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_dlt_backward_at_identity_configuration():
    c = CornerSet.square(0, 0, 1)
    upstream = np.eye(3)
    upstream[2, 2] = 0.0
    _, grad_dst = dlt_backward(c, c, dlt_solve(c, c), upstream)

    eps = 1e-6
    numeric = np.zeros((4, 2))
    for k in range(4):
        for j in range(2):
            dst = c.pts.copy()
            dst[k, j] += eps
            plus = _dlt_objective(c.pts, dst, upstream)
            dst[k, j] -= 2 * eps
            minus = _dlt_objective(c.pts, dst, upstream)
            numeric[k, j] = (plus - minus) / (2 * eps)
    np.testing.assert_allclose(grad_dst, numeric, atol=1e-6)


def test_h4pt_to_h_examples(rng):
    c = CornerSet.square(0, 0, 128)
    np.testing.assert_array_equal(h4pt_to_h(c, FourPointDelta.zeros()).m, np.eye(3))

    h = h4pt_to_h(c, FourPointDelta(np.tile([2.5, 2.5], 4)))
    assert h.is_affine()
    np.testing.assert_allclose(h.m, Homography.translation(2.5, 2.5).m, atol=1e-12)

    d = FourPointDelta(rng.uniform(-8, 8, size=8))
    h = h4pt_to_h(c, d)
    assert np.max(np.abs(project_points(h, c.pts) - corners_plus_delta(c, d).pts)) < 1e-8


def test_h4pt_backward_is_dst_gradient(rng):
    c = CornerSet.square(3, 5, 16)
    d = FourPointDelta(rng.uniform(-2, 2, size=8))
    h = h4pt_to_h(c, d)
    upstream = rng.normal(size=(3, 3))
    _, grad_dst = dlt_backward(c, corners_plus_delta(c, d), h, upstream)
    np.testing.assert_array_equal(h4pt_backward(c, d, h, upstream), grad_dst)
