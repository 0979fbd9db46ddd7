from __future__ import annotations

import numpy as np
import pytest

from conftest import smooth_image
from geom import CornerSet, FourPointDelta, Homography, h4pt_to_h, invert, project
from utils.errors import DegenerateProjection, ShapeMismatch
from warp.grid import norm_matrix_inv
from warp import (
    bilinear_backward,
    bilinear_sample,
    generate_grid,
    norm_matrix,
    normalized_inverse,
    photometric_objective,
    projective_grid,
    warp_image,
)


def mild_homography() -> Homography:
    return Homography(np.array([[1.01, 0.02, 1.3], [-0.015, 0.99, -0.7], [1e-4, -5e-5, 1.0]]))


def test_normalized_inverse_identity():
    np.testing.assert_allclose(normalized_inverse(Homography.identity(), 40, 30).m, np.eye(3), atol=1e-15)


def test_normalized_inverse_of_translation():
    width = 40
    h_inv = normalized_inverse(Homography.translation(6.0, 0.0), width, 30)
    np.testing.assert_allclose(h_inv.m, Homography.translation(-2 * 6.0 / width, 0.0).m, atol=1e-15)


def test_normalized_inverse_composes_to_identity():
    h = mild_homography()
    w, hgt = 48, 36
    forward = norm_matrix_inv(w, hgt) @ h.m @ norm_matrix(w, hgt)
    product = normalized_inverse(h, w, hgt).m @ forward
    assert np.max(np.abs(product / product[2, 2] - np.eye(3))) < 1e-10


def test_normalized_inverse_with_zero_h33():
    h = Homography(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]]))
    w = hgt = 32
    forward = norm_matrix_inv(w, hgt) @ h.m @ norm_matrix(w, hgt)
    product = normalized_inverse(h, w, hgt).m @ forward
    np.testing.assert_allclose(product / product[0, 0], np.eye(3), atol=1e-12)
    # 目标像素 (0, 0) 对应源图的无穷远点
    with pytest.raises(DegenerateProjection):
        warp_image(smooth_image(hgt, w), h, w, hgt)


def test_generate_grid_identity_is_pixel_lattice():
    grid = generate_grid(Homography.identity(), 7, 5)
    assert grid.shape == (5, 7, 2)
    ys, xs = np.mgrid[0:5, 0:7]
    np.testing.assert_array_equal(grid[..., 0], xs)
    np.testing.assert_array_equal(grid[..., 1], ys)


def test_generate_grid_translation():
    # 归一化逆矩阵对应像素平移 +5
    h_inv = normalized_inverse(Homography.translation(-5.0, 0.0), 8, 6)
    grid = generate_grid(h_inv, 8, 6)
    ys, xs = np.mgrid[0:6, 0:8]
    np.testing.assert_array_equal(grid[..., 0], xs + 5)
    np.testing.assert_array_equal(grid[..., 1], ys)


def test_generate_grid_matches_scalar_projection():
    h_inv = Homography(np.array([[0.9, 0.1, 0.05], [-0.05, 1.1, -0.1], [0.02, -0.03, 1.0]]))
    grid = generate_grid(h_inv, 4, 4)
    pixel_h = Homography(norm_matrix(4, 4) @ h_inv.m @ norm_matrix_inv(4, 4))
    for i in range(4):
        for j in range(4):
            assert tuple(grid[i, j]) == pytest.approx(project(pixel_h, (j, i)), abs=1e-9)


def test_pixel_grid_equals_normalized_pipeline():
    h = mild_homography()
    w, hgt = 20, 14
    via_norm = generate_grid(normalized_inverse(invert(h), w, hgt), w, hgt)
    np.testing.assert_allclose(projective_grid(h, w, hgt), via_norm, atol=1e-9)


def test_bilinear_sample_examples():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    grid = np.array([[[0.5, 0.5], [-2.0, -2.0], [1.0, 0.0], [0.0, 1.0]]])
    out = bilinear_sample(img, grid)[0, :, 0]
    assert out[0] == pytest.approx(1.5)
    assert out[1] == 0.0
    assert out[2] == 1.0
    assert out[3] == 2.0


def test_bilinear_sample_integer_grid_is_exact(rng):
    img = rng.random((6, 9, 3))
    grid = generate_grid(Homography.identity(), 9, 6)
    np.testing.assert_array_equal(bilinear_sample(img, grid), img)


def test_bilinear_sample_rejects_bad_grid():
    with pytest.raises(ShapeMismatch):
        bilinear_sample(np.zeros((4, 4)), np.zeros((3, 3)))


def test_bilinear_backward_zero_upstream(rng):
    img = rng.random((5, 5))
    grid = rng.uniform(0, 4, size=(3, 3, 2))
    g_img, g_grid = bilinear_backward(img, grid, np.zeros((3, 3)))
    assert not np.any(g_img) and not np.any(g_grid)


def test_bilinear_backward_grid_matches_finite_differences(rng):
    img = rng.random((8, 8, 2))
    for _ in range(50):
        # 远离整数与半整数，避开核的折点
        base = rng.integers(0, 6, size=2) + rng.uniform(0.1, 0.4, size=2)
        grid = base.reshape(1, 1, 2)
        upstream = rng.normal(size=(1, 1, 2))
        _, analytic = bilinear_backward(img, grid, upstream)

        eps = 1e-4
        numeric = np.zeros(2)
        for k in range(2):
            step = np.zeros((1, 1, 2))
            step[..., k] = eps
            plus = np.sum(bilinear_sample(img, grid + step) * upstream)
            minus = np.sum(bilinear_sample(img, grid - step) * upstream)
            numeric[k] = (plus - minus) / (2 * eps)
        np.testing.assert_allclose(analytic[0, 0], numeric, rtol=1e-4, atol=1e-10)


def test_bilinear_backward_image_gradient_is_weights(rng):
    img = rng.random((5, 6))
    grid = rng.uniform(-0.5, 5.5, size=(4, 3, 2))
    upstream = rng.normal(size=(4, 3))
    g_img, _ = bilinear_backward(img, grid, upstream)

    eps = 1e-6
    for y, x in ((0, 0), (2, 3), (4, 5), (1, 4)):
        bumped = img.copy()
        bumped[y, x] += eps
        numeric = (np.sum(bilinear_sample(bumped, grid)[..., 0] * upstream) - np.sum(bilinear_sample(img, grid)[..., 0] * upstream)) / eps
        assert g_img[y, x, 0] == pytest.approx(numeric, abs=1e-6)


def test_bilinear_backward_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        bilinear_backward(np.zeros((4, 4)), np.zeros((2, 2, 2)), np.zeros((3, 3)))


def test_warp_identity_is_exact(rng):
    img = rng.random((12, 17, 3))
    out = warp_image(img, Homography.identity(), 17, 12)
    assert np.max(np.abs(out - img)) < 1e-6


def test_warp_integer_translation_shifts_with_zero_fill(rng):
    img = rng.random((6, 8))
    out = warp_image(img, Homography.translation(1.0, 0.0), 8, 6)[..., 0]
    np.testing.assert_array_equal(out[:, 0], 0.0)
    np.testing.assert_allclose(out[:, 1:], img[:, :-1], atol=1e-12)


def test_double_warp_recovers_interior():
    img = smooth_image(64, 64)
    h = mild_homography()
    there = warp_image(img, h, 64, 64)
    back = warp_image(there, invert(h), 64, 64)[..., 0]
    assert np.max(np.abs(back[10:-10, 10:-10] - img[10:-10, 10:-10])) < 0.02


def _objective_setup(rng):
    image_a = smooth_image(48, 48, phase=0.3)
    corners = CornerSet.square(16, 16, 16)
    truth = FourPointDelta(rng.uniform(-2, 2, size=8))
    patch_b = photometric_objective(image_a, corners, np.zeros((16, 16)), truth.flat(), need_grad=False).warped
    return image_a, corners, patch_b


def test_photometric_objective_fixed_point():
    image_a = smooth_image(40, 40)
    corners = CornerSet.square(12, 12, 16)
    patch_b = image_a[12:28, 12:28]
    res = photometric_objective(image_a, corners, patch_b, np.zeros(8))
    assert res.loss == 0.0
    assert not np.any(res.grad_delta)


def test_photometric_objective_samples_image_through_h(rng):
    image_a, corners, _ = _objective_setup(rng)
    delta = rng.uniform(-2, 2, size=8)
    res = photometric_objective(image_a, corners, np.zeros((16, 16)), delta, need_grad=False)
    h = h4pt_to_h(corners, FourPointDelta(delta))
    # 独立的标量重算：V(x) = I^A(H x)
    for y, x in ((0, 0), (5, 9), (15, 15)):
        u, v = project(h, (16 + x, 16 + y))
        expected = bilinear_sample(image_a, np.array([[[u, v]]]))[0, 0, 0]
        assert res.warped[y, x] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("center", [False, True])
@pytest.mark.parametrize("seed", range(20))
def test_photometric_objective_gradient_matches_finite_differences(seed, center):
    rng = np.random.default_rng(500 + seed)
    image_a, corners, patch_b = _objective_setup(rng)
    delta = rng.uniform(-1.5, 1.5, size=8)
    analytic = photometric_objective(image_a, corners, patch_b, delta, center=center).grad_delta

    eps = 1e-6
    numeric = np.zeros(8)
    for k in range(8):
        step = np.zeros(8)
        step[k] = eps
        plus = photometric_objective(image_a, corners, patch_b, delta + step, need_grad=False, center=center).loss
        minus = photometric_objective(image_a, corners, patch_b, delta - step, need_grad=False, center=center).loss
        numeric[k] = (plus - minus) / (2 * eps)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-6)


def test_centered_objective_ignores_brightness_shift(rng):
    image_a, corners, patch_b = _objective_setup(rng)
    delta = rng.uniform(-1.5, 1.5, size=8)
    base = photometric_objective(image_a, corners, patch_b, delta, center=True)
    shifted = photometric_objective(image_a, corners, patch_b + 0.04, delta, center=True)
    assert shifted.loss == pytest.approx(base.loss, abs=1e-12)
    np.testing.assert_allclose(shifted.grad_delta, base.grad_delta, atol=1e-12)


def test_centered_objective_fixed_point_under_shift():
    image_a = smooth_image(40, 40)
    corners = CornerSet.square(12, 12, 16)
    res = photometric_objective(image_a, corners, image_a[12:28, 12:28] - 0.03, np.zeros(8), center=True)
    assert res.loss == pytest.approx(0.0, abs=1e-6)
