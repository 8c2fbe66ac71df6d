import itertools
import math

import numpy as np
import pytest

from vitalscan.core import BinaryMask, ImageBuffer, Point2D, ScreenQuad
from vitalscan.geometry import (
    CanonicalFrame,
    DegenerateShape,
    EmptyMask,
    Homography,
    SingularSystem,
    compute_homography,
    extract_corners,
    fill_quad,
    order_corners,
    warp_arrays,
    warp_perspective,
)


def svd_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Independent oracle: homogeneous least squares via the SVD null vector."""
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    a = np.array(rows, dtype=float)
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    return h / h[2, 2]


def random_quad(rng, span=600.0, margin=60.0) -> ScreenQuad:
    """A well-conditioned random quad: canonical corners plus bounded jitter."""
    base = np.array([[0.0, 0.0], [span, 0.0], [span, span * 0.75], [0.0, span * 0.75]])
    jitter = rng.uniform(-margin, margin, size=(4, 2))
    return order_corners(base + jitter + 100.0)


class TestOrderCorners:
    def test_square(self):
        q = order_corners(np.array([[0, 0], [9, 0], [9, 9], [0, 9]], dtype=float))
        assert [(p.x, p.y) for p in q.corners] == [(0, 0), (9, 0), (9, 9), (0, 9)]

    def test_all_permutations_agree(self):
        pts = [(12.0, 8.0), (200.5, 15.0), (210.0, 180.0), (5.0, 170.5)]
        expected = order_corners(np.array(pts))
        for perm in itertools.permutations(pts):
            q = order_corners(np.array(perm))
            assert q == expected

    def test_collinear_rejected(self):
        with pytest.raises(DegenerateShape):
            order_corners(np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float))

    def test_duplicates_rejected(self):
        with pytest.raises(DegenerateShape):
            order_corners(np.array([[0, 0], [0, 0], [5, 5], [0, 5]], dtype=float))

    def test_accepts_point_sequences(self):
        q = order_corners([Point2D(0, 0), Point2D(9, 9), Point2D(9, 0), Point2D(0, 9)])
        assert (q.corners[0].x, q.corners[0].y) == (0, 0)


class TestHomography:
    def test_identity_from_equal_quads(self):
        q = ScreenQuad.from_array([[0, 0], [1, 0], [1, 1], [0, 1]])
        h = compute_homography(q, q)
        assert np.allclose(h.matrix, np.eye(3), atol=1e-9)

    def test_pure_scale(self):
        frame = CanonicalFrame()
        scaled = ScreenQuad.from_array(frame.quad.as_array() * 2.0)
        h = compute_homography(scaled, frame.quad)
        assert np.allclose(h.matrix, np.diag([0.5, 0.5, 1.0]), atol=1e-9)

    def test_identity_property_random_quads(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            q = random_quad(rng)
            h = compute_homography(q, q)
            assert np.max(np.abs(h.matrix - np.eye(3))) < 1e-9

    def test_matches_independent_svd_oracle(self):
        rng = np.random.default_rng(4)
        frame = CanonicalFrame()
        for _ in range(100):
            src = random_quad(rng)
            h = compute_homography(src, frame.quad)
            oracle = svd_homography(src.as_array(), frame.quad.as_array())
            assert np.max(np.abs(h.matrix - oracle)) < 1e-6
            reproj = h.apply(src.as_array()) - frame.quad.as_array()
            assert np.max(np.hypot(reproj[:, 0], reproj[:, 1])) < 1e-6

    def test_collinear_correspondence_is_singular(self):
        # three collinear source corners cannot map onto a true quad
        src = ScreenQuad.from_array([[0, 0], [5, 0], [10, 0.0], [0, 10]])
        dst = ScreenQuad.from_array([[0, 0], [10, 0], [10, 10], [0, 10]])
        with pytest.raises(SingularSystem):
            compute_homography(src, dst)

    def test_normalization_and_inverse(self):
        h = Homography(2.0 * np.eye(3))
        assert h.matrix[2, 2] == 1.0
        assert np.allclose(h.inverse().matrix, np.eye(3))

    def test_rejects_singular_matrix(self):
        m = np.zeros((3, 3))
        m[2, 2] = 1.0
        with pytest.raises(SingularSystem):
            Homography(m)


class TestWarp:
    def test_identity_warp_is_byte_exact(self):
        rng = np.random.default_rng(0)
        img = ImageBuffer(rng.integers(0, 256, (480, 640, 3), dtype=np.uint8))
        out = warp_perspective(img, Homography.identity(), CanonicalFrame())
        assert out == img

    def test_black_stays_black(self):
        img = ImageBuffer.zeros(640, 480)
        h = compute_homography(
            ScreenQuad.from_array([[5, 5], [600, 10], [610, 460], [8, 470]]),
            CanonicalFrame().quad,
        )
        out = warp_perspective(img, h, CanonicalFrame())
        assert int(out.pixels.sum()) == 0

    def test_round_trip_interior_error_bound(self):
        rng = np.random.default_rng(5)
        frame = CanonicalFrame()
        base = np.arange(640, dtype=np.uint8)[None, :, None]
        img = ImageBuffer(np.broadcast_to(base, (480, 640, 3)).copy())
        for _ in range(5):
            quad = random_quad(rng, span=500.0, margin=40.0)
            fwd = compute_homography(frame.quad, quad)  # canonical -> scene
            scene, _ = warp_arrays(img.pixels, fwd.matrix, 800, 600)
            back = compute_homography(quad, frame.quad)
            recovered, _ = warp_arrays(scene, back.matrix, frame.width, frame.height)
            interior = fill_quad(
                ScreenQuad.from_array([[3, 3], [636, 3], [636, 476], [3, 476]]), 640, 480
            ).data
            err = np.abs(
                recovered.astype(float)[interior] - img.pixels.astype(float)[interior]
            ).mean()
            assert err < 12.0  # < 12/255 mean absolute interpolation loss


class TestExtractCorners:
    def test_axis_aligned_rectangle(self):
        mask = np.zeros((120, 160), dtype=bool)
        mask[10:80, 10:100] = True
        q = extract_corners(BinaryMask(mask))
        assert np.allclose(
            q.as_array(), [[10, 10], [99, 10], [99, 79], [10, 79]], atol=1e-6
        )

    def test_rotated_rectangle_within_2px(self):
        # analytic oracle: rasterize a 30-degree rotated rectangle, then compare
        angle = math.radians(30.0)
        c, s = math.cos(angle), math.sin(angle)
        center = np.array([200.0, 150.0])
        half = np.array([120.0, 70.0])
        corners = np.array(
            [
                center + [-half[0] * c + half[1] * s, -half[0] * s - half[1] * c],
                center + [half[0] * c + half[1] * s, half[0] * s - half[1] * c],
                center + [half[0] * c - half[1] * s, half[0] * s + half[1] * c],
                center + [-half[0] * c - half[1] * s, -half[0] * s + half[1] * c],
            ]
        )
        truth = order_corners(corners)
        mask = fill_quad(truth, 400, 300)
        q = extract_corners(mask)
        err = np.hypot(*(q.as_array() - truth.as_array()).T)
        assert err.max() < 2.0

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            extract_corners(BinaryMask(np.zeros((50, 50), dtype=bool)))

    def test_small_component_rejected(self):
        mask = np.zeros((50, 50), dtype=bool)
        mask[10:15, 10:20] = True  # 50 px < 64
        with pytest.raises(DegenerateShape):
            extract_corners(BinaryMask(mask))

    def test_thin_line_rejected(self):
        mask = np.zeros((80, 200), dtype=bool)
        mask[40, 10:180] = True  # 170 px but collinear
        with pytest.raises(DegenerateShape):
            extract_corners(BinaryMask(mask))

    def test_largest_component_wins(self):
        mask = np.zeros((200, 300), dtype=bool)
        mask[10:40, 10:40] = True  # small square
        mask[60:180, 60:280] = True  # large rectangle
        q = extract_corners(BinaryMask(mask))
        assert np.allclose(q.as_array(), [[60, 60], [279, 60], [279, 179], [60, 179]], atol=1e-6)

    def test_translation_equivariance(self):
        mask = np.zeros((300, 400), dtype=bool)
        truth = order_corners(np.array([[40.0, 30.0], [210.0, 45.0], [220.0, 190.0], [35.0, 180.0]]))
        mask = fill_quad(truth, 400, 300).data
        base = extract_corners(BinaryMask(mask))
        shifted = np.zeros((300, 400), dtype=bool)
        dy, dx = 37, 53
        shifted[dy:, dx:] = mask[:-dy, :-dx]
        moved = extract_corners(BinaryMask(shifted))
        delta = moved.as_array() - base.as_array()
        assert np.allclose(delta[:, 0], dx, atol=1e-6)
        assert np.allclose(delta[:, 1], dy, atol=1e-6)


class TestFillQuad:
    def test_fill_area_close_to_analytic(self):
        q = ScreenQuad.from_array([[10, 10], [110, 10], [110, 90], [10, 90]])
        mask = fill_quad(q, 200, 120)
        # 100x80 quad; raster area within a boundary-row band of the analytic area
        assert abs(int(mask.data.sum()) - 8000) < 200

    def test_fill_then_extract_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            quad = random_quad(rng, span=400.0, margin=50.0)
            mask = fill_quad(quad, 800, 600)
            got = extract_corners(mask)
            err = np.hypot(*(got.as_array() - quad.as_array()).T)
            assert err.max() < 2.0
