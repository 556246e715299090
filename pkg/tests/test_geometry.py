"""
Unit tests for the geometry module.

These tests verify:
1. Warp composition, inversion and the invert-after-apply round trip
2. Random warp sampling stays zoom-biased and inside the mirror-padded canvas
3. Mirror padding and bilinear sampling against index-arithmetic oracles
4. Inverse warping reproduces exact pixel permutations for quarter turns
5. Colour jitter preserves shape and range and never moves content
6. Warp pairs carry a point map consistent with both warps
7. Keypoint sets and boxes follow warps and frame bounds
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geostable.config import PhotometricConfig, WarpConfig
from geostable.exceptions import NonInvertibleWarpError, WarpSamplingError
from geostable.geometry import (
    AffineWarp,
    KeypointSet,
    PhotometricTransform,
    apply_warp,
    compose,
    identity,
    invert,
    make_warp_pair,
    mask_box,
    mirror_pad,
    padded_bounds,
    pixel_centers,
    rotation,
    sample_affine_warp,
    sample_bilinear,
    sample_photometric,
    scaling,
    transform_points,
    translation,
    warp_box,
    warp_mask,
)


class TestAffineWarp:
    """Tests for warp algebra."""

    def test_compose_applies_first_then_second(self):
        """compose(second, first) maps u to second(first(u))."""
        first = translation(3.0, -1.0)
        second = scaling(2.0, 0.5)
        u = np.array([[1.0, 4.0], [-2.0, 0.5]])

        np.testing.assert_allclose(compose(second, first)(u), second(first(u)))

    def test_homogeneous_matrix_composes_like_warps(self):
        """as_matrix turns compose into a matrix product."""
        first = rotation(30.0, center=(5.0, 5.0))
        second = translation(2.0, 7.0)

        np.testing.assert_allclose(
            compose(second, first).as_matrix(), second.as_matrix() @ first.as_matrix()
        )
        np.testing.assert_array_equal(first.as_matrix()[2], [0.0, 0.0, 1.0])

    def test_invert_of_singular_warp_raises(self):
        """A warp with |det| <= 1e-6 cannot be inverted."""
        singular = AffineWarp(np.array([[1.0, 2.0], [0.5, 1.0]]), np.zeros(2))

        assert not singular.is_invertible
        with pytest.raises(NonInvertibleWarpError):
            invert(singular)

    def test_transform_points_is_exact_without_clamping(self):
        """Points far outside any frame are mapped by plain affine evaluation."""
        warp = AffineWarp(np.array([[0.0, -1.0], [1.0, 0.0]]), np.array([10.0, 0.0]))

        out = transform_points([[1000.0, -500.0]], warp)

        np.testing.assert_array_equal(out, [[510.0, 1000.0]])

    def test_empty_points_give_empty_result(self):
        """An empty point list maps to an empty (0, 2) array."""
        assert transform_points(np.zeros((0, 2)), identity()).shape == (0, 2)

    def test_quarter_turns_are_exact(self):
        """Rotations by multiples of 90 degrees use exact integer matrices."""
        np.testing.assert_array_equal(rotation(90.0).linear, [[0.0, -1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(rotation(180.0).linear, [[-1.0, 0.0], [0.0, -1.0]])

    def test_dict_round_trip(self):
        """to_dict/from_dict reproduce the same warp."""
        warp = rotation(17.0, center=(4.0, 5.0))

        assert AffineWarp.from_dict(warp.to_dict()).allclose(warp, atol=0.0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    def test_round_trip_on_random_warps(self, seed):
        """invert(g)(g(u)) recovers u within 1e-6 for sampled warps and interior points."""
        rng = np.random.default_rng(seed)
        warp = sample_affine_warp(rng, WarpConfig(), 64, 64)
        u = rng.uniform(0.0, 64.0, size=(20, 2))

        back = invert(warp)(warp(u))

        assert np.max(np.linalg.norm(back - u, axis=1)) < 1e-6

    def test_round_trip_over_many_warps(self):
        """The round trip holds for 1000 consecutive sampled warps."""
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            warp = sample_affine_warp(rng, WarpConfig(), 48, 40)
            u = rng.uniform(0.0, 40.0, size=(4, 2))
            worst = max(worst, float(np.max(np.linalg.norm(invert(warp)(warp(u)) - u, axis=1))))

        assert worst < 1e-6


class TestSampleAffineWarp:
    """Tests for random warp sampling."""

    def test_sampled_warps_zoom_in(self):
        """The linear part never shrinks area: |det| >= 1 with scales drawn from [1, s_max]."""
        rng = np.random.default_rng(0)
        for _ in range(100):
            warp = sample_affine_warp(rng, WarpConfig(), 32, 32)
            assert abs(warp.determinant) >= 1.0 - 1e-12

    def test_output_corners_read_inside_padded_canvas(self):
        """Every output-frame corner comes from inside the mirror-padded canvas."""
        rng = np.random.default_rng(1)
        xmin, ymin, xmax, ymax = padded_bounds(40, 56)
        corners = np.array([[0.0, 0.0], [56.0, 0.0], [0.0, 40.0], [56.0, 40.0]])
        for _ in range(100):
            src = invert(sample_affine_warp(rng, WarpConfig(), 40, 56))(corners)
            assert np.all(src[:, 0] >= xmin) and np.all(src[:, 0] <= xmax)
            assert np.all(src[:, 1] >= ymin) and np.all(src[:, 1] <= ymax)

    def test_identity_config_gives_identity(self):
        """Zero ranges and unit scale sample the identity warp."""
        warp = sample_affine_warp(np.random.default_rng(0), WarpConfig.identity(), 16, 16)

        assert warp.allclose(identity())

    def test_over_constrained_config_raises(self):
        """Translations that almost always leave the canvas exhaust the retry budget."""
        config = WarpConfig(translation=100.0, max_retries=5)

        with pytest.raises(WarpSamplingError, match="over-constrained"):
            sample_affine_warp(np.random.default_rng(0), config, 16, 16)


class TestResampling:
    """Tests for mirror padding, bilinear sampling and inverse warping."""

    def test_mirror_pad_doubles_and_reflects(self):
        """Row r of the top pad band equals source row (top - r)."""
        image = np.random.default_rng(0).random((8, 8, 3))

        padded = mirror_pad(image)

        assert padded.shape == (16, 16, 3)
        top, left = 4, 4
        np.testing.assert_array_equal(padded[top:top + 8, left:left + 8], image)
        for r in range(top):
            np.testing.assert_array_equal(padded[r, left:left + 8], image[top - r])
        for c in range(left):
            np.testing.assert_array_equal(padded[top:top + 8, c], image[:, left - c])

    def test_mirror_pad_single_row_uses_edge(self):
        """A one-row image is padded by repetition."""
        image = np.array([[0.1, 0.2, 0.3]])

        padded = mirror_pad(image)

        assert padded.shape == (2, 6)
        np.testing.assert_array_equal(padded[0], padded[1])

    def test_mirror_pad_rejects_out_of_range_values(self):
        """Images must hold values in [0, 1]."""
        with pytest.raises(ValueError):
            mirror_pad(np.full((4, 4), 2.0))

    def test_sample_at_pixel_centres_returns_pixels(self):
        """Sampling at pixel centres is exact."""
        image = np.random.default_rng(2).random((5, 7))

        values = sample_bilinear(image, pixel_centers(5, 7))

        np.testing.assert_allclose(values.reshape(5, 7), image, atol=1e-12)

    def test_sample_matches_four_tap_oracle(self):
        """Interior samples equal a hand-written 4-tap bilinear interpolation."""
        rng = np.random.default_rng(3)
        image = rng.random((9, 9))
        for _ in range(20):
            x, y = rng.uniform(1.0, 8.0, size=2)
            gx, gy = x - 0.5, y - 0.5
            c0, r0 = int(np.floor(gx)), int(np.floor(gy))
            fx, fy = gx - c0, gy - r0
            expected = (
                image[r0, c0] * (1 - fx) * (1 - fy)
                + image[r0, c0 + 1] * fx * (1 - fy)
                + image[r0 + 1, c0] * (1 - fx) * fy
                + image[r0 + 1, c0 + 1] * fx * fy
            )

            assert sample_bilinear(image, [[x, y]])[0] == pytest.approx(expected, abs=1e-12)

    def test_identity_warp_is_lossless(self):
        """apply_warp with the identity returns the image unchanged."""
        image = np.random.default_rng(4).random((6, 5, 3))

        np.testing.assert_allclose(apply_warp(image, identity()), image, atol=1e-12)

    def test_quarter_turn_is_a_pixel_permutation(self):
        """A 90 degree turn about the frame centre equals np.rot90 clockwise."""
        pattern = np.arange(25, dtype=np.float64).reshape(5, 5) / 24.0

        out = apply_warp(pattern, rotation(90.0, center=(2.5, 2.5)))

        np.testing.assert_allclose(out, np.rot90(pattern, k=-1), atol=1e-12)

    def test_integer_translation_shifts_content(self):
        """Translating by whole pixels moves pixels exactly."""
        image = np.random.default_rng(5).random((8, 8))

        out = apply_warp(image, translation(2.0, 1.0))

        np.testing.assert_allclose(out[1:, 2:], image[:-1, :-2], atol=1e-12)

    def test_warp_to_different_output_shape(self):
        """out_shape sets the rendered frame independently of the source."""
        image = np.random.default_rng(6).random((8, 8, 3))

        out = apply_warp(image, scaling(0.5), out_shape=(4, 4))

        assert out.shape == (4, 4, 3)

    def test_non_invertible_warp_raises(self):
        """Inverse warping needs an invertible warp."""
        with pytest.raises(NonInvertibleWarpError):
            apply_warp(np.zeros((4, 4)), AffineWarp(np.zeros((2, 2)), np.zeros(2)))

    def test_warp_mask_stays_boolean(self):
        """Masks are resampled and thresholded back to booleans."""
        mask = np.zeros((8, 8), dtype=bool)
        mask[2:5, 3:6] = True

        out = warp_mask(mask, translation(1.0, 0.0))

        assert out.dtype == bool
        assert out.sum() == mask.sum()


class TestPhotometric:
    """Tests for colour jitter."""

    def test_disabled_config_is_identity(self):
        """A disabled config yields the identity without consuming randomness."""
        rng = np.random.default_rng(0)
        before = rng.bit_generator.state

        transform = sample_photometric(rng, PhotometricConfig.disabled())

        assert transform.is_identity
        assert rng.bit_generator.state == before

    def test_jitter_keeps_shape_and_range(self):
        """Strong jitter keeps the image shape and values in [0, 1]."""
        rng = np.random.default_rng(1)
        image = rng.random((12, 10, 3))
        for _ in range(10):
            out = sample_photometric(rng, PhotometricConfig()).apply(image)
            assert out.shape == image.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_identity_transform_copies(self):
        """The identity transform returns an equal copy."""
        image = np.random.default_rng(2).random((4, 4, 3))

        out = PhotometricTransform().apply(image)

        np.testing.assert_array_equal(out, image)
        assert out is not image


class TestWarpPair:
    """Tests for synthetic training pairs."""

    def test_pairwise_maps_first_view_to_second(self):
        """pairwise(warp_a(p)) == warp_b(p) for source points p."""
        rng = np.random.default_rng(0)
        image = rng.random((32, 32, 3))
        _, _, sample = make_warp_pair(image, rng, WarpConfig())
        p = rng.uniform(0.0, 32.0, size=(50, 2))

        np.testing.assert_allclose(sample.pairwise(sample.warp_a(p)), sample.warp_b(p), atol=1e-9)

    def test_identity_pair_reproduces_image(self):
        """Identity warps without jitter return the image twice."""
        image = np.random.default_rng(1).random((16, 16, 3))

        x_a, x_b, sample = make_warp_pair(image, np.random.default_rng(0), WarpConfig.identity())

        np.testing.assert_allclose(x_a, image, atol=1e-12)
        np.testing.assert_allclose(x_b, image, atol=1e-12)
        assert sample.pairwise.allclose(identity())

    def test_resize_is_folded_into_warps(self):
        """Rendering at half resolution scales the point map's frame."""
        image = np.random.default_rng(2).random((32, 32, 3))

        x_a, _, sample = make_warp_pair(
            image, np.random.default_rng(0), WarpConfig.identity(), out_size=(16, 16)
        )

        assert x_a.shape == (16, 16, 3)
        assert sample.warp_a.allclose(scaling(0.5))

    def test_jitter_changes_colour_not_geometry(self):
        """With jitter the views differ in intensity, yet a bright dot lands where pairwise says."""
        image = np.full((32, 32, 3), 0.2)
        image[10, 14] = 1.0
        rng = np.random.default_rng(3)
        config = WarpConfig(rotation_deg=0.0, scale_max=1.0, shear=0.0, translation=0.0)

        x_a, x_b, sample = make_warp_pair(image, rng, config, photometric=PhotometricConfig())

        assert not np.allclose(x_a, x_b)
        dot_b = sample.pairwise(sample.warp_a([14.5, 10.5]))
        row, col = np.unravel_index(np.argmax(x_b.sum(axis=2)), x_b.shape[:2])
        np.testing.assert_allclose(dot_b, [col + 0.5, row + 0.5], atol=1e-9)


class TestKeypoints:
    """Tests for keypoint sets and boxes."""

    def test_mask_box_is_tight(self):
        """The box spans exactly the true pixels."""
        mask = np.zeros((10, 10), dtype=bool)
        mask[2:5, 3:9] = True

        assert mask_box(mask) == (3.0, 2.0, 6.0, 3.0)

    def test_mask_box_of_empty_mask_raises(self):
        """An empty mask has no box."""
        with pytest.raises(ValueError):
            mask_box(np.zeros((3, 3), dtype=bool))

    def test_warp_box_bounds_warped_corners(self):
        """A quarter turn swaps the box extent."""
        box = warp_box((0.0, 0.0, 4.0, 2.0), rotation(90.0))

        assert box == pytest.approx((-2.0, 0.0, 2.0, 4.0))

    def test_transformed_hides_points_leaving_frame(self):
        """Points warped outside the frame become invisible; the box follows the warp."""
        kps = KeypointSet.create(["a", "b"], [[2.0, 2.0], [7.0, 7.0]], box=(1.0, 1.0, 7.0, 7.0))

        moved = kps.transformed(translation(3.0, 0.0), 8, 8)

        np.testing.assert_array_equal(moved.visible, [True, False])
        assert moved.box == pytest.approx((4.0, 1.0, 7.0, 7.0))
        assert moved.max_side == 7.0

    def test_invisible_points_stay_invisible(self):
        """Visibility is never regained by warping."""
        kps = KeypointSet.create(["a"], [[2.0, 2.0]], visible=[False], box=(0.0, 0.0, 4.0, 4.0))

        assert kps.transformed(identity(), 8, 8).visible_count == 0

    def test_shape_mismatch_is_rejected(self):
        """Names, points and flags must agree in length."""
        with pytest.raises(ValueError):
            KeypointSet(("a", "b"), np.zeros((1, 2)), np.ones(1, dtype=bool), (0.0, 0.0, 1.0, 1.0))

    def test_frame_round_trip(self):
        """to_frame/from_frame preserve names, points and visibility."""
        kps = KeypointSet.create(
            ["tip", "base"], [[1.5, 2.5], [3.0, 4.0]], [True, False], (0.0, 0.0, 5.0, 5.0)
        )

        assert KeypointSet.from_frame(kps.to_frame(), kps.box).allclose(kps)
