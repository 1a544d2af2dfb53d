import numpy as np
import pytest

from conftest import random_box
from oracles import roi_pool_grid
from videoground.features import (
    FeatureMap,
    FeaturePyramid,
    PooledRoi,
    aggregate_pool,
    assign_level,
    pool_pyramid,
    read_feature_matrix,
    roi_align,
    write_feature_matrix,
)
from videoground.geometry import Box
from videoground.ioutil import FormatError


def ramp_map(height, width, dim=1):
    """f(x, y) = x evaluated at cell centers."""
    xs = np.arange(width) + 0.5
    data = np.broadcast_to(xs[None, :, None], (height, width, dim))
    return FeatureMap(np.array(data))


class TestContainers:
    def test_feature_map_shape_checks(self):
        with pytest.raises(ValueError):
            FeatureMap(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            FeatureMap(np.zeros((0, 4, 2)))
        with pytest.raises(ValueError):
            FeatureMap(np.full((2, 2, 1), np.nan))

    def test_pyramid_strides_must_decrease(self):
        coarse = FeatureMap(np.zeros((2, 2, 3)))
        fine = FeatureMap(np.zeros((4, 4, 3)))
        FeaturePyramid([coarse, fine], [8.0, 4.0])
        with pytest.raises(ValueError):
            FeaturePyramid([coarse, fine], [4.0, 8.0])
        with pytest.raises(ValueError):
            FeaturePyramid([coarse, fine], [4.0, 4.0])

    def test_pyramid_rejects_mixed_dims_and_empty(self):
        with pytest.raises(ValueError):
            FeaturePyramid([], [])
        with pytest.raises(ValueError):
            FeaturePyramid(
                [FeatureMap(np.zeros((2, 2, 3))), FeatureMap(np.zeros((4, 4, 2)))],
                [8.0, 4.0],
            )

    def test_pooled_roi_must_be_square(self):
        with pytest.raises(ValueError):
            PooledRoi(np.zeros((2, 3, 1)), Box(0, 0, 1, 1), 0)


class TestRoiAlign:
    def test_constant_field_pools_to_constant(self, rng):
        level = FeatureMap(np.full((5, 7, 3), 2.5))
        for _ in range(20):
            roi = roi_align(level, random_box(rng), out_size=3)
            assert np.array_equal(roi.grid, np.full((3, 3, 3), 2.5))

    def test_single_cell_box_blends_toward_neighbours(self):
        # Box(0, 0, 0.5, 0.5) covers cell (0, 0) of a 2x2 map exactly, but the
        # 2x2 interior sample points still see the neighbouring centers: the
        # pooled value is the fixed blend
        #   0.765625*c00 + 0.109375*c01 + 0.109375*c10 + 0.015625*c11,
        # not the bare cell value (they coincide only for locally flat fields).
        level = FeatureMap(np.arange(8, dtype=float).reshape(2, 2, 2))
        roi = roi_align(level, Box(0.0, 0.0, 0.5, 0.5), out_size=1)
        assert roi.grid.shape == (1, 1, 2)
        assert np.array_equal(roi.grid[0, 0], np.array([0.75, 1.75]))

    def test_corner_box_clamps_to_border_value(self):
        data = np.zeros((3, 3, 1))
        data[0, 0, 0] = 9.0
        roi = roi_align(FeatureMap(data), Box(0.0, 0.0, 0.1, 0.1), out_size=2)
        assert np.array_equal(roi.grid, np.full((2, 2, 1), 9.0))

    def test_linear_ramp_sampled_exactly(self):
        level = ramp_map(6, 8)
        box = Box(0.2, 0.25, 0.8, 0.75)  # interior: samples stay inside the center hull
        roi = roi_align(level, box, out_size=4)
        gx1, gx2 = box.x1 * 8, box.x2 * 8
        cell_w = (gx2 - gx1) / 4
        expected_x = gx1 + cell_w * (np.arange(4) + 0.5)
        for row in range(4):
            np.testing.assert_allclose(roi.grid[row, :, 0], expected_x, atol=1e-12)

    def test_matches_scalar_oracle(self, rng):
        data = rng.normal(size=(5, 6, 3))
        level = FeatureMap(data)
        for _ in range(25):
            box = random_box(rng)
            size = int(rng.integers(1, 4))
            roi = roi_align(level, box, out_size=size)
            np.testing.assert_allclose(
                roi.grid, roi_pool_grid(data, box.as_tuple(), size), atol=1e-12
            )

    def test_linear_in_the_field(self, rng):
        a = rng.normal(size=(4, 4, 2))
        b = rng.normal(size=(4, 4, 2))
        box = Box(0.1, 0.3, 0.7, 0.9)
        mixed = roi_align(FeatureMap(2.0 * a - 3.0 * b), box, out_size=3).grid
        parts = (
            2.0 * roi_align(FeatureMap(a), box, out_size=3).grid
            - 3.0 * roi_align(FeatureMap(b), box, out_size=3).grid
        )
        np.testing.assert_allclose(mixed, parts, atol=1e-12)

    def test_outputs_bounded_by_field_range(self, rng):
        data = rng.normal(size=(6, 6, 2))
        level = FeatureMap(data)
        for _ in range(50):
            grid = roi_align(level, random_box(rng), out_size=3).grid
            assert grid.min() >= data.min() - 1e-12
            assert grid.max() <= data.max() + 1e-12

    def test_rejects_bad_arguments(self):
        level = FeatureMap(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            roi_align(level, Box(0.3, 0.3, 0.3, 0.8), out_size=2)
        with pytest.raises(ValueError):
            roi_align(level, Box(0.1, 0.1, 0.5, 0.5), out_size=0)

    def test_default_out_size_is_seven(self):
        roi = roi_align(FeatureMap(np.zeros((3, 3, 1))), Box(0.1, 0.1, 0.9, 0.9))
        assert roi.size == 7


class TestAggregateAndLevels:
    def test_single_constant_level(self):
        roi = PooledRoi(np.full((2, 2, 3), 4.0), Box(0, 0, 1, 1), 0)
        np.testing.assert_array_equal(aggregate_pool([roi]), np.full(3, 4.0))

    def test_two_levels_average_their_means(self):
        first = PooledRoi(np.full((2, 2, 1), 1.0), Box(0, 0, 1, 1), 0)
        second = PooledRoi(np.full((3, 3, 1), 3.0), Box(0, 0, 1, 1), 1)
        np.testing.assert_allclose(aggregate_pool([first, second]), [2.0])

    def test_matches_two_pass_oracle(self, rng):
        rois = [
            PooledRoi(rng.normal(size=(3, 3, 4)), Box(0, 0, 1, 1), i) for i in range(3)
        ]
        expected = np.mean([r.grid.mean(axis=(0, 1)) for r in rois], axis=0)
        np.testing.assert_allclose(aggregate_pool(rois), expected, atol=1e-12)

    def test_duplicated_levels_equal_single_level(self, rng):
        data = rng.normal(size=(4, 4, 2))
        box = Box(0.2, 0.2, 0.8, 0.8)
        pyramid = FeaturePyramid([FeatureMap(data), FeatureMap(data)], [8.0, 4.0])
        doubled = aggregate_pool(pool_pyramid(pyramid, box, out_size=2))
        single = aggregate_pool([roi_align(FeatureMap(data), box, out_size=2)])
        np.testing.assert_allclose(doubled, single, atol=1e-12)

    def test_empty_and_mismatched_inputs_rejected(self):
        with pytest.raises(ValueError):
            aggregate_pool([])
        with pytest.raises(ValueError):
            aggregate_pool(
                [
                    PooledRoi(np.zeros((2, 2, 1)), Box(0, 0, 1, 1), 0),
                    PooledRoi(np.zeros((2, 2, 2)), Box(0, 0, 1, 1), 1),
                ]
            )

    def test_pool_pyramid_tags_level_indices(self):
        pyramid = FeaturePyramid(
            [FeatureMap(np.zeros((2, 2, 1))), FeatureMap(np.zeros((4, 4, 1)))],
            [8.0, 4.0],
        )
        rois = pool_pyramid(pyramid, Box(0.2, 0.2, 0.8, 0.8), out_size=2)
        assert [r.level for r in rois] == [0, 1]

    def test_assign_level_sends_large_boxes_coarse(self):
        big = Box(0.1, 0.1, 0.9, 0.9)      # sqrt(area) = 0.8 -> from-fine 1
        small = Box(0.4, 0.4, 0.5, 0.5)    # sqrt(area) = 0.1 -> from-fine 0
        assert assign_level(big, 2) == 0
        assert assign_level(small, 2) == 1
        assert assign_level(big, 1) == 0

    def test_assign_level_monotone_in_area(self):
        sides = np.linspace(0.02, 0.98, 30)
        levels = [assign_level(Box(0.0, 0.0, s, s), 4) for s in sides]
        assert all(a >= b for a, b in zip(levels, levels[1:]))

    def test_assign_level_degenerate_goes_finest(self):
        assert assign_level(Box(0.3, 0.3, 0.3, 0.3), 3) == 2
        with pytest.raises(ValueError):
            assign_level(Box(0, 0, 1, 1), 0)


class TestFeatureMatrixFormat:
    def test_round_trip_is_bitwise(self, rng, tmp_path):
        vectors = [rng.normal(size=6) * 10.0 ** rng.integers(-8, 8) for _ in range(9)]
        path = tmp_path / "vecs.fmat"
        write_feature_matrix(path, vectors)
        back = read_feature_matrix(path)
        assert len(back) == 9
        for orig, echo in zip(vectors, back):
            assert np.array_equal(orig, echo)
        # and the re-written file is byte-identical
        second = tmp_path / "again.fmat"
        write_feature_matrix(second, back)
        assert path.read_bytes() == second.read_bytes()

    def test_empty_matrix(self, tmp_path):
        path = tmp_path / "empty.fmat"
        write_feature_matrix(path, [])
        assert path.read_text() == "FMAT v1 count=0 dim=0\n"
        assert read_feature_matrix(path) == []

    def test_write_rejects_ragged_or_nonfinite_rows(self, tmp_path):
        with pytest.raises(ValueError, match="row 1"):
            write_feature_matrix(tmp_path / "x.fmat", [np.zeros(3), np.zeros(2)])
        with pytest.raises(ValueError):
            write_feature_matrix(tmp_path / "y.fmat", [np.array([1.0, np.inf])])

    def test_read_errors_name_the_line(self, tmp_path):
        bad_header = tmp_path / "a.fmat"
        bad_header.write_text("FMAT v2 count=1 dim=1\n0.0\n")
        with pytest.raises(FormatError, match="line 1"):
            read_feature_matrix(bad_header)

        wrong_arity = tmp_path / "b.fmat"
        wrong_arity.write_text("FMAT v1 count=2 dim=3\n1.0 2.0 3.0\n1.0 2.0\n")
        with pytest.raises(FormatError, match="line 3"):
            read_feature_matrix(wrong_arity)

        bad_value = tmp_path / "c.fmat"
        bad_value.write_text("FMAT v1 count=1 dim=2\n1.0 oops\n")
        with pytest.raises(FormatError, match="line 2"):
            read_feature_matrix(bad_value)

        short_file = tmp_path / "d.fmat"
        short_file.write_text("FMAT v1 count=3 dim=1\n1.0\n")
        with pytest.raises(FormatError):
            read_feature_matrix(short_file)
