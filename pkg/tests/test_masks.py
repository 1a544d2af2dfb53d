import numpy as np
import pytest

from videoground.geometry import Box
from videoground.ioutil import FormatError
from videoground.masks import (
    MaskFrame,
    MaskVideo,
    rasterize_box,
    read_mask_video,
    write_mask_video,
)


class TestContainers:
    def test_mask_frame_validation(self):
        MaskFrame(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            MaskFrame(np.zeros(4))
        with pytest.raises(ValueError):
            MaskFrame(np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            MaskFrame(np.full((2, 2), np.nan))

    def test_binary_thresholds_strictly_above(self):
        frame = MaskFrame(np.array([[0.0, 0.5, 0.51, 1.0]]))
        np.testing.assert_array_equal(frame.binary(), [[False, False, True, True]])

    def test_video_requires_uniform_resolution(self):
        with pytest.raises(ValueError):
            MaskVideo("v", [MaskFrame(np.zeros((2, 2))), MaskFrame(np.zeros((2, 3)))])
        with pytest.raises(ValueError):
            MaskVideo("v", [])
        with pytest.raises(ValueError):
            MaskVideo("", [MaskFrame(np.zeros((2, 2)))])


class TestRasterize:
    def test_pixel_center_convention(self):
        # centers on a 4-grid sit at 0.125, 0.375, 0.625, 0.875; the half-open
        # box [0, 0.5) catches the first two
        frame = rasterize_box(Box(0.0, 0.0, 0.5, 0.5), width=4, height=4)
        expected = np.zeros((4, 4))
        expected[:2, :2] = 1.0
        np.testing.assert_array_equal(frame.values, expected)

    def test_full_box_lights_everything(self):
        frame = rasterize_box(Box(0.0, 0.0, 1.0, 1.0), width=3, height=5)
        np.testing.assert_array_equal(frame.values, np.ones((5, 3)))

    def test_degenerate_box_is_empty(self):
        frame = rasterize_box(Box(0.5, 0.0, 0.5, 1.0), width=4, height=4)
        assert frame.values.sum() == 0

    def test_right_edge_is_exclusive(self):
        # on a 2-grid, center 0.75 is excluded by x2=0.75 but included by x2=0.76
        assert rasterize_box(Box(0.0, 0.0, 0.75, 1.0), 2, 1).values.sum() == 1
        assert rasterize_box(Box(0.0, 0.0, 0.76, 1.0), 2, 1).values.sum() == 2

    def test_bad_raster_size(self):
        with pytest.raises(ValueError):
            rasterize_box(Box(0, 0, 1, 1), 0, 4)


class TestMaskFormat:
    def test_exact_file_layout(self, tmp_path):
        video = MaskVideo(
            "v",
            [
                MaskFrame(np.array([[1.0, 0.0], [0.0, 1.0]])),
                MaskFrame(np.array([[1.0, 1.0], [0.0, 0.0]])),
            ],
        )
        path = tmp_path / "clip.mask"
        write_mask_video(path, video)
        assert path.read_text() == "MASK v1 w=2 h=2 frames=2\n10\n01\n\n11\n00\n"

    def test_round_trip_is_bitwise(self, tmp_path, rng):
        frames = [MaskFrame((rng.random((5, 7)) > 0.5).astype(float)) for _ in range(3)]
        first = tmp_path / "a.mask"
        write_mask_video(first, MaskVideo("v", frames))
        back = read_mask_video(first, video_id="v")
        assert back.video_id == "v"
        for orig, echo in zip(frames, back.frames):
            np.testing.assert_array_equal(orig.binary(), echo.binary())
        second = tmp_path / "b.mask"
        write_mask_video(second, back)
        assert first.read_bytes() == second.read_bytes()

    def test_probabilities_threshold_on_write(self, tmp_path):
        video = MaskVideo("v", [MaskFrame(np.array([[0.2, 0.9]]))])
        path = tmp_path / "p.mask"
        write_mask_video(path, video)
        assert path.read_text().splitlines()[1] == "01"

    def test_read_errors_name_the_line(self, tmp_path):
        cases = [
            ("MASK v2 w=2 h=1 frames=1\n10\n", "line 1"),
            ("MASK v1 w=2 h=1\n10\n", "line 1"),
            ("MASK v1 w=0 h=1 frames=1\n\n", "line 1"),
            ("MASK v1 w=2 h=1 frames=1\n102\n", "line 2"),
            ("MASK v1 w=2 h=1 frames=1\n1x\n", "line 2"),
            ("MASK v1 w=2 h=1 frames=2\n10\n01\n11\n", "line 3"),
        ]
        for content, pattern in cases:
            path = tmp_path / "bad.mask"
            path.write_text(content)
            with pytest.raises(FormatError, match=pattern):
                read_mask_video(path)

    def test_wrong_line_count_rejected(self, tmp_path):
        path = tmp_path / "short.mask"
        path.write_text("MASK v1 w=2 h=2 frames=1\n10\n")
        with pytest.raises(FormatError, match="expected 3 lines"):
            read_mask_video(path)
