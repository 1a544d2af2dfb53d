import json
import math

import numpy as np
import pytest

from conftest import random_box
from oracles import mask_f, mask_j, recall_scan
from videoground.geometry import Box, ScoredBox
from videoground.ioutil import FormatError
from videoground.masks import MaskFrame, MaskVideo
from videoground.metrics import (
    BOUNDARY_RADIUS_FRAC,
    MetricReport,
    f_measure,
    j_measure,
    miou,
    oracle_recall,
    read_proposals,
    render_report_csv,
    sequence_eval,
    write_proposals,
)


def bits(rows):
    return MaskFrame(np.array(rows, dtype=float))


def square_mask(size, row, col, side):
    arr = np.zeros((size, size))
    arr[row:row + side, col:col + side] = 1.0
    return MaskFrame(arr)


class TestJMeasure:
    def test_identical_masks(self):
        frame = bits([[1, 0], [0, 1]])
        assert j_measure(frame, frame) == 1.0

    def test_disjoint_masks(self):
        assert j_measure(bits([[1, 0]]), bits([[0, 1]])) == 0.0

    def test_one_of_three_union(self):
        pred = bits([[1, 0], [0, 0]])
        gt = bits([[1, 1], [1, 0]])
        assert j_measure(pred, gt) == pytest.approx(1 / 3, abs=1e-15)

    def test_both_empty_scores_one(self):
        empty = bits([[0, 0], [0, 0]])
        assert j_measure(empty, empty) == 1.0

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            j_measure(bits([[1]]), bits([[1, 0]]))

    def test_matches_pixel_loop_oracle(self, rng):
        for _ in range(30):
            pred = (rng.random((6, 9)) > 0.5)
            gt = (rng.random((6, 9)) > 0.5)
            got = j_measure(MaskFrame(pred.astype(float)), MaskFrame(gt.astype(float)))
            assert got == pytest.approx(mask_j(pred, gt), abs=1e-12)


class TestFMeasure:
    def test_identical_masks(self):
        frame = square_mask(10, 3, 3, 4)
        assert f_measure(frame, frame) == 1.0

    def test_one_empty_side_scores_zero(self):
        empty = bits(np.zeros((8, 8)))
        full = square_mask(8, 2, 2, 3)
        assert f_measure(empty, full) == 0.0
        assert f_measure(full, empty) == 0.0

    def test_both_empty_scores_one(self):
        empty = bits(np.zeros((8, 8)))
        assert f_measure(empty, empty) == 1.0

    def test_one_pixel_shift_within_default_tolerance(self):
        # 20x20 diagonal is ~28.3, so the default radius is ceil(0.23) = 1 and a
        # one-pixel shift still counts as a perfect boundary match
        a = square_mask(20, 5, 5, 9)
        b = square_mask(20, 5, 6, 9)
        assert f_measure(a, b) == 1.0

    def test_far_masks_score_zero(self):
        a = square_mask(30, 2, 2, 4)
        b = square_mask(30, 20, 20, 4)
        assert f_measure(a, b) == 0.0

    def test_matches_all_pairs_oracle(self, rng):
        radius = math.ceil(BOUNDARY_RADIUS_FRAC * math.hypot(16, 12))
        for _ in range(15):
            pred = rng.random((12, 16)) > 0.7
            gt = rng.random((12, 16)) > 0.7
            got = f_measure(MaskFrame(pred.astype(float)), MaskFrame(gt.astype(float)))
            assert got == pytest.approx(mask_f(pred, gt, radius), abs=1e-12)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            f_measure(bits([[1]]), bits([[1, 0]]))


class TestSequenceEval:
    def test_mixed_frames_average(self):
        match = square_mask(8, 1, 1, 3)
        far = square_mask(8, 5, 5, 2)
        pred = MaskVideo("v", [match, match])
        gt = MaskVideo("v", [match, far])
        j, f, jf = sequence_eval(pred, gt)
        assert j == pytest.approx(0.5)
        assert f == pytest.approx(0.5)
        assert jf == pytest.approx((j + f) / 2.0, abs=1e-15)

    def test_frame_count_mismatch_rejected(self):
        frame = square_mask(4, 0, 0, 2)
        with pytest.raises(ValueError):
            sequence_eval(MaskVideo("v", [frame]), MaskVideo("v", [frame, frame]))


class TestMiou:
    def test_hand_values(self):
        assert miou([0.7]) == pytest.approx(0.7)
        assert miou([0.0, 1.0]) == pytest.approx(0.5)

    def test_matches_mean_oracle(self, rng):
        vals = rng.uniform(size=100).tolist()
        assert miou(vals) == pytest.approx(float(np.mean(vals)), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            miou([])


class TestOracleRecall:
    def test_exact_proposal_scores_one(self):
        gt = Box(0.2, 0.2, 0.6, 0.6)
        frames = [[ScoredBox(gt, 0.9)]]
        assert oracle_recall(frames, [[gt]], topk=1, iou_thresh=0.5) == 1.0

    def test_no_proposals_scores_zero(self):
        assert oracle_recall([[]], [[Box(0, 0, 1, 1)]], topk=5, iou_thresh=0.5) == 0.0

    def test_threshold_is_strict(self):
        # IoU exactly 0.5 does not clear a 0.5 threshold
        half = ScoredBox(Box(0.0, 0.0, 0.5, 1.0), 0.9)
        gt = [[Box(0.0, 0.0, 1.0, 1.0)]]
        assert oracle_recall([[half]], gt, topk=1, iou_thresh=0.5) == 0.0
        assert oracle_recall([[half]], gt, topk=1, iou_thresh=0.49) == 1.0

    def test_low_scoring_hit_outside_topk(self):
        gt = Box(0.2, 0.2, 0.6, 0.6)
        frames = [[ScoredBox(Box(0.7, 0.7, 0.9, 0.9), 0.9), ScoredBox(gt, 0.1)]]
        assert oracle_recall(frames, [[gt]], topk=1, iou_thresh=0.5) == 0.0
        assert oracle_recall(frames, [[gt]], topk=2, iou_thresh=0.5) == 1.0

    def test_matches_brute_force(self, rng):
        from conftest import random_scored_boxes

        for _ in range(10):
            frames, gts = [], []
            for _ in range(4):
                frames.append(random_scored_boxes(rng, int(rng.integers(1, 12))))
                gts.append([random_box(rng) for _ in range(int(rng.integers(0, 3)))])
            if not any(gts):
                gts[0] = [random_box(rng)]
            topk = int(rng.integers(1, 6))
            got = oracle_recall(frames, gts, topk=topk, iou_thresh=0.3)
            expected = recall_scan(
                [[(s.box.as_tuple(), s.score) for s in frame] for frame in frames],
                [[g.as_tuple() for g in frame] for frame in gts],
                topk,
                0.3,
            )
            assert got == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_topk(self, rng):
        from conftest import random_scored_boxes

        frames = [random_scored_boxes(rng, 15) for _ in range(3)]
        gts = [[random_box(rng) for _ in range(2)] for _ in range(3)]
        values = [oracle_recall(frames, gts, topk=k, iou_thresh=0.3) for k in range(1, 16)]
        assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))

    def test_validation(self):
        gt = [[Box(0, 0, 1, 1)]]
        with pytest.raises(ValueError):
            oracle_recall([[], []], gt, topk=1, iou_thresh=0.5)
        with pytest.raises(ValueError):
            oracle_recall([[]], gt, topk=0, iou_thresh=0.5)
        with pytest.raises(ValueError):
            oracle_recall([[]], gt, topk=1, iou_thresh=1.5)
        with pytest.raises(ValueError):
            oracle_recall([[]], [[]], topk=1, iou_thresh=0.5)


class TestReport:
    def test_csv_layout(self):
        report = MetricReport(
            rows=[("vid-a", 1.0, 0.5, 0.75), ("vid-b", 0.0, 0.5, 0.25)]
        )
        assert render_report_csv(report) == (
            "video_id,J,F,JF\n"
            "vid-a,1.0000,0.5000,0.7500\n"
            "vid-b,0.0000,0.5000,0.2500\n"
            "ALL,0.5000,0.5000,0.5000\n"
        )

    def test_means(self):
        report = MetricReport(rows=[("a", 0.2, 0.4, 0.3), ("b", 0.6, 0.8, 0.7)])
        assert report.mean_j == pytest.approx(0.4)
        assert report.mean_f == pytest.approx(0.6)
        assert report.mean_jf == pytest.approx(0.5)

    def test_empty_report_rejected(self):
        with pytest.raises(ValueError):
            MetricReport(rows=[])


class TestProposalFormat:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "props.jsonl"
        write_proposals(
            path,
            [
                {
                    "video_id": "v2",
                    "frame": 0,
                    "boxes": [(0.1, 0.1, 0.4, 0.4)],
                    "objectness": [0.75],
                },
                {
                    "video_id": "v1",
                    "frame": 1,
                    "boxes": [(0.2, 0.2, 0.5, 0.5), (0.0, 0.0, 0.3, 0.3)],
                    "objectness": [0.5, 0.25],
                },
            ],
        )
        # rows are sorted by (video_id, frame)
        first_row = json.loads(path.read_text().splitlines()[0])
        assert first_row["video_id"] == "v1"
        back = read_proposals(path)
        assert set(back) == {"v1", "v2"}
        assert back["v1"][1] == [
            ScoredBox(Box(0.2, 0.2, 0.5, 0.5), 0.5),
            ScoredBox(Box(0.0, 0.0, 0.3, 0.3), 0.25),
        ]
        assert back["v2"][0] == [ScoredBox(Box(0.1, 0.1, 0.4, 0.4), 0.75)]

    def test_read_errors_name_the_line(self, tmp_path):
        cases = [
            ('{"video_id": "v", "frame": 0, "boxes": [[0,0,1,1]]}', "missing key"),
            ('{"video_id": "v", "frame": "x", "boxes": [], "objectness": []}', "frame"),
            ('{"video_id": "v", "frame": 0, "boxes": [[0,0,1,1]], "objectness": []}', "1 boxes vs 0"),
            ('{"video_id": "v", "frame": 0, "boxes": [[0,0,1]], "objectness": [0.5]}', "box must be"),
            ('{"video_id": "v", "frame": 0, "boxes": [[0,0,1,1]], "objectness": [7]}', "line 1"),
        ]
        for content, pattern in cases:
            path = tmp_path / "bad.jsonl"
            path.write_text(content + "\n")
            with pytest.raises(FormatError, match=pattern):
                read_proposals(path)
