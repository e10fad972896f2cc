import numpy as np
import pytest

from playbyear.env import NoteEvent, WorldScore, truth_matrix
from playbyear.metrics import FrameCounts, extract_notes, prf, update_counts


class TestUpdateCounts:
    def test_perfect_frame(self):
        c = FrameCounts()
        update_counts(c, [1, 0, 1], [1, 0, 1])
        assert (c.tp, c.fp, c.fn) == (2, 0, 0)

    def test_mixed_frame(self):
        c = FrameCounts()
        update_counts(c, [1, 1, 0], [0, 1, 1])
        assert (c.tp, c.fp, c.fn) == (1, 1, 1)

    def test_true_negatives_uncounted(self):
        c = FrameCounts()
        update_counts(c, [0, 0], [0, 0])
        assert (c.tp, c.fp, c.fn) == (0, 0, 0)

    def test_accumulates(self):
        c = FrameCounts()
        update_counts(c, [1], [1])
        update_counts(c, [1], [0])
        update_counts(c, [0], [1])
        assert (c.tp, c.fp, c.fn) == (1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            update_counts(FrameCounts(), [1, 0], [1])


class TestPrf:
    def test_perfect(self):
        assert prf(FrameCounts(tp=2)) == (1.0, 1.0, 1.0)

    def test_balanced_half(self):
        assert prf(FrameCounts(tp=1, fp=1, fn=1)) == (0.5, 0.5, 0.5)

    def test_degenerate_zero(self):
        assert prf(FrameCounts()) == (0.0, 0.0, 0.0)

    def test_precision_recall_asymmetry(self):
        p, r, _ = prf(FrameCounts(tp=8, fp=1, fn=4))
        assert p > r

    def test_brute_force_recount(self):
        rng = np.random.default_rng(77)
        pred = rng.integers(0, 2, size=(40, 6))
        truth = rng.integers(0, 2, size=(40, 6))
        c = FrameCounts()
        for t in range(40):
            update_counts(c, pred[t], truth[t])
        tp = sum(
            int(pred[t, k] and truth[t, k]) for t in range(40) for k in range(6)
        )
        fp = sum(
            int(pred[t, k] and not truth[t, k]) for t in range(40) for k in range(6)
        )
        fn = sum(
            int(not pred[t, k] and truth[t, k]) for t in range(40) for k in range(6)
        )
        assert (c.tp, c.fp, c.fn) == (tp, fp, fn)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        assert prf(c) == (p, r, f)


class TestExtractNotes:
    def test_empty_trajectory(self):
        assert extract_notes(np.zeros((10, 3)), 60) == []

    def test_single_run(self):
        traj = np.zeros((8, 2), dtype=np.int8)
        traj[2:5, 0] = 1  # frames 2, 3, 4
        notes = extract_notes(traj, 60)
        assert notes == [NoteEvent(2, 5, 60, 100)]

    def test_alternating_on_off(self):
        traj = np.array([[1], [0], [1], [0]], dtype=np.int8)
        notes = extract_notes(traj, 64)
        assert notes == [NoteEvent(0, 1, 64, 100), NoteEvent(2, 3, 64, 100)]

    def test_run_reaching_end(self):
        traj = np.array([[0], [1], [1]], dtype=np.int8)
        assert extract_notes(traj, 60) == [NoteEvent(1, 3, 60, 100)]

    def test_round_trip_with_truth_activity(self):
        rng = np.random.default_rng(123)
        traj = (rng.random((60, 12)) < 0.2).astype(np.int8)
        notes = extract_notes(traj, 60)
        poly = int(traj.sum(axis=1).max()) if traj.size else 1
        score = WorldScore(notes, 60, 60, 12, max_polyphony=max(poly, 1))
        assert np.array_equal(truth_matrix(score), traj)
