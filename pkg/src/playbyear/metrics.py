"""Framewise transcription evaluation and note extraction.

Evaluation only: nothing here ever feeds back into the agent's observations.
"""

from dataclasses import dataclass

import numpy as np

from .env import NoteEvent


@dataclass
class FrameCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def update_counts(counts: FrameCounts, predicted, truth) -> FrameCounts:
    """Accumulate key-wise hits and misses for one frame. True negatives
    (both silent) are not counted."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    p = predicted != 0
    t = truth != 0
    counts.tp += int(np.sum(p & t))
    counts.fp += int(np.sum(p & ~t))
    counts.fn += int(np.sum(~p & t))
    return counts


def prf(counts: FrameCounts):
    """(precision, recall, F1); every 0/0 is defined as 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def extract_notes(keyboard_trajectory, base_pitch: int) -> list:
    """Turn a (frames, keys) binary trajectory into note events.

    Each maximal run of consecutive 1s on a key becomes one note spanning
    [run_start, run_end) with fixed velocity 100.
    """
    traj = np.asarray(keyboard_trajectory)
    if traj.ndim != 2:
        traj = np.atleast_2d(traj)
    n_frames, n_keys = traj.shape
    notes = []
    for key in range(n_keys):
        col = np.concatenate([[0], (traj[:, key] != 0).astype(np.int8), [0]])
        edges = np.flatnonzero(np.diff(col))
        for onset, offset in zip(edges[::2], edges[1::2]):
            notes.append(NoteEvent(int(onset), int(offset), base_pitch + key, 100))
    notes.sort(key=lambda n: (n.onset_frame, n.pitch))
    return notes
