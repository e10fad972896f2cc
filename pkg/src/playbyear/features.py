"""Spectrogram features and observation assembly.

Frames are columns of 2-D arrays (n_bins rows, one column per frame index).
The observation is (context window, its time difference, keyboard vector).
"""

from dataclasses import dataclass

import numpy as np

WINDOW_SIZE = 1024
HOP_SIZE = 512
N_BINS = WINDOW_SIZE // 2 + 1


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


_HANN_CACHE: dict = {}


def _hann(n: int) -> np.ndarray:
    if n not in _HANN_CACHE:
        _HANN_CACHE[n] = hann_window(n)
    return _HANN_CACHE[n]


def window_magnitude(samples: np.ndarray) -> np.ndarray:
    """Magnitude spectrum of one analysis window (Hann applied)."""
    samples = np.asarray(samples, dtype=float)
    return np.abs(np.fft.rfft(samples * _hann(len(samples))))


def stft_magnitude(samples: np.ndarray, window_size: int = WINDOW_SIZE, hop_size: int = HOP_SIZE) -> np.ndarray:
    """Hann-windowed magnitude spectrogram, shape (window_size // 2 + 1, n_frames).

    Frame f covers samples [f * hop_size, f * hop_size + window_size).
    """
    if window_size <= 0 or window_size & (window_size - 1) != 0:
        raise ValueError(f"window_size {window_size} is not a power of two")
    if hop_size <= 0:
        raise ValueError("hop_size must be positive")
    samples = np.asarray(samples, dtype=float)
    if len(samples) < window_size:
        raise ValueError(
            f"buffer of {len(samples)} samples shorter than window {window_size}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(samples, window_size)[::hop_size]
    spec = np.abs(np.fft.rfft(frames * _hann(window_size), axis=1))
    return spec.T


def log_compress(frames: np.ndarray) -> np.ndarray:
    """log(1 + x) dynamic-range compression for model input."""
    return np.log1p(frames)


@dataclass
class EnvState:
    """Observation tuple: context window, its finite time difference, keyboard."""

    world_context: np.ndarray  # (n_bins, 2c + 1)
    delta: np.ndarray  # (n_bins, 2c + 1)
    keyboard: np.ndarray  # (K,) binary

    @property
    def context_radius(self) -> int:
        return (self.world_context.shape[1] - 1) // 2


def assemble_state(world_frames: np.ndarray, t: int, c: int, keyboard: np.ndarray) -> EnvState:
    """Build the observation centered on frame t.

    The window holds frames t-c .. t+c; indices outside the sequence are
    zero-padded. The difference matrix is the first-order time difference of
    the padded sequence, so its column j is window[j] - frame(t-c+j-1).
    """
    if c < 0:
        raise ValueError("context radius must be non-negative")
    world_frames = np.asarray(world_frames)
    n_bins, n_frames = world_frames.shape
    # One extra column on the left so the difference at window column 0 sees
    # the frame just before the window.
    ext = np.zeros((n_bins, 2 * c + 2))
    for j in range(2 * c + 2):
        src = t - c - 1 + j
        if 0 <= src < n_frames:
            ext[:, j] = world_frames[:, src]
    window = ext[:, 1:]
    delta = ext[:, 1:] - ext[:, :-1]
    return EnvState(window, delta, np.array(keyboard, dtype=np.int8, copy=True))


def flatten_state(state: EnvState) -> np.ndarray:
    """Deterministic layout: window columns in time order, then difference
    columns, then the keyboard vector."""
    return np.concatenate(
        [
            state.world_context.T.ravel(),
            state.delta.T.ravel(),
            state.keyboard.astype(float),
        ]
    )


def unflatten_state(vec: np.ndarray, n_bins: int, c: int, n_keys: int) -> EnvState:
    """Inverse of flatten_state for the documented layout."""
    n_cols = 2 * c + 1
    block = n_bins * n_cols
    if len(vec) != 2 * block + n_keys:
        raise ValueError(f"vector length {len(vec)} does not match layout")
    window = vec[:block].reshape(n_cols, n_bins).T
    delta = vec[block : 2 * block].reshape(n_cols, n_bins).T
    keyboard = (vec[2 * block :] != 0).astype(np.int8)
    return EnvState(window, delta, keyboard)


def window_stacks(world_frames: np.ndarray, c: int):
    """Per-frame flattened window and difference rows for a whole sequence.

    Returns (S_x, S_dx), each of shape (n_frames, (2c + 1) * n_bins); row t
    equals the corresponding segment of flatten_state(assemble_state(.., t)).
    Used to batch model input preparation over an episode.
    """
    world_frames = np.asarray(world_frames)
    n_bins, n_frames = world_frames.shape
    ext = np.zeros((n_bins, n_frames + 2 * c + 2))
    ext[:, c + 1 : c + 1 + n_frames] = world_frames
    dext = ext[:, 1:] - ext[:, :-1]  # aligned with ext[:, 1:]
    xt = ext[:, 1:].T  # row g is frame g - c
    dxt = dext.T
    win = np.lib.stride_tricks.sliding_window_view(xt, (2 * c + 1, n_bins))
    dwin = np.lib.stride_tricks.sliding_window_view(dxt, (2 * c + 1, n_bins))
    s_x = win[:n_frames, 0].reshape(n_frames, -1)
    s_dx = dwin[:n_frames, 0].reshape(n_frames, -1)
    return np.ascontiguousarray(s_x), np.ascontiguousarray(s_dx)
