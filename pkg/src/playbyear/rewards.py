"""Audio-similarity rewards comparing two magnitude spectrum frames.

All measures are symmetric. The bounded measures treat silence specially:
silence against silence is maximally similar, silence against sound
maximally dissimilar.
"""

import numpy as np

EPS = 1e-8


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"frame shapes differ: {x.shape} vs {y.shape}")
    return x, y


def reward_neg_l2(x, y) -> float:
    """Negative Euclidean distance; 0 only for identical frames."""
    x, y = _check_pair(x, y)
    return -float(np.linalg.norm(x - y))


def reward_neg_l1(x, y) -> float:
    """Negative sum of absolute differences."""
    x, y = _check_pair(x, y)
    return -float(np.sum(np.abs(x - y)))


def reward_cosine(x, y) -> float:
    """Cosine similarity, 0 when either frame is (near) silent."""
    x, y = _check_pair(x, y)
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx < EPS or ny < EPS:
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), 0.0, 1.0))


def hellinger(u, v) -> float:
    """Distance in [0, 1] between frames viewed as discrete distributions.

    Each frame is normalized to sum 1 first. Two silent frames have distance
    0; exactly one silent frame gives the maximal distance 1.
    """
    u, v = _check_pair(u, v)
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("hellinger requires non-negative entries")
    su = float(np.sum(u))
    sv = float(np.sum(v))
    if su < EPS and sv < EPS:
        return 0.0
    if su < EPS or sv < EPS:
        return 1.0
    diff = np.sqrt(u / su) - np.sqrt(v / sv)
    return float(np.clip(np.linalg.norm(diff) / np.sqrt(2.0), 0.0, 1.0))


def reward_combined(x, y) -> float:
    """max(cosine, 1 - hellinger): the two terms cover each other's blind spots."""
    return max(reward_cosine(x, y), 1.0 - hellinger(x, y))


REWARD_KINDS = {
    "neg_l2": reward_neg_l2,
    "neg_l1": reward_neg_l1,
    "cosine": reward_cosine,
    "combined_hellinger_cosine": reward_combined,
}

# Per-frame value the measure attains when the agent frame equals the world
# frame (used by the perfect-play checks).
KIND_MAXIMUM = {
    "neg_l2": 0.0,
    "neg_l1": 0.0,
    "cosine": 1.0,
    "combined_hellinger_cosine": 1.0,
}


def get_reward_fn(name: str):
    if name not in REWARD_KINDS:
        raise ValueError(f"unknown reward kind {name!r}; have {sorted(REWARD_KINDS)}")
    return REWARD_KINDS[name]
