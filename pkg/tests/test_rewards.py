import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from playbyear.rewards import (
    EPS,
    REWARD_KINDS,
    get_reward_fn,
    hellinger,
    reward_combined,
    reward_cosine,
    reward_neg_l1,
    reward_neg_l2,
)

nonneg_vectors = st.lists(
    st.floats(0.0, 1e4, allow_nan=False, allow_infinity=False), min_size=1, max_size=8
)


# Independent straightforward re-implementations (pure python math).
def brute_l2(x, y):
    return -math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))


def brute_l1(x, y):
    return -sum(abs(a - b) for a, b in zip(x, y))


def brute_cosine(x, y):
    nx = math.sqrt(sum(a * a for a in x))
    ny = math.sqrt(sum(b * b for b in y))
    if nx < EPS or ny < EPS:
        return 0.0
    return sum(a * b for a, b in zip(x, y)) / (nx * ny)


def brute_hellinger(u, v):
    su, sv = sum(u), sum(v)
    if su < EPS and sv < EPS:
        return 0.0
    if su < EPS or sv < EPS:
        return 1.0
    acc = sum((math.sqrt(a / su) - math.sqrt(b / sv)) ** 2 for a, b in zip(u, v))
    return math.sqrt(acc) / math.sqrt(2.0)


def brute_combined(x, y):
    return max(brute_cosine(x, y), 1.0 - brute_hellinger(x, y))


BRUTE = {
    "neg_l2": brute_l2,
    "neg_l1": brute_l1,
    "cosine": brute_cosine,
    "combined_hellinger_cosine": brute_combined,
}


class TestFrozenValues:
    def test_l2_identity_and_example(self):
        assert reward_neg_l2([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert reward_neg_l2([3.0, 4.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(-5.0)

    def test_l1_example(self):
        assert reward_neg_l1([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert reward_neg_l1([1.0, 2.0], [0.0, 0.0]) == pytest.approx(-3.0)

    def test_cosine_examples(self):
        assert reward_cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
        assert reward_cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert reward_cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.70711, abs=1e-5)

    def test_hellinger_examples(self):
        assert hellinger([1.0, 0.0], [1.0, 0.0]) == 0.0
        assert hellinger([2.0, 3.0], [2.0, 3.0]) == pytest.approx(0.0, abs=1e-12)
        assert hellinger([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
        assert hellinger([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.54120, abs=1e-4)

    def test_combined_examples(self):
        assert reward_combined([1.0, 1.0], [1.0, 1.0]) == 1.0
        assert reward_combined([1.0, 0.0], [0.0, 1.0]) == 0.0
        # cosine branch (0.70711) beats the distance branch (~0.4588)
        assert reward_combined([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.70711, abs=1e-4)
        assert 1.0 - hellinger([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.4588, abs=1e-4)


class TestSilenceConventions:
    def test_cosine_silence_is_zero(self):
        zero = np.zeros(4)
        loud = np.array([1.0, 2.0, 0.0, 0.0])
        assert reward_cosine(zero, loud) == 0.0
        assert reward_cosine(loud, zero) == 0.0
        assert reward_cosine(zero, zero) == 0.0

    def test_hellinger_silence(self):
        zero = np.zeros(3)
        loud = np.array([1.0, 0.0, 1.0])
        assert hellinger(zero, zero) == 0.0
        assert hellinger(zero, loud) == 1.0
        assert hellinger(loud, zero) == 1.0

    def test_combined_silence(self):
        zero = np.zeros(3)
        loud = np.array([0.5, 1.0, 0.0])
        assert reward_combined(zero, zero) == 1.0  # rests rewarded
        assert reward_combined(zero, loud) == 0.0
        assert reward_combined(loud, zero) == 0.0


class TestErrors:
    @pytest.mark.parametrize("fn", list(REWARD_KINDS.values()))
    def test_length_mismatch(self, fn):
        with pytest.raises(ValueError):
            fn(np.ones(3), np.ones(4))

    def test_hellinger_negative_entries(self):
        with pytest.raises(ValueError):
            hellinger([-1.0, 1.0], [1.0, 0.0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            get_reward_fn("manhattan")


class TestMetricAxiomsOnTriples:
    def test_l1_l2_are_metrics_on_random_triples(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            x, y, z = rng.random((3, 5))
            for fn in (reward_neg_l1, reward_neg_l2):
                dxy, dyz, dxz = -fn(x, y), -fn(y, z), -fn(x, z)
                assert dxy >= 0 and dxz >= 0 and dyz >= 0
                assert dxz <= dxy + dyz + 1e-12  # triangle inequality
                assert dxy == pytest.approx(-fn(y, x))  # symmetry
        assert -reward_neg_l1(x, x) == 0.0


@given(nonneg_vectors)
@settings(max_examples=60, deadline=None)
def test_ranges_and_self_similarity(xs):
    x = np.array(xs)
    assert reward_neg_l2(x, x) == 0.0
    assert reward_neg_l1(x, x) == 0.0
    c = reward_cosine(x, x)
    h = hellinger(x, x)
    r = reward_combined(x, x)
    assert 0.0 <= c <= 1.0 and 0.0 <= h <= 1.0 and 0.0 <= r <= 1.0
    if np.linalg.norm(x) >= EPS:
        assert c == pytest.approx(1.0)
        assert h == pytest.approx(0.0, abs=1e-7)
        assert r == pytest.approx(1.0)


@given(nonneg_vectors, st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_symmetry_and_bounds_random_pairs(xs, seed):
    x = np.array(xs)
    y = np.random.default_rng(seed).random(len(x)) * 10.0
    for name, fn in REWARD_KINDS.items():
        a, b = fn(x, y), fn(y, x)
        assert a == pytest.approx(b, abs=1e-12)
        if name in ("cosine", "combined_hellinger_cosine"):
            assert 0.0 <= a <= 1.0
        else:
            assert a <= 0.0
    hv = hellinger(x, y)
    assert 0.0 <= hv <= 1.0
    assert hellinger(y, x) == pytest.approx(hv, abs=1e-12)


def test_scale_invariance_and_l2_scale_sensitivity():
    rng = np.random.default_rng(5)
    x = rng.random(6) + 0.1
    y = rng.random(6) + 0.1
    for alpha in (0.25, 3.0, 117.0):
        assert reward_cosine(alpha * x, y) == pytest.approx(reward_cosine(x, y), abs=1e-12)
        assert hellinger(alpha * x, y) == pytest.approx(hellinger(x, y), abs=1e-10)
    # neg_l2 is not scale invariant
    assert reward_neg_l2(2.0 * x, y) != pytest.approx(reward_neg_l2(x, y))


def test_maximum_at_identity_against_perturbations():
    rng = np.random.default_rng(9)
    x = rng.random(5) + 0.5
    for name, fn in REWARD_KINDS.items():
        best = fn(x, x)
        for _ in range(50):
            other = np.abs(x + rng.normal(scale=0.3, size=5))
            assert fn(x, other) <= best + 1e-9


def test_brute_force_equivalence():
    rng = np.random.default_rng(1234)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        x = rng.random(n) * rng.choice([0.0, 1.0, 100.0])
        y = rng.random(n) * rng.choice([0.0, 1.0, 100.0])
        for name, fn in REWARD_KINDS.items():
            assert fn(x, y) == pytest.approx(BRUTE[name](list(x), list(y)), abs=1e-10)
        assert hellinger(x, y) == pytest.approx(brute_hellinger(list(x), list(y)), abs=1e-10)
