import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from warpfit.seqcore import (
    ParseError,
    UsageError,
    check_sequence,
    pairwise_cost,
    read_sequence,
    soft_min,
    write_sequence,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
value_lists = st.lists(finite, min_size=1, max_size=8)
gammas = st.floats(1e-3, 10.0)


def test_soft_min_hard_branch():
    assert soft_min([1, 2, 3], 0) == 1.0


def test_soft_min_equal_inputs():
    assert soft_min([0, 0], 1) == pytest.approx(-math.log(2), abs=1e-15)


def test_soft_min_matches_extended_precision():
    # 1 - 0.5 * ln(1 + e^-2), evaluated with mpmath at 40 digits
    assert soft_min([1, 2], 0.5) == pytest.approx(0.93653599447851375178, abs=1e-15)


def test_soft_min_infinities():
    assert soft_min([np.inf, 2.0, np.inf], 0.7) == 2.0
    assert soft_min([np.inf, np.inf], 1.0) == np.inf
    assert soft_min([np.inf, 1.0, 1.0], 1.0) == pytest.approx(1 - math.log(2))


def test_soft_min_extreme_magnitudes():
    assert soft_min([1e300, 1e300], 1.0) == pytest.approx(1e300)
    assert soft_min([-1e300, 1e300], 1.0) == -1e300
    assert math.isfinite(soft_min([1e-300, 2e-300], 1e-3))


def test_soft_min_errors():
    with pytest.raises(UsageError):
        soft_min([], 1.0)
    with pytest.raises(UsageError):
        soft_min([1.0], -1.0)
    with pytest.raises(UsageError):
        soft_min([np.nan], 1.0)


@given(value_lists, gammas)
def test_soft_min_lower_bound_and_gap(values, gamma):
    lo = min(values)
    s = soft_min(values, gamma)
    assert s <= lo + 1e-9 * max(1.0, abs(lo))
    assert lo - s <= gamma * math.log(len(values)) + 1e-9 * max(1.0, abs(lo))


@given(value_lists, gammas, finite)
def test_soft_min_shift_equivariance(values, gamma, c):
    shifted = soft_min([v + c for v in values], gamma)
    assert shifted == pytest.approx(soft_min(values, gamma) + c, abs=1e-9 * (1 + abs(c) + max(map(abs, values))))


def test_soft_min_converges_to_min():
    v = [3.0, 1.0, 2.5]
    assert abs(soft_min(v, 1e-9) - 1.0) < 1e-8


def test_pairwise_cost_examples():
    np.testing.assert_array_equal(pairwise_cost([[0], [1], [2]], [[0], [2]]), [[0, 2], [1, 1], [2, 0]])
    np.testing.assert_array_equal(pairwise_cost([[3, 4]], [[0, 0]]), [[5]])
    np.testing.assert_array_equal(pairwise_cost([[3, 4]], [[0, 0]], "sqeuclidean"), [[25]])


def test_pairwise_cost_zero_diagonal(rng):
    a = rng.normal(size=(6, 3))
    assert np.all(np.diag(pairwise_cost(a, a)) == 0)


@settings(max_examples=50)
@given(arrays(np.float64, (4, 2), elements=finite), arrays(np.float64, (3, 2), elements=finite))
def test_pairwise_cost_symmetry(a, b):
    np.testing.assert_array_equal(pairwise_cost(a, b), pairwise_cost(b, a).T)


def test_pairwise_cost_errors():
    with pytest.raises(UsageError, match="dimension mismatch"):
        pairwise_cost([[0, 1]], [[0]])
    with pytest.raises(UsageError):
        pairwise_cost([[0]], [[1]], "manhattan")


def test_check_sequence_rejects_nonfinite():
    with pytest.raises(UsageError):
        check_sequence([[0.0, np.inf]])
    with pytest.raises(UsageError):
        check_sequence(np.zeros((0, 2)))
    assert check_sequence([1.0, 2.0]).shape == (2, 1)


def test_read_example(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("0,1\n2,3\n")
    np.testing.assert_array_equal(read_sequence(p), [[0, 1], [2, 3]])


def test_round_trip_exact(tmp_path, rng):
    seq = rng.normal(size=(50, 7)) * 10.0 ** rng.integers(-8, 8, size=(50, 7))
    p = tmp_path / "s.csv"
    write_sequence(seq, p)
    back = read_sequence(p)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, seq)
    assert p.read_bytes().endswith(b"\n") and b"\r" not in p.read_bytes()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_property(tmp_path_factory, seq):
    p = tmp_path_factory.mktemp("rt") / "s.csv"
    write_sequence(seq, p)
    np.testing.assert_array_equal(read_sequence(p), seq)


def test_parse_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,1\n2\n")
    with pytest.raises(ParseError) as exc:
        read_sequence(p)
    assert exc.value.line == 2
    p.write_text("")
    with pytest.raises(ParseError, match="empty"):
        read_sequence(p)
    p.write_text("0,1\n2,x\n")
    with pytest.raises(ParseError) as exc:
        read_sequence(p)
    assert exc.value.line == 2
