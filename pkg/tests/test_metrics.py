import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mosbench.core import MOSLabel, ValidationError
from mosbench.metrics import outlier_ratio, pcc, perror, rmse


# Plain-loop references, written from the formula definitions only.
def loop_perror(mos, pred):
    return [mos[i] - pred[i] for i in range(len(mos))]


def loop_rmse(mos, pred):
    total = 0.0
    for i in range(len(mos)):
        total += (mos[i] - pred[i]) ** 2
    return math.sqrt(total / (len(mos) - 1))


def loop_pcc(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((a[i] - ma) * (b[i] - mb) for i in range(n))
    va = sum((a[i] - ma) ** 2 for i in range(n))
    vb = sum((b[i] - mb) ** 2 for i in range(n))
    return cov / math.sqrt(va * vb)


def loop_or(mos, ci, pred):
    count = 0
    for i in range(len(mos)):
        if abs(mos[i] - pred[i]) > ci[i]:
            count += 1
    return count / len(mos)


def labels_for(mos, ci):
    return [MOSLabel(f"c{i}", m, c, 10) for i, (m, c) in enumerate(zip(mos, ci))]


@pytest.mark.parametrize("x, y, expected", [
    ([3.0], [3.0], [0.0]),
    ([4.0, 2.0], [3.5, 2.5], [0.5, -0.5]),
    ([1, 2, 3], [2, 2, 2], [-1, 0, 1]),
])
def test_perror_examples(x, y, expected):
    np.testing.assert_array_equal(perror(x, y), expected)


def test_perror_length_mismatch():
    with pytest.raises(ValidationError, match="length"):
        perror([1, 2], [1])


def test_rmse_examples():
    assert rmse([2, 3, 4, 1, 5], [2, 3, 4, 1, 5]) == 0.0
    assert rmse([3, 3], [4, 4]) == math.sqrt(2.0)
    assert rmse([1, 2, 3], [2, 2, 2]) == 1.0


def test_rmse_denominator_switch():
    assert rmse([3, 3], [4, 4], ddof=0) == 1.0


def test_rmse_errors():
    with pytest.raises(ValidationError):
        rmse([3.0], [3.0])
    with pytest.raises(ValidationError, match="non-finite"):
        rmse([1.0, np.inf], [1.0, 2.0])


def test_pcc_examples():
    x = np.array([1.0, 2.5, 3.0, 4.2, 4.9])
    assert pcc(x, 2 * x - 1) == pytest.approx(1.0)
    assert pcc(x, -x) == pytest.approx(-1.0)
    assert pcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)


def test_pcc_zero_variance_raises():
    with pytest.raises(ValidationError, match="zero variance"):
        pcc([1, 2, 3], [2, 2, 2])
    with pytest.raises(ValidationError, match="zero variance"):
        pcc([3, 3], [1, 2])


def test_outlier_ratio_examples():
    mos = [3.0, 3.0, 3.0, 3.0]
    ci = [0.5] * 4
    assert outlier_ratio(labels_for(mos, ci), [3.2, 2.8, 3.2, 2.8]) == 0.0
    assert outlier_ratio(labels_for(mos, ci), [3.6, 3.2, 2.8, 3.2]) == 0.25
    # exactly on the interval edge is not an outlier
    assert outlier_ratio(labels_for([2.0, 4.0], [0.5, 0.25]), [2.5, 3.75]) == 0.0


def test_outlier_ratio_missing_ci():
    class Bare:
        clip_id, mos, ci95 = "a", 3.0, None

    with pytest.raises(ValidationError, match="ci95"):
        outlier_ratio([Bare()], [3.0])


def test_random_instances_match_loops():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 11))
        mos = rng.uniform(1, 5, n)
        pred = rng.uniform(0, 6, n)
        ci = rng.uniform(0, 1.5, n)
        assert np.max(np.abs(perror(mos, pred) - loop_perror(mos, pred))) <= 1e-12
        assert abs(rmse(mos, pred) - loop_rmse(mos, pred)) <= 1e-12
        assert abs(pcc(mos, pred) - loop_pcc(mos, pred)) <= 1e-12
        assert abs(outlier_ratio(labels_for(mos, ci), pred) - loop_or(mos, ci, pred)) <= 1e-12


vectors = st.lists(st.floats(1.0, 5.0), min_size=2, max_size=30)


@given(vectors, st.data())
def test_rmse_symmetric_nonnegative(x, data):
    y = data.draw(st.lists(st.floats(-10, 10), min_size=len(x), max_size=len(x)))
    assert rmse(x, y) == pytest.approx(rmse(y, x))
    assert rmse(x, y) >= 0
    assert (rmse(x, y) == 0) == (list(map(float, x)) == list(map(float, y)))


@settings(max_examples=100)
@given(vectors, st.floats(0.1, 10), st.floats(-5, 5), st.data())
def test_pcc_affine_behaviour(x, scale, shift, data):
    y = np.array(data.draw(st.lists(st.floats(1, 5), min_size=len(x), max_size=len(x))))
    x = np.array(x)
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    r = pcc(x, y)
    assert pcc(x, scale * y + shift) == pytest.approx(r, abs=1e-9)
    assert pcc(scale * x + shift, y) == pytest.approx(r, abs=1e-9)
    assert pcc(x, -scale * y) == pytest.approx(-r, abs=1e-9)


@given(st.lists(st.tuples(st.floats(1, 5), st.floats(0, 2), st.floats(0, 6)), min_size=1, max_size=30),
       st.floats(0, 1))
def test_outlier_ratio_monotone_in_ci(rows, bump):
    mos, ci, pred = (list(c) for c in zip(*rows))
    before = outlier_ratio(labels_for(mos, ci), pred)
    after = outlier_ratio(labels_for(mos, [c + bump for c in ci]), pred)
    assert 0.0 <= after <= before <= 1.0
