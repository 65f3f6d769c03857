import math

import pytest

from smcibm.metrics import mae, mean_and_stderr


def test_mae_examples():
    ref = {(0, 1): 0.2, (1, 2): -0.1}
    assert mae(ref, dict(ref)) == 0.0
    assert mae({"a": 0.0, "b": 0.0}, {"a": 0.3, "b": 0.3}) == pytest.approx(0.3)
    assert mae({"a": 1.0, "b": 0.0}, {"a": 0.0, "b": 1.0}) == 1.0
    assert mae({}, {}) == 0.0


def test_mae_key_mismatch():
    with pytest.raises(ValueError):
        mae({"a": 1.0}, {"b": 1.0})


def test_mean_and_stderr():
    mean, stderr = mean_and_stderr([1.0, 2.0, 3.0, float("nan")])
    assert mean == 2.0
    assert stderr == pytest.approx(1.0 / math.sqrt(3))
    assert mean_and_stderr([4.0]) == (4.0, 0.0)
    mean, stderr = mean_and_stderr([float("nan")])
    assert math.isnan(mean) and math.isnan(stderr)
