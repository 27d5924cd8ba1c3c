import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imucs.metrics import evaluate, frame_mse, mse, snr_db, time_decode


def test_mse_values():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([0.0, 0.0], [1.0, -3.0]) == 5.0
    with pytest.raises(ValueError, match="length mismatch"):
        mse([1.0], [1.0, 2.0])


def test_frame_mse_rows():
    np.testing.assert_array_equal(frame_mse([[0, 0], [1, 1]], [[1, 1], [1, 3]]), [1.0, 2.0])


def test_snr_db_values():
    # mean power 1, sigma 0.1 -> 20 dB
    assert snr_db(np.ones(10), 0.1) == pytest.approx(20.0)
    assert snr_db(np.ones(3), 0.0) == math.inf
    assert snr_db(np.zeros(3), 0.1) == -math.inf
    with pytest.raises(ValueError):
        snr_db(np.ones(3), -1.0)


def test_evaluate_report():
    X = np.zeros((4, 3))
    Xh = np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]])
    Y = np.array([[0.1, 0.1], [0.1, 0.1], [5.0, 0.0], [0.0, 0.0]])
    rep = evaluate("x", X, Xh, Y, sigma_N=0.1, P_T=1.0)
    assert rep.mse == pytest.approx(1 / 12)
    assert rep.per_frame_mse["max"] == pytest.approx(1 / 3)
    # only row 2 has ||y||/m = 2.5 > 1
    assert rep.power_violation_rate == 0.25
    assert rep.m == 2 and rep.frames == 4
    json.loads(rep.to_json())


def test_time_decode_counts_calls():
    calls = []

    def dec(Y):
        calls.append(len(Y))
        return Y

    rep = time_decode(dec, np.zeros((7, 3)), runs=5, warmup=2, method="id")
    assert len(calls) == 7 and rep.batch == 7 and rep.input_samples == 21
    assert rep.median_seconds == sorted(rep.times)[2]
    assert rep.runs == 5 and rep.warmup_runs == 2
    assert "clock" in rep.environment


def test_time_decode_validation():
    with pytest.raises(ValueError):
        time_decode(lambda Y: Y, np.zeros((2, 2)), runs=4)
    with pytest.raises(ValueError):
        time_decode(lambda Y: Y, np.zeros((2, 2)), warmup=1)
    with pytest.raises(ValueError, match="empty batch"):
        time_decode(lambda Y: Y, [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_mse_nonnegative_and_zero_on_self(vals):
    x = np.asarray(vals)
    assert mse(x, x) == 0.0
    assert mse(x, x + 1.0) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_snr_scaling(a, sigma):
    # scaling the signal by a shifts SNR by 20 log10 a
    y = np.array([1.0, -2.0, 0.5])
    assert snr_db(a * y, sigma) - snr_db(y, sigma) == pytest.approx(20 * math.log10(a), abs=1e-9)
