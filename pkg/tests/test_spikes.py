import numpy as np
import pytest

from pronto.linalg import Subspace
from pronto.spikes import SpikeDetector, reject_job

from oracles import spike_marks_offline


def canonical_subspace(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    d = max(len(sigma) + 1, 4)
    return Subspace(np.eye(d)[:, : len(sigma)], sigma)


def feed(detector, values):
    out = []
    for v in np.atleast_2d(values):
        out.append(detector.detect(v))
    return np.array(out)


def test_constant_signal_never_marks():
    det = SpikeDetector(channels=2, lag=10)
    marks = feed(det, np.full((30, 2), 7.5))
    assert np.all(marks == 0)


def test_forced_positive_spike_after_warmup():
    det = SpikeDetector(channels=1, lag=10)
    feed(det, np.zeros((10, 1)))
    assert det.detect(np.array([100.0]))[0] == 1


def test_forced_negative_spike_dampens_history():
    det = SpikeDetector(channels=1, lag=10, influence=0.5)
    feed(det, np.zeros((10, 1)))
    mark = det.detect(np.array([-50.0]))[0]
    assert mark == -1
    # dampened entry is the convex mix of raw value and previous entry
    assert det.dampened[0, -1] == pytest.approx(0.5 * -50.0 + 0.5 * 0.0)


def test_positive_spike_keeps_raw_value_by_default():
    det = SpikeDetector(channels=1, lag=10)
    feed(det, np.zeros((10, 1)))
    det.detect(np.array([80.0]))
    assert det.dampened[0, -1] == pytest.approx(80.0)


def test_symmetric_dampening_switch():
    det = SpikeDetector(channels=1, lag=10, symmetric_dampening=True)
    feed(det, np.zeros((10, 1)))
    det.detect(np.array([80.0]))
    assert det.dampened[0, -1] == pytest.approx(40.0)


def test_warmup_lag_steps_all_zero():
    rng = np.random.default_rng(211)
    det = SpikeDetector(channels=3, lag=10)
    values = rng.normal(0, 1, size=(10, 3)) * 100
    assert np.all(feed(det, values) == 0)


def test_determinism():
    rng = np.random.default_rng(223)
    values = rng.normal(0, 1, size=(500, 2))
    values[100] += 30
    values[300] -= 30
    a = feed(SpikeDetector(channels=2), values)
    b = feed(SpikeDetector(channels=2), values)
    assert np.array_equal(a, b)


def test_resize_keeps_old_channels_and_warms_new():
    det = SpikeDetector(channels=2, lag=5)
    feed(det, np.zeros((5, 2)))
    det.resize(3)
    assert det.channels == 3
    assert np.array_equal(det.fill, [5, 5, 0])
    marks = det.detect(np.array([100.0, 0.0, 100.0]))
    assert marks[0] == 1  # survivor keeps its window
    assert marks[2] == 0  # newcomer still warming up
    det.resize(1)
    assert det.channels == 1
    assert det.fill[0] == 5


def test_streaming_matches_offline_reference():
    rng = np.random.default_rng(229)
    for trial in range(5):
        steps = rng.standard_normal((2000, 3))
        bursts = rng.choice(2000, size=20, replace=False)
        signal = np.cumsum(steps * 0.1, axis=0)
        signal[bursts] += rng.choice([-1, 1], size=(20, 1)) * rng.uniform(3, 10, (20, 1))
        det = SpikeDetector(channels=3)
        streaming = feed(det, signal)
        offline = spike_marks_offline(signal)
        assert np.array_equal(streaming, offline)


def test_streaming_matches_offline_reference_symmetric():
    rng = np.random.default_rng(233)
    signal = np.cumsum(rng.standard_normal((1500, 2)) * 0.2, axis=0)
    signal[rng.choice(1500, 15, replace=False)] += 8
    det = SpikeDetector(channels=2, symmetric_dampening=True)
    streaming = feed(det, signal)
    offline = spike_marks_offline(signal, symmetric_dampening=True)
    assert np.array_equal(streaming, offline)


def test_detect_rejects_bad_input():
    det = SpikeDetector(channels=2)
    with pytest.raises(ValueError):
        det.detect(np.array([1.0]))
    with pytest.raises(ValueError):
        det.detect(np.array([1.0, np.nan]))


def test_reject_job_warmup_accepts():
    det = SpikeDetector(channels=2)
    sub = canonical_subspace([1.5, 1.0])
    y = np.zeros(4)
    for t in range(10):
        decision = reject_job(det, sub, y, timestep=t)
        assert not decision.reject
        assert decision.weighted_sum == 0.0


def test_reject_job_weighted_sum_examples():
    # single positive mark on the leading component: R = 1.5 -> reject
    det = SpikeDetector(channels=4)
    sub = canonical_subspace([1.5, 1.0, 0.5, 0.2])
    for _ in range(10):
        reject_job(det, sub, np.zeros(5))
    spike = np.zeros(5)
    spike[0] = 100.0
    decision = reject_job(det, sub, spike, threshold=1.0)
    assert decision.reject and decision.weighted_sum == pytest.approx(1.5)
    assert list(decision.marks) == [1, 0, 0, 0]

    # signed cancellation: +1.2 - 0.9 = 0.3 -> accept
    det = SpikeDetector(channels=4)
    sub = canonical_subspace([1.2, 0.9, 0.5, 0.2])
    for _ in range(10):
        reject_job(det, sub, np.zeros(5))
    mixed = np.zeros(5)
    mixed[0] = 100.0
    mixed[1] = -100.0
    decision = reject_job(det, sub, mixed, threshold=1.0)
    assert not decision.reject
    assert decision.weighted_sum == pytest.approx(0.3)
    assert list(decision.marks) == [1, -1, 0, 0]


def test_reject_job_no_marks_accepts():
    det = SpikeDetector(channels=2)
    sub = canonical_subspace([2.0, 1.0])
    for t in range(25):
        decision = reject_job(det, sub, np.zeros(4), timestep=t)
        assert not decision.reject and decision.weighted_sum == 0.0


def test_rejection_monotone_in_singular_values():
    # scaling sigma up never turns a reject into an accept (positive marks)
    for scale in (1.0, 2.0, 10.0):
        det = SpikeDetector(channels=2)
        sub = canonical_subspace(np.array([1.5, 1.0]) * scale)
        for _ in range(10):
            reject_job(det, sub, np.zeros(4))
        spike = np.zeros(4)
        spike[0] = 50.0
        assert reject_job(det, sub, spike).reject


def test_decision_invariant():
    rng = np.random.default_rng(239)
    det = SpikeDetector(channels=2)
    sub = canonical_subspace([1.5, 1.0])
    for t in range(200):
        y = np.zeros(4)
        y[:2] = rng.normal(0, 1, 2)
        if t % 37 == 0:
            y[0] += 20
        decision = reject_job(det, sub, y, threshold=1.0, timestep=t)
        assert decision.reject == (decision.weighted_sum >= 1.0)
