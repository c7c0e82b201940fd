import numpy as np
import pytest

from millibot.dynamics import RobotState
from millibot.sensing import PIXEL_SIZE_MM, PoseMeasurement, Sensor, SensorConfig, VelocityEstimator, measure


def test_pixel_size():
    assert PIXEL_SIZE_MM == pytest.approx(0.0902, abs=1e-4)


def test_noise_free_is_quantised_truth():
    cfg = SensorConfig(sigma_pos=0.0, sigma_heading=0.0)
    rng = np.random.default_rng(0)
    for x, y in [(0.0123456, -0.0077), (0.0, 0.0), (-0.03, 0.041)]:
        m = measure(RobotState(position=np.array([x, y]), heading=0.7), cfg, rng)
        assert m.valid
        truth = np.array([x, y]) * 1000.0
        assert np.allclose(m.position, np.round(truth / PIXEL_SIZE_MM) * PIXEL_SIZE_MM, atol=1e-12)
        assert np.all(np.abs(m.position - truth) <= PIXEL_SIZE_MM / 2 + 1e-12)
        assert m.heading == 0.7


def test_noise_std():
    cfg = SensorConfig(quantize=False)
    s = Sensor(cfg, seed=11)
    st = RobotState(position=np.array([0.01, -0.02]))
    pos = np.array([s(st).position for _ in range(100000)])
    std = (pos - [10.0, -20.0]).std(axis=0)
    assert np.all(np.abs(std / cfg.sigma_pos - 1) < 0.03)


def test_quantised_noise_std_close():
    # quantisation adds roughly pixel^2/12 of variance
    cfg = SensorConfig()
    s = Sensor(cfg, seed=12)
    st = RobotState(position=np.array([0.0031, 0.0047]))
    pos = np.array([s(st).position for _ in range(100000)])
    expected = np.sqrt(cfg.sigma_pos**2 + PIXEL_SIZE_MM**2 / 12)
    assert np.all(np.abs(pos.std(axis=0) / expected - 1) < 0.03)


def test_full_dropout():
    s = Sensor(SensorConfig(dropout_prob=1.0), seed=1)
    assert not any(s(RobotState()).valid for _ in range(1000))


def test_partial_dropout_rate():
    s = Sensor(SensorConfig(dropout_prob=0.2), seed=2)
    valid = np.array([s(RobotState()).valid for _ in range(20000)])
    assert abs((1 - valid.mean()) - 0.2) < 0.01


def test_determinism():
    cfg = SensorConfig(dropout_prob=0.1)
    states = [RobotState(position=np.array([1e-3 * k, -5e-4 * k]), t=0.1 * k) for k in range(200)]
    a = [Sensor(cfg, seed=42)(s) for s in states]
    b = [Sensor(cfg, seed=42)(s) for s in states]
    for ma, mb in zip(a, b):
        assert np.array_equal(ma.position, mb.position)
        assert ma.heading == mb.heading and ma.valid == mb.valid


def test_dropout_does_not_shift_noise_stream():
    # the same seed gives the same positions whatever the dropout rate
    st = RobotState(position=np.array([0.004, 0.001]))
    a = Sensor(SensorConfig(dropout_prob=0.0), seed=5)
    b = Sensor(SensorConfig(dropout_prob=0.5), seed=5)
    for _ in range(100):
        assert np.array_equal(a(st).position, b(st).position)


def test_latency():
    cfg = SensorConfig(sigma_pos=0, sigma_heading=0, quantize=False, latency_samples=2)
    s = Sensor(cfg, seed=0)
    out = [s(RobotState(position=np.array([1e-3 * k, 0.0]), t=0.1 * k)) for k in range(5)]
    assert [m.valid for m in out] == [False, False, True, True, True]
    assert out[2].position[0] == pytest.approx(0.0)
    assert out[4].position[0] == pytest.approx(2.0)


def test_velocity_estimator():
    est = VelocityEstimator()
    pts = [PoseMeasurement(np.array([0.5 * k, -1.0 * k]), 0.0, 0.1 * k, True) for k in range(4)]
    assert np.all(est.update(pts[0]) == 0)
    assert np.allclose(est.update(pts[1]), [5.0, -10.0])
    # dropout holds the estimate
    held = est.update(PoseMeasurement(np.array([99.0, 99.0]), 0.0, 0.2, False))
    assert np.allclose(held, [5.0, -10.0])
    # a gap spans two periods and still gives the right slope
    assert np.allclose(est.update(pts[3]), [5.0, -10.0])


def test_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(rate=0)
    with pytest.raises(ValueError):
        SensorConfig(sigma_pos=-1)
    with pytest.raises(ValueError):
        SensorConfig(dropout_prob=1.5)
