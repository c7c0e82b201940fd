"""Synthetic stand-in for the camera localiser: noisy, quantised, lossy poses."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import RobotState

PIXEL_SIZE_MM = 92.0 / 1020.0


@dataclass(frozen=True)
class SensorConfig:
    rate: float = 10.0  # Hz
    sigma_pos: float = 0.09  # mm
    sigma_heading: float = 0.02  # rad
    dropout_prob: float = 0.0
    latency_samples: int = 0
    seed: int = 0
    quantize: bool = True
    pixel_size: float = PIXEL_SIZE_MM

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.sigma_pos < 0 or self.sigma_heading < 0:
            raise ValueError("sigmas must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.latency_samples < 0:
            raise ValueError("latency_samples must be >= 0")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class PoseMeasurement:
    position: np.ndarray  # mm
    heading: float
    t: float
    valid: bool


def measure(state: RobotState, cfg: SensorConfig, rng: np.random.Generator) -> PoseMeasurement:
    """One pose sample.  Always consumes four normal/uniform draws so the
    random stream does not depend on which samples drop out."""
    noise = rng.standard_normal(3)
    u = rng.random()
    pos = 1000.0 * state.position + cfg.sigma_pos * noise[:2]
    if cfg.quantize:
        pos = np.round(pos / cfg.pixel_size) * cfg.pixel_size
    heading = state.heading + cfg.sigma_heading * noise[2]
    return PoseMeasurement(pos, float(heading), state.t, bool(u >= cfg.dropout_prob))


class Sensor:
    """Seeded measurement stream with an optional fixed delay in samples."""

    def __init__(self, cfg: SensorConfig, seed: int | None = None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self._queue = deque()

    def __call__(self, state: RobotState) -> PoseMeasurement:
        m = measure(state, self.cfg, self.rng)
        if self.cfg.latency_samples == 0:
            return m
        self._queue.append(m)
        if len(self._queue) <= self.cfg.latency_samples:
            # nothing has arrived yet
            return PoseMeasurement(m.position, m.heading, m.t, False)
        return self._queue.popleft()


class VelocityEstimator:
    """First differences of valid positions, averaged over the last two."""

    def __init__(self):
        self._last = None  # (t, position)
        self._raw = deque(maxlen=2)
        self.estimate = np.zeros(2)

    def update(self, m: PoseMeasurement) -> np.ndarray:
        if not m.valid:
            return self.estimate
        if self._last is not None and m.t > self._last[0]:
            self._raw.append((m.position - self._last[1]) / (m.t - self._last[0]))
            self.estimate = np.mean(self._raw, axis=0)
        self._last = (m.t, m.position.copy())
        return self.estimate
