"""Streaming spike detection over projection signals and the rejection rule.

Each tracked projection is watched by a windowed z-score detector: a value
further than ``z_threshold`` standard deviations from the mean of its recent
dampened history is marked as a spike (+1 above the mean, -1 below).  The
per-timestep job decision weights the marks by the tracked singular values
and rejects when the sum reaches the threshold.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import Subspace
from .streaming_pca import project

# Substituted for the window standard deviation when it collapses, so a
# constant signal does not mark every following value as a spike.
STD_FLOOR = 1e-9


class SpikeDetector:
    """Per-projection sliding-window z-score state.

    Keeps three ring buffers per projection, each ``lag`` wide: the dampened
    signal the window statistics are computed from, and the history of those
    means and standard deviations.  A projection produces no marks until its
    dampened buffer has filled once (warm-up).

    Dampening is applied on negative spikes only: the stored value becomes
    ``influence * p + (1 - influence) * previous``.  Positive spikes and
    quiet steps store the raw value.  Set ``symmetric_dampening`` to dampen
    positive spikes the same way.
    """

    def __init__(
        self,
        channels: int,
        lag: int = 10,
        z_threshold: float = 3.5,
        influence: float = 0.5,
        symmetric_dampening: bool = False,
    ):
        if channels < 0:
            raise ValueError("channels must be >= 0")
        if lag < 2:
            raise ValueError("lag must be >= 2")
        if z_threshold <= 0:
            raise ValueError("z_threshold must be positive")
        if not (0.0 <= influence <= 1.0):
            raise ValueError("influence must be in [0, 1]")
        self.lag = lag
        self.z_threshold = z_threshold
        self.influence = influence
        self.symmetric_dampening = symmetric_dampening
        self.dampened = np.zeros((channels, lag))
        self.mean_filter = np.zeros((channels, lag))
        self.std_filter = np.zeros((channels, lag))
        self.fill = np.zeros(channels, dtype=np.int64)
        self._all_live = False
        self._scratch = None

    @property
    def channels(self) -> int:
        return self.dampened.shape[0]

    @property
    def ready(self) -> bool:
        """True once at least one projection has a full warm-up window."""
        return bool(np.any(self.fill >= self.lag))

    def resize(self, channels: int) -> None:
        """Track a different number of projections.

        Buffers for surviving projections are kept; new projections start
        empty (zero marks until their own warm-up completes); dropped ones
        are discarded.
        """
        old = self.channels
        if channels == old:
            return
        keep = min(old, channels)

        def grow(buf):
            out = np.zeros((channels, self.lag))
            out[:keep] = buf[:keep]
            return out

        self.dampened = grow(self.dampened)
        self.mean_filter = grow(self.mean_filter)
        self.std_filter = grow(self.std_filter)
        fill = np.zeros(channels, dtype=np.int64)
        fill[:keep] = self.fill[:keep]
        self.fill = fill
        self._all_live = bool(channels > 0 and np.all(self.fill >= self.lag))

    def detect(self, p) -> np.ndarray:
        """Consume one projection vector, return marks in {-1, 0, +1}."""
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.channels,):
            raise ValueError(f"expected {self.channels} projections, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("projection vector contains NaN or Inf")

        if self._all_live:
            return self._detect_live(p, self.dampened, self.mean_filter, self.std_filter)

        marks = np.zeros(self.channels, dtype=np.int64)
        live = self.fill >= self.lag
        warm = ~live
        if np.any(live):
            marks[live] = self._detect_live(
                p[live], self.dampened[live], self.mean_filter[live], self.std_filter[live]
            )
            # fancy-indexed reads above are copies; write the slid buffers back
            self.dampened[live] = self._scratch[0]
            self.mean_filter[live] = self._scratch[1]
            self.std_filter[live] = self._scratch[2]
        idx = self.fill[warm]
        self.dampened[warm, idx] = p[warm]
        self.fill[warm] += 1
        self._all_live = bool(np.all(self.fill >= self.lag))
        return marks

    def _detect_live(self, value, dampened, mean_hist, std_hist) -> np.ndarray:
        """Detection step for channels whose warm-up window is full."""
        mean = np.mean(dampened, axis=1)
        std = np.maximum(np.std(dampened, axis=1), STD_FLOOR)
        spike = np.abs(value - mean) > self.z_threshold * std
        positive = spike & (value > mean)
        negative = spike & ~positive

        previous = dampened[:, -1]
        dampened_value = self.influence * value + (1.0 - self.influence) * previous
        mask = spike if self.symmetric_dampening else negative
        new_value = np.where(mask, dampened_value, value)

        dampened[:, :-1] = dampened[:, 1:]
        dampened[:, -1] = new_value
        mean_hist[:, :-1] = mean_hist[:, 1:]
        mean_hist[:, -1] = mean
        std_hist[:, :-1] = std_hist[:, 1:]
        std_hist[:, -1] = std
        self._scratch = (dampened, mean_hist, std_hist)
        return positive.astype(np.int64) - negative.astype(np.int64)

    def storage_floats(self) -> int:
        return self.dampened.size + self.mean_filter.size + self.std_filter.size


@dataclass(frozen=True)
class RejectionDecision:
    """One per-timestep scheduling decision."""

    reject: bool
    weighted_sum: float
    marks: np.ndarray
    timestep: int


def reject_job(
    detector: SpikeDetector,
    s: Subspace,
    y,
    threshold: float = 1.0,
    timestep: int = 0,
) -> RejectionDecision:
    """Decide whether a node should turn away a job at this timestep.

    Projects ``y`` onto the tracked components, marks spikes per projection,
    and rejects iff the singular-value-weighted mark sum reaches
    ``threshold``.  While the detector is warming up all marks are zero, so
    the decision is accept.
    """
    p = project(s, y)
    marks = detector.detect(p)
    weighted_sum = float(marks @ s.singular_values)
    return RejectionDecision(
        reject=bool(weighted_sum >= threshold),
        weighted_sum=weighted_sum,
        marks=marks,
        timestep=timestep,
    )
