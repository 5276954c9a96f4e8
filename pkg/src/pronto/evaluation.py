"""Post-hoc metrics over rejection-signal and spike-label series.

Each cpu_ready spike is examined against a sliding window centered on a
reference point at half the window: rejection raises in the half-window up
to and including the spike are "left-sided" (predictions), raises in the
half-window after it are "right-sided" (late or repeat detections).
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .traces import SpikeLabeler, UndefinedMetricError


@dataclass(frozen=True)
class EvalConfig:
    """Window geometry and scoring parameters."""

    window: int = 10
    rank: int = 4
    rejection_threshold: float = 1.0
    labeler: SpikeLabeler = field(default_factory=lambda: SpikeLabeler.fixed(800.0))
    allow_any_window: bool = False

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not self.allow_any_window and not (10 <= self.window <= 50):
            raise ValueError(
                f"window {self.window} outside the 10..50 policy "
                "(set allow_any_window to override)"
            )
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.rejection_threshold <= 0:
            raise ValueError("rejection_threshold must be positive")

    @property
    def reference_offset(self) -> int:
        return self.window // 2


class SideCounts(NamedTuple):
    left: np.ndarray  # raises in (t - w/2, t] per classified spike
    right: np.ndarray  # raises in (t, t + w/2] per classified spike
    skipped: int  # spikes inside the first w steps, not classified


def _as_bool_series(rejections) -> np.ndarray:
    r = np.asarray(rejections, dtype=bool)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("rejections must be a nonempty 1-D boolean series")
    return r


def _as_spike_times(spike_times, limit: int) -> np.ndarray:
    t = np.asarray(spike_times, dtype=np.int64)
    if t.ndim != 1:
        raise ValueError("spike_times must be 1-D")
    if t.size and (t.min() < 0 or t.max() >= limit):
        raise ValueError("spike_times outside the rejection series")
    return t


def classify_sides(rejections, spike_times, cfg: EvalConfig) -> SideCounts:
    """Count raised timesteps on each side of every cpu_ready spike.

    A raise exactly at the spike time counts as left-sided.  Spikes inside
    the first ``window`` steps happen before predictions can start and are
    only tallied as skipped.
    """
    rej = _as_bool_series(rejections)
    times = _as_spike_times(spike_times, rej.size)
    half = cfg.reference_offset
    raised = np.flatnonzero(rej)
    left, right = [], []
    skipped = 0
    for t in times:
        if t < cfg.window:
            skipped += 1
            continue
        left.append(int(np.sum((raised > t - half) & (raised <= t))))
        right.append(int(np.sum((raised > t) & (raised <= t + half))))
    return SideCounts(np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), skipped)


def success_rate(rejections, spike_times, cfg: EvalConfig) -> float:
    """Fraction of classified spikes preceded by at least one raise."""
    counts = classify_sides(rejections, spike_times, cfg)
    if counts.left.size == 0:
        raise UndefinedMetricError("no classifiable cpu_ready spikes")
    return float(np.mean(counts.left >= 1))


def downtime(rejections) -> float:
    """Percentage of timesteps with the rejection signal raised."""
    rej = _as_bool_series(rejections)
    return 100.0 * float(np.sum(rej)) / rej.size


def raise_events(rejections) -> int:
    """Number of rising edges (false -> true transitions) in the signal."""
    rej = _as_bool_series(rejections)
    starts = int(rej[0])
    return starts + int(np.sum(rej[1:] & ~rej[:-1]))


def contained_pct(rejections, spike_times, cfg: EvalConfig | None = None) -> float:
    """Raise events as a percentage of actual spikes (may exceed 100)."""
    rej = _as_bool_series(rejections)
    times = _as_spike_times(spike_times, rej.size)
    if times.size == 0:
        raise UndefinedMetricError("no actual cpu_ready spikes")
    return 100.0 * raise_events(rej) / times.size


def emit_cdf(samples) -> np.ndarray:
    """Empirical CDF table: one (value, fraction <= value) row per sample."""
    v = np.asarray(samples, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("samples must be a nonempty 1-D array")
    ordered = np.sort(v)
    fractions = np.searchsorted(ordered, ordered, side="right") / ordered.size
    return np.column_stack([ordered, fractions])


@dataclass
class EvalReport:
    """Per-node evaluation summary."""

    node_id: str
    spikes_total: int
    spikes_skipped: int
    left_counts: np.ndarray
    right_counts: np.ndarray
    success_rate: float | None
    downtime_pct: float
    contained_pct: float | None
    raise_events: int
    decisions: int
    latency_us: np.ndarray  # empty unless latency measurement was enabled

    def rows(self):
        """(metric, value) pairs for the metrics CSV, in a fixed order."""
        out = [
            ("decisions", self.decisions),
            ("spikes_total", self.spikes_total),
            ("spikes_skipped", self.spikes_skipped),
            ("raise_events", self.raise_events),
            ("downtime_pct", self.downtime_pct),
            ("success_rate", self.success_rate),
            ("contained_pct", self.contained_pct),
            ("left_mean", float(np.mean(self.left_counts)) if self.left_counts.size else None),
            ("right_mean", float(np.mean(self.right_counts)) if self.right_counts.size else None),
        ]
        if self.latency_us.size:
            out.append(("latency_us_mean", float(np.mean(self.latency_us))))
        return out


def evaluate_node(
    node_id: str,
    rejections,
    spike_times,
    cfg: EvalConfig,
    latency_us=None,
) -> EvalReport:
    """Bundle all metrics for one node's run."""
    rej = _as_bool_series(rejections)
    times = _as_spike_times(spike_times, rej.size)
    counts = classify_sides(rej, times, cfg)
    rate = float(np.mean(counts.left >= 1)) if counts.left.size else None
    contained = 100.0 * raise_events(rej) / times.size if times.size else None
    return EvalReport(
        node_id=node_id,
        spikes_total=int(times.size),
        spikes_skipped=counts.skipped,
        left_counts=counts.left,
        right_counts=counts.right,
        success_rate=rate,
        downtime_pct=downtime(rej),
        contained_pct=contained,
        raise_events=raise_events(rej),
        decisions=int(rej.size),
        latency_us=np.asarray(latency_us if latency_us is not None else [], dtype=np.float64),
    )
