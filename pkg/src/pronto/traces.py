"""Telemetry trace ingestion, synthesis, and spike labeling.

The on-disk trace format is CSV with header ``timestep,node_id,cpu_ready,
f1..fd``: one row per node per timestep, ``cpu_ready`` in milliseconds of
wait accumulated over a 20,000 ms reporting interval, and d feature columns.
Synthetic traces pair the feature stream with scheduled cpu_ready spikes and
inject a correlated burst into the latent factors a few steps ahead of each
spike, so the spikes are predictable from the features.
"""

import csv
import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


class TraceParseError(ValueError):
    """Malformed trace row; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UndefinedMetricError(ValueError):
    """Metric has no defined value for this input (e.g. no actual spikes)."""


@dataclass(frozen=True)
class TraceRecord:
    """One telemetry observation of one node."""

    timestep: int
    node_id: str
    features: np.ndarray
    cpu_ready: float


# Upper control limit factor for the moving-range control chart used by the
# "xbar" labeler (see SpikeLabeler).
XBAR_D4 = 2.114


@dataclass(frozen=True)
class SpikeLabeler:
    """Thresholding scheme that turns a cpu_ready series into spike labels.

    A timestep is a spike when its value is >= the scheme's threshold:

    - ``fixed``: constant threshold ``value``.
    - ``percentile``: nearest-rank ``percentile`` of the whole series.
    - ``statistical_normal``: mean + 3 * population std of the series.
    - ``xbar``: D4 * mean moving range (simplified control-chart limit).
    - ``median``: median of the series.
    """

    scheme: str
    value: float = 0.0
    percentile: float = 0.0

    SCHEMES = ("fixed", "percentile", "statistical_normal", "xbar", "median")

    def __post_init__(self):
        if self.scheme not in self.SCHEMES:
            raise ValueError(f"unknown labeler scheme {self.scheme!r}")
        if self.scheme == "fixed" and self.value <= 0:
            raise ValueError("fixed labeler needs a positive threshold value")
        if self.scheme == "percentile" and not (0.0 < self.percentile < 100.0):
            raise ValueError("percentile must be in (0, 100)")

    @classmethod
    def fixed(cls, value: float) -> "SpikeLabeler":
        return cls("fixed", value=value)

    @classmethod
    def nth_percentile(cls, percentile: float) -> "SpikeLabeler":
        return cls("percentile", percentile=percentile)

    @classmethod
    def statistical_normal(cls) -> "SpikeLabeler":
        return cls("statistical_normal")

    @classmethod
    def xbar(cls) -> "SpikeLabeler":
        return cls("xbar")

    @classmethod
    def median(cls) -> "SpikeLabeler":
        return cls("median")


def spike_threshold(values, labeler: SpikeLabeler) -> float:
    """The labeler's threshold computed over the full series."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-D series")
    if labeler.scheme == "fixed":
        return float(labeler.value)
    if labeler.scheme == "percentile":
        ordered = np.sort(v)
        k = math.ceil(labeler.percentile / 100.0 * v.size)
        return float(ordered[max(1, min(k, v.size)) - 1])
    if v.size < 2:
        raise ValueError(f"{labeler.scheme} labeler needs at least 2 points")
    if labeler.scheme == "statistical_normal":
        return float(np.mean(v) + 3.0 * np.std(v))
    if labeler.scheme == "xbar":
        return float(XBAR_D4 * np.mean(np.abs(np.diff(v))))
    return float(np.median(v))


def label_spikes(values, labeler: SpikeLabeler) -> np.ndarray:
    """Boolean spike labels: value >= computed threshold."""
    v = np.asarray(values, dtype=np.float64)
    return v >= spike_threshold(v, labeler)


def accuracy(predicted, actual) -> float:
    """Balanced hit rate over spikes and non-spikes.

    Half the correctly predicted spike fraction plus half the correctly
    predicted non-spike fraction; 1.0 is perfect, 0.0 is total miss.
    """
    pred = np.asarray(predicted, dtype=bool)
    act = np.asarray(actual, dtype=bool)
    if pred.shape != act.shape or pred.ndim != 1:
        raise ValueError("predicted and actual must be 1-D series of equal length")
    positives = int(np.sum(act))
    negatives = int(act.size - positives)
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("actual series must contain both spikes and non-spikes")
    hit_spikes = int(np.sum(pred & act))
    hit_quiet = int(np.sum(~pred & ~act))
    return 0.5 * (hit_spikes / positives + hit_quiet / negatives)


def parse_trace(path) -> Iterator[TraceRecord]:
    """Stream records from a trace CSV, validating as it goes.

    Records come back in file order; per node the timesteps must be
    nondecreasing.  Malformed rows raise :class:`TraceParseError` naming the
    offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError(1, "empty file, expected a header row")
        if len(header) < 4 or [h.strip() for h in header[:3]] != [
            "timestep",
            "node_id",
            "cpu_ready",
        ]:
            raise TraceParseError(
                1, "header must start with timestep,node_id,cpu_ready and list feature columns"
            )
        width = len(header)
        last_seen: dict[str, int] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != width:
                raise TraceParseError(line, f"expected {width} fields, found {len(row)}")
            try:
                timestep = int(row[0])
            except ValueError:
                raise TraceParseError(line, f"bad timestep {row[0]!r}")
            node_id = row[1].strip()
            if not node_id:
                raise TraceParseError(line, "empty node_id")
            try:
                cpu_ready = float(row[2])
            except ValueError:
                raise TraceParseError(line, f"bad cpu_ready {row[2]!r}")
            if not math.isfinite(cpu_ready) or cpu_ready < 0:
                raise TraceParseError(line, f"cpu_ready must be finite and >= 0, got {row[2]}")
            try:
                features = np.array([float(x) for x in row[3:]], dtype=np.float64)
            except ValueError:
                raise TraceParseError(line, "non-numeric feature value")
            if not np.all(np.isfinite(features)):
                raise TraceParseError(line, "non-finite feature value")
            prev = last_seen.get(node_id)
            if prev is not None and timestep < prev:
                raise TraceParseError(
                    line, f"timestep {timestep} regresses below {prev} for node {node_id}"
                )
            last_seen[node_id] = timestep
            yield TraceRecord(timestep, node_id, features, cpu_ready)


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic telemetry generator.

    ``burst_rate`` is scheduled cpu_ready spikes per 1000 timesteps;
    ``precursor_lead`` is how many steps the correlated feature burst
    precedes each spike.
    """

    d: int = 52
    length: int = 5000
    seed: int = 0
    burst_rate: float = 5.0
    precursor_lead: int = 3
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.length < 100:
            raise ValueError("length must be >= 100 (ten detector windows)")
        if self.burst_rate < 0:
            raise ValueError("burst_rate must be >= 0")
        if self.precursor_lead < 0:
            raise ValueError("precursor_lead must be >= 0")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


# Generator internals.  cpu_ready baseline is uniform (bounded, so a quiet
# trace never crosses its own mean + 3 std), spikes land well above the
# common fixed thresholds (500/800/1000).  Loadings are nonnegative
# (utilization metrics move together under load) so the dominant principal
# direction is positively aligned with the dominant workload factor and a
# load burst reads as a positive projection spike.
_BASE_LOW, _BASE_HIGH = 50.0, 150.0
_SPIKE_LOW, _SPIKE_HIGH = 1100.0, 1900.0
_LATENT_RANK = 4
_FACTOR_STDS = np.array([10.0, 8.0, 6.0, 4.0])
_AR_COEFF = 0.7
_BURST_GAIN = 8.0
_BURST_LEN = 2
_SPIKE_GUARD = 120  # no spikes scheduled before this step
_SPIKE_GAP = 25  # minimum spacing between scheduled spikes


@dataclass(frozen=True)
class SyntheticTrace:
    """Generated records plus the ground truth that produced them."""

    records: list
    spike_times: np.ndarray
    burst_times: np.ndarray

    def cpu_ready_series(self) -> np.ndarray:
        return np.array([r.cpu_ready for r in self.records])

    def feature_matrix(self) -> np.ndarray:
        return np.column_stack([r.features for r in self.records])


def generate_synthetic(cfg: SyntheticConfig, node_id: str = "node0") -> SyntheticTrace:
    """Build one node's trace with planted, feature-predictable spikes.

    Features follow a rank-4 latent AR(1) factor model with nonnegative
    loadings plus isotropic noise.  Each scheduled cpu_ready spike is
    preceded (by ``precursor_lead`` steps) by a strong positive burst in the
    dominant latent factor: the overload precursor a projection tracker can
    pick up ahead of the spike itself.  Deterministic for (cfg, node_id).
    """
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, zlib.crc32(node_id.encode()))))
    n, d = cfg.length, cfg.d

    n_spikes = int(round(cfg.burst_rate * n / 1000.0))
    spike_times = _schedule_spikes(rng, n, n_spikes, cfg.precursor_lead)
    burst_times = spike_times - cfg.precursor_lead

    loadings = rng.uniform(0.0, 1.0, size=(d, _LATENT_RANK))
    loadings /= np.linalg.norm(loadings, axis=0)

    cpu_ready = rng.uniform(_BASE_LOW, _BASE_HIGH, size=n)
    cpu_ready[spike_times] = rng.uniform(_SPIKE_LOW, _SPIKE_HIGH, size=n_spikes)

    burst_amp = np.zeros(n)
    for t in burst_times:
        burst_amp[t : min(t + _BURST_LEN, n)] = _BURST_GAIN * _FACTOR_STDS[0]

    z = np.zeros(_LATENT_RANK)
    records = []
    for t in range(n):
        z = _AR_COEFF * z + rng.normal(0.0, _FACTOR_STDS)
        latent = z.copy()
        latent[0] += burst_amp[t]
        features = loadings @ latent + cfg.noise_scale * rng.standard_normal(d)
        records.append(TraceRecord(t, node_id, features, float(cpu_ready[t])))
    return SyntheticTrace(records, spike_times, burst_times)


def _schedule_spikes(rng, length, count, lead) -> np.ndarray:
    """Spike positions with a warm-up guard and minimum spacing."""
    if count == 0:
        return np.array([], dtype=np.int64)
    low = max(_SPIKE_GUARD, lead + 1)
    high = length - _SPIKE_GAP
    if high <= low:
        raise ValueError("trace too short for the requested spike schedule")
    times: list[int] = []
    attempts = 0
    while len(times) < count and attempts < 10000:
        t = int(rng.integers(low, high))
        attempts += 1
        if all(abs(t - u) >= _SPIKE_GAP for u in times):
            times.append(t)
    if len(times) < count:
        raise ValueError("could not place spikes with the required spacing")
    return np.array(sorted(times), dtype=np.int64)


def write_trace(path, records: Iterable[TraceRecord]) -> None:
    """Write records in the trace CSV format (header inferred from d)."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    d = records[0].features.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestep", "node_id", "cpu_ready"] + [f"f{i + 1}" for i in range(d)])
        for r in records:
            writer.writerow(
                [r.timestep, r.node_id, repr(float(r.cpu_ready))]
                + [repr(float(x)) for x in r.features]
            )


def write_ground_truth(path, spike_times_by_node: dict, length: int) -> None:
    """Companion CSV of ground-truth labels: timestep,node_id,is_spike."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestep", "node_id", "is_spike"])
        for node_id in sorted(spike_times_by_node):
            spikes = set(int(t) for t in spike_times_by_node[node_id])
            for t in range(length):
                writer.writerow([t, node_id, int(t in spikes)])
