"""A simulated compute node: one decision per incoming vector, one subspace
update per completed block, and change-gated propagation of snapshots.

Decisions never wait on the federation layer; a node only sends its subspace
upward (when it changed enough), it never receives anything mid-run.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import Subspace
from .spikes import RejectionDecision, SpikeDetector, reject_job
from .streaming_pca import BlockBuffer


@dataclass(frozen=True)
class PropagationEvent:
    """A subspace snapshot a node wants merged upward."""

    node_id: str
    snapshot: Subspace
    block_index: int


def basis_absdiff(new: Subspace, old: Subspace) -> float:
    """Entrywise absolute change between two bases of equal rank.

    Columns of ``old`` are sign-aligned to ``new`` first, so a pure sign flip
    (which spans the identical subspace) measures as zero change.
    """
    if new.dim != old.dim or new.rank != old.rank:
        raise ValueError("absdiff needs equal-shape bases")
    signs = np.where(np.sum(new.basis * old.basis, axis=0) < 0, -1.0, 1.0)
    return float(np.sum(np.abs(new.basis - old.basis * signs)))


class ComputeNode:
    """Per-node simulation state: block buffer, tracker, detector, log."""

    def __init__(
        self,
        node_id: str,
        dim: int,
        tracker,
        block_size: int,
        detector: SpikeDetector | None = None,
        rejection_threshold: float = 1.0,
        epsilon: float = 0.0,
    ):
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        self.node_id = node_id
        self.dim = dim
        self.tracker = tracker
        self.buffer = BlockBuffer(block_size, dim)
        self.detector = detector if detector is not None else SpikeDetector(channels=0)
        self.rejection_threshold = rejection_threshold
        self.epsilon = epsilon
        self.prev_subspace: Subspace | None = None
        self.decision_log: list[RejectionDecision] = []
        self.block_index = 0
        self._last_t: int | None = None

    @property
    def subspace(self) -> Subspace | None:
        return self.tracker.subspace

    def step(self, y, t: int) -> tuple[RejectionDecision, PropagationEvent | None]:
        """Ingest one feature vector; decide, and maybe update/propagate."""
        y = np.asarray(y, dtype=np.float64)
        if self._last_t is not None and t <= self._last_t:
            raise ValueError(
                f"node {self.node_id}: timestep {t} not after {self._last_t}"
            )
        self._last_t = t

        self.buffer.append(y)

        current = self.subspace
        if current is None:
            # cold start: no embedding yet, accept everything
            decision = RejectionDecision(
                reject=False, weighted_sum=0.0, marks=np.zeros(0, dtype=np.int64), timestep=t
            )
        else:
            decision = reject_job(
                self.detector, current, y, threshold=self.rejection_threshold, timestep=t
            )
        self.decision_log.append(decision)

        event = None
        if self.buffer.full:
            event = self._process_block()
        return decision, event

    def flush(self) -> PropagationEvent | None:
        """Process a final partial block if it is still usable, else drop it."""
        if self.buffer.count == 0:
            return None
        if self.buffer.count < self.tracker.min_block_columns:
            self.buffer.drain()
            return None
        return self._process_block()

    def _process_block(self) -> PropagationEvent | None:
        old = self.subspace
        new = self.tracker.update(self.buffer.drain())
        self.block_index += 1
        if new.rank != self.detector.channels:
            self.detector.resize(new.rank)
        if self._should_propagate(new, old):
            self.prev_subspace = new
            return PropagationEvent(self.node_id, new, self.block_index)
        self.prev_subspace = new
        return None

    def _should_propagate(self, new: Subspace, old: Subspace | None) -> bool:
        if old is None or new.rank != old.rank:
            return True  # first estimate or a rank change is always material
        return basis_absdiff(new, old) > self.epsilon

    def rejection_series(self) -> np.ndarray:
        return np.array([d.reject for d in self.decision_log], dtype=bool)

    def storage_floats(self) -> int:
        held = self.buffer.storage_floats() + self.detector.storage_floats()
        if self.subspace is not None:
            held += self.subspace.basis.size + self.subspace.singular_values.size
        return held
