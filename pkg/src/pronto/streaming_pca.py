"""Block-wise, rank-adaptive streaming PCA for a single telemetry stream.

Feature vectors arrive one per timestep, are buffered into fixed-size blocks,
and each completed block folds into the running subspace estimate: the block
is factorized, merged with the (optionally down-weighted) previous estimate,
and the tracked rank is adjusted from the merged spectrum.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import EnergyBounds, Subspace, as_matrix, rank_adjust, ssvd


class InsufficientDataError(ValueError):
    """First block carries fewer columns than the requested rank."""


@dataclass(frozen=True)
class FpcaConfig:
    """Streaming-update parameters.

    ``block_size`` columns are gathered before each update; ``forgetting`` in
    (0, 1] down-weights the previous estimate at merge time (1 = stationary).
    """

    block_size: int = 50
    initial_rank: int = 4
    bounds: EnergyBounds = field(default_factory=lambda: EnergyBounds(0.05, 0.5))
    forgetting: float = 1.0

    def __post_init__(self):
        if self.initial_rank < 1:
            raise ValueError("initial_rank must be >= 1")
        if self.block_size < self.initial_rank:
            raise ValueError(
                f"block_size {self.block_size} smaller than initial_rank {self.initial_rank}"
            )
        if not (0.0 < self.forgetting <= 1.0):
            raise ValueError(f"forgetting must be in (0, 1], got {self.forgetting}")


class BlockBuffer:
    """Accumulates up to ``capacity`` feature vectors of dimension ``dim``."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1 or dim < 1:
            raise ValueError("capacity and dim must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self._columns = np.empty((dim, capacity))
        self.count = 0

    @property
    def full(self) -> bool:
        return self.count >= self.capacity

    def append(self, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("feature vector contains NaN or Inf")
        if self.full:
            raise ValueError("buffer already full")
        self._columns[:, self.count] = y
        self.count += 1

    def drain(self) -> np.ndarray:
        """Return the buffered block as a (dim, count) matrix and reset."""
        if self.count == 0:
            raise ValueError("buffer is empty")
        block = self._columns[:, : self.count].copy()
        self.count = 0
        return block

    def storage_floats(self) -> int:
        return self._columns.size


def fpca_update(state: Subspace | None, block, cfg: FpcaConfig) -> Subspace:
    """Fold one block into the subspace estimate and adjust the rank.

    Parameters
    ----------
    state : Subspace or None
        Estimate from previous blocks; None on the first block.
    block : array_like, shape (d, b)
        Usually b == cfg.block_size; a final partial block is accepted when
        it still has at least ``rank`` columns.

    Returns
    -------
    Subspace
        New estimate.  An empty previous state reduces to the block's own
        truncated SVD.
    """
    block = as_matrix(block, "block")
    if state is None:
        if block.shape[1] < cfg.initial_rank:
            raise InsufficientDataError(
                f"first block has {block.shape[1]} columns, need >= {cfg.initial_rank}"
            )
        merged = ssvd(block, None, cfg.initial_rank)
    else:
        previous = state if cfg.forgetting == 1.0 else state.scaled(cfg.forgetting)
        merged = ssvd(block, previous, state.rank)
    return rank_adjust(merged, cfg.bounds)


def project(s: Subspace, y) -> np.ndarray:
    """Projections of one feature vector onto the tracked components: y^T U."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (s.dim,):
        raise ValueError(f"expected vector of shape ({s.dim},), got {y.shape}")
    return y @ s.basis


def residual_ratio(s: Subspace, data) -> float:
    """Fraction of data energy outside the subspace, in [0, 1]."""
    data = as_matrix(data, "data")
    if data.shape[0] != s.dim:
        raise ValueError(f"data has {data.shape[0]} rows, subspace dimension is {s.dim}")
    total = np.linalg.norm(data)
    if total <= 0.0:
        raise ValueError("data is identically zero")
    outside = data - s.basis @ (s.basis.T @ data)
    return float(np.linalg.norm(outside) / total)
