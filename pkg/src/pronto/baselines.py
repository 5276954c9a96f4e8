"""Streaming subspace trackers behind a common per-block update interface.

Four interchangeable trackers can feed the per-node decision loop:

- ``pronto_fpca``: the rank-adaptive merge-based tracker (the default).
- ``fd``: Frequent Directions sketching (Liberty, 2013).
- ``pm``: block power iteration against a running covariance summary
  (Mitliagkas et al., 2013 style); needs blocks at least d columns wide.
- ``sp``: SPIRIT-style exponentially weighted eigenvector tracking
  (Papadimitriou et al., 2005) at fixed rank.

FD and PM cannot produce singular values, so they always carry the synthetic
1/i spectrum; SPIRIT reports its own energy estimates.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import Subspace, as_matrix, qr
from .streaming_pca import FpcaConfig, fpca_update

VARIANTS = ("pronto_fpca", "fd", "pm", "sp")

# SPIRIT constants: forgetting factor from the usual presentation, plus a
# small positive energy floor so the first updates are well defined.
SPIRIT_LAMBDA = 0.96
SPIRIT_ENERGY_INIT = 1e-4


def synthetic_sigma(r: int) -> np.ndarray:
    """The stand-in decay spectrum sigma_i = 1/i for value-less trackers."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return 1.0 / np.arange(1, r + 1)


@dataclass(frozen=True)
class TrackerKind:
    """Which tracker to run and whether its values are the synthetic 1/i."""

    variant: str
    synthetic_spectrum: bool | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown tracker variant {self.variant!r}")
        if self.synthetic_spectrum is None:
            object.__setattr__(self, "synthetic_spectrum", self.variant in ("fd", "pm"))
        elif self.variant in ("fd", "pm") and not self.synthetic_spectrum:
            raise ValueError(f"{self.variant} cannot produce singular values of its own")


class ProntoTracker:
    """Rank-adaptive streaming PCA (see :mod:`pronto.streaming_pca`)."""

    def __init__(self, dim: int, cfg: FpcaConfig):
        self.dim = dim
        self.cfg = cfg
        self.subspace: Subspace | None = None

    @property
    def min_block_columns(self) -> int:
        return self.cfg.initial_rank if self.subspace is None else 1

    def update(self, block) -> Subspace:
        self.subspace = fpca_update(self.subspace, block, self.cfg)
        return self.subspace


class FrequentDirectionsTracker:
    """Deterministic sketch of the stream's Gram matrix.

    Rows of the (2r x d) sketch hold incoming vectors; when the sketch fills,
    its singular spectrum is deflated by the smallest squared value, freeing
    at least one row.  The emitted basis is the sketch's top right singular
    vectors; values are always the synthetic spectrum.
    """

    def __init__(self, dim: int, rank: int, sketch_factor: int = 2):
        if rank < 1 or dim < rank:
            raise ValueError("need 1 <= rank <= dim")
        self.dim = dim
        self.rank = rank
        self.sketch = np.zeros((sketch_factor * rank, dim))
        self._next_free = 0
        self.subspace: Subspace | None = None

    min_block_columns = 1

    def _shrink(self) -> None:
        _, s, vt = np.linalg.svd(self.sketch, full_matrices=False)
        shrunk = np.sqrt(np.maximum(s**2 - s[-1] ** 2, 0.0))
        self.sketch = shrunk[:, None] * vt
        self._next_free = self.sketch.shape[0] - 1

    def insert(self, y: np.ndarray) -> None:
        if self._next_free >= self.sketch.shape[0]:
            self._shrink()
        self.sketch[self._next_free] = y
        self._next_free += 1

    def update(self, block) -> Subspace:
        block = as_matrix(block, "block")
        if block.shape[0] != self.dim:
            raise ValueError(f"block has {block.shape[0]} rows, tracker dimension is {self.dim}")
        for j in range(block.shape[1]):
            self.insert(block[:, j])
        _, _, vt = np.linalg.svd(self.sketch, full_matrices=False)
        basis = vt[: self.rank].T
        for j in range(basis.shape[1]):  # deterministic signs
            k = int(np.argmax(np.abs(basis[:, j])))
            if basis[k, j] < 0:
                basis[:, j] = -basis[:, j]
        self.subspace = Subspace(basis, synthetic_sigma(self.rank))
        return self.subspace


class PowerMethodTracker:
    """One orthogonalized power iteration per block.

    Keeps a decaying covariance summary C <- lam * C + B B^T and refreshes
    the basis as QR(C Q).  Requires each block to have at least d columns.
    """

    def __init__(self, dim: int, rank: int, forgetting: float = 1.0):
        if rank < 1 or dim < rank:
            raise ValueError("need 1 <= rank <= dim")
        if not (0.0 < forgetting <= 1.0):
            raise ValueError("forgetting must be in (0, 1]")
        self.dim = dim
        self.rank = rank
        self.forgetting = forgetting
        self.cov = np.zeros((dim, dim))
        self.basis = np.eye(dim)[:, :rank]
        self.subspace: Subspace | None = None

    @property
    def min_block_columns(self) -> int:
        return self.dim

    def update(self, block) -> Subspace:
        block = as_matrix(block, "block")
        if block.shape[0] != self.dim:
            raise ValueError(f"block has {block.shape[0]} rows, tracker dimension is {self.dim}")
        if block.shape[1] < self.dim:
            raise ValueError(
                f"power method needs blocks with >= {self.dim} columns, got {block.shape[1]}"
            )
        self.cov = self.forgetting * self.cov + block @ block.T
        self.basis, _ = qr(self.cov @ self.basis)
        self.subspace = Subspace(self.basis, synthetic_sigma(self.rank))
        return self.subspace


class SpiritTracker:
    """Exponentially weighted eigenvector tracking at fixed rank.

    Classic projection-deflation updates: each component absorbs what it can
    of the incoming vector and passes the residual down.  Component energies
    decay with SPIRIT_LAMBDA and double as (squared) singular value
    estimates, which come with no quality guarantees.
    """

    def __init__(self, dim: int, rank: int, forgetting: float = SPIRIT_LAMBDA,
                 synthetic_spectrum: bool = False):
        if rank < 1 or dim < rank:
            raise ValueError("need 1 <= rank <= dim")
        self.dim = dim
        self.rank = rank
        self.forgetting = forgetting
        self.synthetic_spectrum = synthetic_spectrum
        self.weights = np.eye(dim)[:, :rank].copy()
        self.energies = np.full(rank, SPIRIT_ENERGY_INIT)
        self.subspace: Subspace | None = None

    min_block_columns = 1

    def _track_one(self, x: np.ndarray) -> None:
        residual = x.copy()
        for i in range(self.rank):
            w = self.weights[:, i]
            y = float(w @ residual)
            self.energies[i] = self.forgetting * self.energies[i] + y * y
            error = residual - y * w
            w = w + (y / self.energies[i]) * error
            self.weights[:, i] = w
            residual = residual - y * w

    def update(self, block) -> Subspace:
        block = as_matrix(block, "block")
        if block.shape[0] != self.dim:
            raise ValueError(f"block has {block.shape[0]} rows, tracker dimension is {self.dim}")
        for j in range(block.shape[1]):
            self._track_one(block[:, j])
        order = np.argsort(self.energies)[::-1]
        basis, _ = qr(self.weights[:, order])
        if self.synthetic_spectrum:
            sigma = synthetic_sigma(self.rank)
        else:
            sigma = np.sqrt(self.energies[order])
        self.subspace = Subspace(basis, sigma)
        return self.subspace


def make_tracker(kind: TrackerKind, dim: int, cfg: FpcaConfig):
    """Instantiate the tracker named by ``kind`` for streams of dimension d."""
    if kind.variant == "pronto_fpca":
        return ProntoTracker(dim, cfg)
    if kind.variant == "fd":
        return FrequentDirectionsTracker(dim, cfg.initial_rank)
    if kind.variant == "pm":
        return PowerMethodTracker(dim, cfg.initial_rank, cfg.forgetting)
    return SpiritTracker(dim, cfg.initial_rank, synthetic_spectrum=bool(kind.synthetic_spectrum))
