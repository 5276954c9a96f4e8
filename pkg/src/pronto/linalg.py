"""Dense linear-algebra kernels: truncated SVD, QR, and subspace merging.

Everything here is deterministic and operates on plain float64 ndarrays.
A tracked subspace is a pair (U, sigma): a d-by-r orthonormal basis plus the
r leading singular values, wrapped in :class:`Subspace`.
"""

from dataclasses import dataclass, field

import numpy as np

# Orthonormality drift tolerated on Subspace construction.  Direct
# factorization output is near machine precision; long merge chains may
# accumulate up to this much.
ORTHO_TOL = 1e-8

# Smallest leading singular value considered non-degenerate.
DEGENERATE_SIGMA = 1e-12


class DegenerateSpectrumError(ValueError):
    """All leading singular values are (numerically) zero."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


@dataclass(frozen=True)
class Subspace:
    """A rank-r principal subspace: orthonormal basis plus singular values.

    Attributes
    ----------
    basis : ndarray, shape (d, r)
        Columns are orthonormal.
    singular_values : ndarray, shape (r,)
        Nonincreasing, nonnegative.
    """

    basis: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        u = as_matrix(self.basis, "basis")
        s = np.asarray(self.singular_values, dtype=np.float64)
        object.__setattr__(self, "basis", u)
        object.__setattr__(self, "singular_values", s)
        if s.ndim != 1 or s.shape[0] != u.shape[1]:
            raise ValueError(
                f"singular_values shape {s.shape} does not match basis columns {u.shape[1]}"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("singular_values contain NaN or Inf")
        if np.any(s < 0):
            raise ValueError("singular_values must be nonnegative")
        if np.any(np.diff(s) > 0):
            raise ValueError("singular_values must be nonincreasing")
        if not (1 <= u.shape[1] <= u.shape[0]):
            raise ValueError(f"rank must satisfy 1 <= r <= d, got shape {u.shape}")
        gram_err = np.linalg.norm(u.T @ u - np.eye(u.shape[1]))
        if gram_err > ORTHO_TOL:
            raise ValueError(f"basis columns not orthonormal (defect {gram_err:.3e})")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def scaled(self, factor: float) -> "Subspace":
        """Same span with singular values multiplied by ``factor`` (> 0)."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return Subspace(self.basis, self.singular_values * factor)

    def truncated(self, r: int) -> "Subspace":
        """Leading min(r, rank) components."""
        if r < 1:
            raise ValueError("rank must be >= 1")
        r = min(r, self.rank)
        return Subspace(self.basis[:, :r], self.singular_values[:r])


@dataclass(frozen=True)
class EnergyBounds:
    """Rank-adaptation thresholds and hard rank caps.

    ``alpha``/``beta`` bound the relative tail energy of the tracked spectrum
    (see :func:`rank_adjust`); ``r_min``/``r_max`` cap the rank itself.
    """

    alpha: float
    beta: float
    r_min: int = 1
    r_max: int = field(default=2**31 - 1)

    def __post_init__(self):
        if not (0.0 < self.alpha < self.beta < 1.0):
            raise ValueError(f"need 0 < alpha < beta < 1, got ({self.alpha}, {self.beta})")
        if not (1 <= self.r_min <= self.r_max):
            raise ValueError(f"need 1 <= r_min <= r_max, got ({self.r_min}, {self.r_max})")


def default_rank_caps(initial_rank: int, dim: int) -> tuple[int, int]:
    """Default hard caps: r_min = 1, r_max = min(d, 2 * initial rank)."""
    return 1, min(dim, 2 * initial_rank)


def _fix_signs(u: np.ndarray, vt: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Deterministic sign convention: largest-magnitude entry of each basis
    column is positive.  The matching rows of vt are flipped to preserve the
    product."""
    u = u.copy()
    vt = vt.copy() if vt is not None else None
    for j in range(u.shape[1]):
        k = int(np.argmax(np.abs(u[:, j])))
        if u[k, j] < 0:
            u[:, j] = -u[:, j]
            if vt is not None:
                vt[j, :] = -vt[j, :]
    return u, vt


def svd_truncated(m, r: int) -> tuple[Subspace, np.ndarray]:
    """Best rank-r factorization of a matrix.

    Parameters
    ----------
    m : array_like, shape (d, n)
    r : int
        Number of components, 1 <= r <= min(d, n).

    Returns
    -------
    (Subspace, ndarray)
        The leading r left singular vectors with their singular values, and
        the matching right factors V^T of shape (r, n).
    """
    m = as_matrix(m)
    if not (1 <= r <= min(m.shape)):
        raise ValueError(f"rank {r} out of range for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, vt = _fix_signs(u[:, :r], vt[:r, :])
    return Subspace(u, s[:r]), vt


def qr(m) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR factorization with nonnegative diagonal of R.

    Requires rows >= cols.  Returns (q, rfac) with orthonormal q columns,
    upper-triangular rfac and q @ rfac == m to 1e-10.
    """
    m = as_matrix(m)
    if m.shape[0] < m.shape[1]:
        raise ValueError(f"qr requires rows >= cols, got shape {m.shape}")
    q, rfac = np.linalg.qr(m, mode="reduced")
    flip = np.where(np.diag(rfac) < 0, -1.0, 1.0)
    return q * flip, rfac * flip[:, None]


def merge_basic(
    s1: Subspace | None,
    s2: Subspace | None,
    lambda1: float,
    lambda2: float,
    r: int,
) -> Subspace:
    """Merge two subspaces by a truncated SVD of their weighted concatenation.

    Computes SVD_r([lambda1 * U1 @ diag(sigma1), lambda2 * U2 @ diag(sigma2)]).
    ``lambda1`` in (0, 1] down-weights the first (older) subspace; ``lambda2``
    >= 1 may boost the second.  Either side may be None (empty).
    """
    if not (0.0 < lambda1 <= 1.0):
        raise ValueError(f"lambda1 must be in (0, 1], got {lambda1}")
    if lambda2 < 1.0:
        raise ValueError(f"lambda2 must be >= 1, got {lambda2}")
    if s1 is None and s2 is None:
        raise ValueError("cannot merge two empty subspaces")
    if s1 is not None and s2 is not None and s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    parts = []
    if s1 is not None:
        parts.append(lambda1 * s1.basis * s1.singular_values)
    if s2 is not None:
        parts.append(lambda2 * s2.basis * s2.singular_values)
    conc = np.hstack(parts)
    return svd_truncated(conc, min(r, min(conc.shape)))[0]


def _check_orthonormal(s: Subspace, name: str) -> None:
    defect = np.linalg.norm(s.basis.T @ s.basis - np.eye(s.rank))
    if defect > 1e-8:
        raise ValueError(f"{name} basis not orthonormal (defect {defect:.3e})")


def merge_fast(s1: Subspace | None, s2: Subspace | None, r: int) -> Subspace:
    """Merge two orthonormal subspaces without forming the right factors.

    Builds a basis Q for the component of U2 outside span(U1) via QR, then
    takes the truncated SVD of the small block matrix

        X = [[diag(sigma1), Z @ diag(sigma2)],
             [0,             R @ diag(sigma2)]],   Z = U1^T @ U2,

    and maps back through [U1, Q].  Equivalent to
    ``merge_basic(s1, s2, 1, 1, r)`` up to column signs.
    """
    if s1 is None and s2 is None:
        raise ValueError("cannot merge two empty subspaces")
    if s1 is None:
        return s2.truncated(r)
    if s2 is None:
        return s1.truncated(r)
    if s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    _check_orthonormal(s1, "first")
    _check_orthonormal(s2, "second")

    z = s1.basis.T @ s2.basis
    q, rfac = qr(s2.basis - s1.basis @ z)
    x = np.block(
        [
            [np.diag(s1.singular_values), z * s2.singular_values],
            [np.zeros((s2.rank, s1.rank)), rfac * s2.singular_values],
        ]
    )
    r_eff = min(r, s1.rank + s2.rank)
    u_small, s_merged, _ = np.linalg.svd(x, full_matrices=False)
    basis = np.hstack([s1.basis, q]) @ u_small[:, :r_eff]
    basis, _ = _fix_signs(basis)
    return Subspace(basis, s_merged[:r_eff])


def energy(sigma, r: int) -> float:
    """Relative weight of the r-th singular value: sigma_r / sum(sigma_1..r).

    Always in [0, 1] (and at most 1/r for a sorted spectrum).
    """
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 1 or not (1 <= r <= s.shape[0]):
        raise ValueError(f"rank {r} out of range for spectrum of length {s.shape}")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("spectrum must be nonincreasing and nonnegative")
    head = float(np.sum(s[:r]))
    if head <= DEGENERATE_SIGMA:
        raise DegenerateSpectrumError(f"leading {r} singular values sum to {head:.3e}")
    return float(s[r - 1]) / head


def _append_canonical(u: np.ndarray) -> np.ndarray:
    """Orthonormalize the first canonical vector not already in span(u) and
    append it as a new column.  Candidates are tried in index order starting
    at e_{r+1}; two Gram-Schmidt passes keep the defect near machine eps."""
    d, r = u.shape
    for k in list(range(r, d)) + list(range(r)):
        v = np.zeros(d)
        v[k] = 1.0
        for _ in range(2):
            v = v - u @ (u.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return np.hstack([u, (v / norm)[:, None]])
    raise ValueError("no canonical vector outside current span")  # r == d


def rank_adjust(s: Subspace, bounds: EnergyBounds) -> Subspace:
    """Grow or shrink the tracked rank by one step based on spectrum shape.

    The decision value is the rank-normalized energy r * sigma_r / sum(sigma),
    i.e. how the smallest tracked value compares to the mean of the tracked
    spectrum (1.0 for a flat spectrum, -> 0 for a decayed one).  Above
    ``beta`` and below ``r_max``: append one probe direction, seeded from the
    next canonical vector (orthonormalized against the basis).  Below
    ``alpha`` and above ``r_min``: drop the last direction.  Otherwise the
    subspace is returned unchanged.

    The probe's singular value is sigma_r * (alpha + beta) / 2: nonzero (so
    it does not trip the shrink branch on the next call) but mid-band, so
    further growth happens only once real data outweighs the probe.
    """
    r = s.rank
    level = r * energy(s.singular_values, r)
    if level > bounds.beta and r < min(bounds.r_max, s.dim):
        basis = _append_canonical(s.basis)
        probe = s.singular_values[-1] * 0.5 * (bounds.alpha + bounds.beta)
        return Subspace(basis, np.append(s.singular_values, probe))
    if level < bounds.alpha and r > bounds.r_min:
        return Subspace(s.basis[:, :-1], s.singular_values[:-1])
    return s


def ssvd(block, state: Subspace | None, r: int) -> Subspace:
    """Fold one block of observations into a subspace estimate.

    With no prior state this is just the block's truncated SVD.  Otherwise
    the block enters through its own full factorization and is merged with
    the state, which equals SVD_r of [U @ diag(sigma), block].
    """
    block = as_matrix(block, "block")
    if state is None:
        return svd_truncated(block, min(r, min(block.shape)))[0]
    if block.shape[0] != state.dim:
        raise ValueError(f"block has {block.shape[0]} rows, state dimension is {state.dim}")
    u, s, _ = np.linalg.svd(block, full_matrices=False)
    return merge_fast(state, Subspace(u, s), r)


def principal_angles(s1: Subspace, s2: Subspace) -> np.ndarray:
    """Principal angles (radians) between two subspaces, length min(r1, r2).

    The angles are the arccosines of the singular values of U1^T @ U2
    (clipped to [0, 1]).  Near-zero angles are evaluated through the sines
    (singular values of the projection residual) instead, since arccos alone
    cannot resolve angles below ~1e-8 in floating point.
    """
    if s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    k = min(s1.rank, s2.rank)
    overlap = s1.basis.T @ s2.basis
    cosines = np.clip(np.linalg.svd(overlap, compute_uv=False)[:k], 0.0, 1.0)
    residual = s2.basis - s1.basis @ overlap
    sines = np.sort(np.clip(np.linalg.svd(residual, compute_uv=False), 0.0, 1.0))[:k]
    # cosines descending and sines ascending pair up angle-for-angle
    return np.where(cosines**2 > 0.5, np.arcsin(sines), np.arccos(cosines))
