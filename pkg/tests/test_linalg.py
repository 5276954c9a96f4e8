import numpy as np
import pytest

from pronto.linalg import (
    DegenerateSpectrumError,
    EnergyBounds,
    Subspace,
    energy,
    merge_basic,
    merge_fast,
    principal_angles,
    qr,
    rank_adjust,
    ssvd,
    svd_truncated,
)

from oracles import angles_between, random_subspace, svd_via_gram, top_r_subspace


def test_subspace_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Subspace(np.ones((3, 2)), np.array([1.0, 0.5]))


def test_subspace_rejects_increasing_sigma():
    with pytest.raises(ValueError):
        Subspace(np.eye(3)[:, :2], np.array([1.0, 2.0]))


def test_svd_truncated_diagonal():
    sub, vt = svd_truncated(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(sub.singular_values, [3.0, 2.0])
    assert np.allclose(np.abs(sub.basis), np.eye(3)[:, :2])
    # sign convention: largest-magnitude entries positive
    assert sub.basis[0, 0] > 0 and sub.basis[1, 1] > 0


def test_svd_truncated_identity():
    sub, _ = svd_truncated(np.eye(4), 1)
    assert sub.singular_values[0] == pytest.approx(1.0)


def test_svd_truncated_matches_gram_oracle():
    rng = np.random.default_rng(7)
    y = rng.standard_normal((8, 12))
    sub, vt = svd_truncated(y, 3)
    _, sigma_ref = top_r_subspace(y, 3)
    assert np.allclose(sub.singular_values, sigma_ref, atol=1e-8)
    # reconstruction matches the oracle's best rank-3 approximation
    u_ref, s_ref, vt_ref = svd_via_gram(y)
    recon_ref = u_ref[:, :3] @ np.diag(s_ref[:3]) @ vt_ref[:3, :]
    recon = sub.basis @ np.diag(sub.singular_values) @ vt
    assert np.linalg.norm(recon - recon_ref) < 1e-8


def test_svd_optimality_against_random_low_rank_candidates():
    rng = np.random.default_rng(11)
    for trial in range(20):
        d = int(rng.integers(3, 13))
        n = int(rng.integers(3, 13))
        r = int(rng.integers(1, min(d, n) + 1))
        y = rng.standard_normal((d, n))
        sub, vt = svd_truncated(y, r)
        err = np.linalg.norm(y - sub.basis @ np.diag(sub.singular_values) @ vt)
        for _ in range(5):
            m = rng.standard_normal((d, r)) @ rng.standard_normal((r, n))
            assert err <= np.linalg.norm(y - m) + 1e-8


def test_svd_rank_out_of_range():
    with pytest.raises(ValueError):
        svd_truncated(np.eye(3), 4)
    with pytest.raises(ValueError):
        svd_truncated(np.eye(3), 0)


def test_svd_rejects_nonfinite():
    y = np.eye(3)
    y[0, 0] = np.nan
    with pytest.raises(ValueError):
        svd_truncated(y, 1)


def test_qr_identity():
    q, r = qr(np.eye(3))
    assert np.allclose(q, np.eye(3))
    assert np.allclose(r, np.eye(3))


def test_qr_single_column_normalization():
    q, r = qr(np.array([[3.0], [4.0]]))
    assert np.allclose(q, [[0.6], [0.8]])
    assert np.allclose(r, [[5.0]])


def test_qr_reconstruction():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((6, 3))
    q, r = qr(m)
    assert np.linalg.norm(q @ r - m) < 1e-10
    assert np.linalg.norm(q.T @ q - np.eye(3)) < 1e-10
    assert np.allclose(r, np.triu(r))


def test_qr_requires_tall_matrix():
    with pytest.raises(ValueError):
        qr(np.ones((2, 3)))


def test_merge_basic_empty_second_side():
    rng = np.random.default_rng(5)
    s1 = random_subspace(rng, 10, 3)
    merged = merge_basic(s1, None, 1.0, 1.0, 3)
    assert np.allclose(merged.singular_values, s1.singular_values, atol=1e-10)
    assert np.max(angles_between(merged.basis, s1.basis)) < 1e-10


def test_merge_basic_orthogonal_inputs():
    e1 = Subspace(np.eye(4)[:, :1], np.array([2.0]))
    e2 = Subspace(np.eye(4)[:, 1:2], np.array([1.0]))
    merged = merge_basic(e1, e2, 1.0, 1.0, 2)
    assert np.allclose(merged.singular_values, [2.0, 1.0])
    span = np.abs(merged.basis)
    assert np.allclose(span[:2, :], np.eye(2))


def test_merge_basic_matches_concatenation_oracle():
    rng = np.random.default_rng(17)
    for _ in range(10):
        s1 = random_subspace(rng, 20, 3)
        s2 = random_subspace(rng, 20, 3)
        merged = merge_basic(s1, s2, 1.0, 1.0, 3)
        conc = np.hstack([s1.basis * s1.singular_values, s2.basis * s2.singular_values])
        u_ref, _ = top_r_subspace(conc, 3)
        assert np.max(angles_between(merged.basis, u_ref)) < 1e-8


def test_merge_fast_idempotent_span():
    rng = np.random.default_rng(23)
    s = random_subspace(rng, 12, 4)
    merged = merge_fast(s, s, 4)
    assert np.max(principal_angles(merged, s)) < 1e-8


def test_merge_fast_orthogonal_case_matches_basic():
    e1 = Subspace(np.eye(4)[:, :1], np.array([2.0]))
    e2 = Subspace(np.eye(4)[:, 1:2], np.array([1.0]))
    fast = merge_fast(e1, e2, 2)
    basic = merge_basic(e1, e2, 1.0, 1.0, 2)
    assert np.allclose(fast.singular_values, basic.singular_values, atol=1e-10)
    assert np.max(principal_angles(fast, basic)) < 1e-10


def test_merge_fast_equals_merge_basic_on_random_pairs():
    rng = np.random.default_rng(41)
    for _ in range(50):
        s1 = random_subspace(rng, 30, 4)
        s2 = random_subspace(rng, 30, 4)
        fast = merge_fast(s1, s2, 4)
        basic = merge_basic(s1, s2, 1.0, 1.0, 4)
        assert np.max(principal_angles(fast, basic)) < 1e-8
        assert np.allclose(fast.singular_values, basic.singular_values, atol=1e-8)
        # orthonormality preserved
        gram = fast.basis.T @ fast.basis
        assert np.linalg.norm(gram - np.eye(4)) < 1e-8


def test_merge_fast_rejects_non_orthonormal():
    basis = np.eye(5)[:, :2].copy()
    sub = Subspace(basis, np.array([2.0, 1.0]))
    skewed = Subspace.__new__(Subspace)
    object.__setattr__(skewed, "basis", basis + 5e-6)
    object.__setattr__(skewed, "singular_values", np.array([2.0, 1.0]))
    with pytest.raises(ValueError):
        merge_fast(sub, skewed, 2)


def test_merge_dimension_mismatch():
    rng = np.random.default_rng(2)
    s1 = random_subspace(rng, 8, 2)
    s2 = random_subspace(rng, 9, 2)
    with pytest.raises(ValueError):
        merge_basic(s1, s2, 1.0, 1.0, 2)
    with pytest.raises(ValueError):
        merge_fast(s1, s2, 2)


def test_energy_values():
    assert energy([1.0, 1.0], 2) == pytest.approx(0.5)
    assert energy([4.0, 2.0, 2.0], 3) == pytest.approx(0.25)
    tiny = energy([5.0, 0.0001], 2)
    assert tiny == pytest.approx(0.0001 / 5.0001)


def test_energy_scale_invariance():
    rng = np.random.default_rng(9)
    for _ in range(25):
        sigma = np.sort(rng.uniform(0.1, 5.0, size=6))[::-1]
        r = int(rng.integers(1, 7))
        c = float(rng.uniform(0.01, 100.0))
        assert energy(sigma, r) == pytest.approx(energy(c * sigma, r), rel=1e-12)


def test_energy_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        energy([0.0, 0.0], 2)


def test_rank_adjust_noop_within_bounds():
    s = Subspace(np.eye(5)[:, :2], np.array([3.0, 1.0]))
    # normalized level = 2 * 1/4 = 0.5, inside (0.1, 0.6)
    out = rank_adjust(s, EnergyBounds(0.1, 0.6, r_min=1, r_max=4))
    assert out is s


def test_rank_adjust_grows_with_flat_spectrum():
    s = Subspace(np.eye(5)[:, :2], np.array([1.0, 1.0]))
    out = rank_adjust(s, EnergyBounds(0.1, 0.4, r_min=1, r_max=4))
    assert out.rank == 3
    assert np.allclose(out.basis[:, 2], np.eye(5)[:, 2])
    # probe value keeps the spectrum sorted and nonzero
    assert 0.0 < out.singular_values[-1] <= 1.0
    assert np.all(np.diff(out.singular_values) <= 0)
    # an inert probe does not cascade into further growth by itself
    again = rank_adjust(out, EnergyBounds(0.1, 0.4, r_min=1, r_max=4))
    assert again.rank == 3


def test_rank_adjust_shrinks_with_decayed_spectrum():
    s = Subspace(np.eye(5)[:, :2], np.array([10.0, 0.01]))
    out = rank_adjust(s, EnergyBounds(0.05, 0.9, r_min=1, r_max=4))
    assert out.rank == 1
    assert out.singular_values[0] == pytest.approx(10.0)


def test_rank_adjust_respects_caps_and_step_size():
    rng = np.random.default_rng(31)
    bounds = EnergyBounds(0.05, 0.5, r_min=2, r_max=4)
    for _ in range(30):
        r = int(rng.integers(2, 5))
        s = random_subspace(rng, 10, r)
        out = rank_adjust(s, bounds)
        assert abs(out.rank - s.rank) <= 1
        assert bounds.r_min <= out.rank <= bounds.r_max
        gram = out.basis.T @ out.basis
        assert np.linalg.norm(gram - np.eye(out.rank)) < 1e-8


def test_rank_adjust_grown_basis_orthonormal_for_generic_subspace():
    rng = np.random.default_rng(37)
    q, _ = qr(rng.standard_normal((8, 3)))
    s = Subspace(q, np.array([1.0, 1.0, 1.0]))
    out = rank_adjust(s, EnergyBounds(0.05, 0.3, r_min=1, r_max=6))
    assert out.rank == 4
    assert np.linalg.norm(out.basis.T @ out.basis - np.eye(4)) < 1e-10


def test_ssvd_empty_state_is_truncated_svd():
    block = np.zeros((4, 3))
    block[0, 0] = 3.0
    block[1, 1] = 2.0
    sub = ssvd(block, None, 2)
    ref, _ = svd_truncated(block, 2)
    assert np.allclose(sub.singular_values, ref.singular_values)
    assert np.max(principal_angles(sub, ref)) < 1e-12


def test_ssvd_zero_block_keeps_state_span():
    rng = np.random.default_rng(13)
    state = random_subspace(rng, 8, 3)
    out = ssvd(np.zeros((8, 5)), state, 3)
    assert np.max(principal_angles(out, state)) < 1e-8


def test_ssvd_matches_concatenation_oracle():
    rng = np.random.default_rng(19)
    for _ in range(10):
        state = random_subspace(rng, 12, 3)
        block = rng.standard_normal((12, 6))
        out = ssvd(block, state, 3)
        conc = np.hstack([state.basis * state.singular_values, block])
        u_ref, sigma_ref = top_r_subspace(conc, 3)
        assert np.max(angles_between(out.basis, u_ref)) < 1e-8
        assert np.allclose(out.singular_values, sigma_ref, atol=1e-8)


def test_ssvd_dimension_mismatch():
    rng = np.random.default_rng(1)
    state = random_subspace(rng, 6, 2)
    with pytest.raises(ValueError):
        ssvd(np.zeros((5, 3)), state, 2)


def test_principal_angles_identity_and_orthogonal():
    e1 = Subspace(np.eye(3)[:, :1], np.array([1.0]))
    e2 = Subspace(np.eye(3)[:, 1:2], np.array([1.0]))
    assert np.allclose(principal_angles(e1, e1), [0.0])
    assert principal_angles(e1, e2)[0] == pytest.approx(np.pi / 2)


def test_principal_angles_matches_oracle():
    rng = np.random.default_rng(29)
    s1 = random_subspace(rng, 15, 4)
    s2 = random_subspace(rng, 15, 3)
    ours = principal_angles(s1, s2)
    ref = angles_between(s1.basis, s2.basis)
    assert np.allclose(np.sort(ours), np.sort(ref), atol=1e-10)
