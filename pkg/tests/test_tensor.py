import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosefold import folding as F
from bosefold import oracle as O
from bosefold import tensor as T


def amplitudes(state, M):
    return state.fock_amplitudes(O.enumerate_basis(state.N, M))


def plan_state(transforms, occupations):
    """Oracle image of a product state after the given transforms (in order)."""
    N = len(occupations)
    C = F.replay_on_stack(F.FoldingPlan(N, list(transforms), "normal"))
    return O.state_from_modes(C, occupations)


def run_transforms(transforms, occupations, d, chi):
    state = T.product_state(occupations, d, chi)
    for t in transforms:
        state.apply(t)
    state.renormalize()
    return state


# -- product states


def test_product_state_unit_filling():
    s = T.product_state((1, 1, 1, 1), 5, 8)
    psi = amplitudes(s, 4)
    assert psi.amplitude((1, 1, 1, 1)) == 1
    assert psi.norm == pytest.approx(1)
    assert T.mps_norm(s) == 1
    assert s.total_number() == 4


def test_product_state_vacuum_and_pair():
    vac = T.product_state((0, 0, 0), 2, 4)
    assert vac.total_number() == 0
    assert all(vac.expectation_n(j) == 0 for j in (1, 2, 3))
    s = T.product_state((2, 0), 3, 4)
    psi = amplitudes(s, 2)
    np.testing.assert_array_equal(np.abs(psi.amplitudes), [1, 0, 0])


def test_product_state_rejects_overflow():
    with pytest.raises(ValueError):
        T.product_state((3, 0), 3, 4)


# -- gate synthesis


def test_phase_and_scale_gates_are_diagonal():
    g = T.synthesize_gate(F.phase(1, 0.3), 3)
    np.testing.assert_allclose(g.matrix, np.diag(np.exp(0.3j * np.arange(3))))
    assert g.arity == 1 and g.unitary and g.diagonal is not None
    s = T.synthesize_gate(F.scale(1, -0.2), 3)
    np.testing.assert_allclose(s.matrix, np.diag(np.exp(-0.2 * np.arange(3))))
    assert not s.unitary


def test_rotation_single_particle_block():
    theta = 0.8
    g = T.synthesize_gate(F.rotation(1, theta), 3).matrix
    # basis index n_j * d + n_{j+1}; |10> = 3, |01> = 1
    block = g[np.ix_([3, 1], [3, 1])]
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    np.testing.assert_allclose(block, [[c, -s], [s, c]], atol=1e-14)


@pytest.mark.parametrize("t", [F.rotation(1, 1.3), F.pair(1, 0.4, 0.05)])
def test_two_site_gates_conserve_number(t):
    g = T.synthesize_gate(t, 4)
    assert g.conserves_number
    assert g.leakage > 0  # sectors above the cap are truncated


def test_no_leakage_when_cap_covers_sector():
    # with d = M + 1 every sector reachable from M particles fits below the cap
    g = T.synthesize_gate(F.rotation(1, 0.7), 3)
    sub = g.matrix[np.ix_([2, 4, 6], [2, 4, 6])]  # total occupation 2
    np.testing.assert_allclose(sub.conj().T @ sub, np.eye(3), atol=1e-14)


def test_interaction_gate_entries():
    np.testing.assert_array_equal(T.interaction_gate(0, 0.1, 4).matrix, np.eye(4))
    g = T.interaction_gate(1, 1e-3, 4)
    assert g.matrix[2, 2] == pytest.approx(np.exp(-0.002j), abs=1e-15)
    gi = T.interaction_gate(10, 1e-3, 4, "imaginary")
    assert gi.matrix[3, 3].real == pytest.approx(math.exp(-0.045), rel=1e-14)
    assert not gi.unitary
    with pytest.raises(ValueError):
        T.interaction_gate(1, 1, 3, "sideways")


def test_inverse_transform_inverts_gate():
    for t in (F.rotation(1, 0.9), F.pair(1, 1.1, 0.03)):
        g = T.synthesize_gate(t, 6).matrix
        gi = T.synthesize_gate(t.inverse(), 6).matrix
        # exact inverse on every sector that fits below the cap
        idx = [a * 6 + b for a in range(6) for b in range(6) if a + b <= 5]
        np.testing.assert_allclose((gi @ g)[np.ix_(idx, idx)], np.eye(len(idx)), atol=1e-12)


# -- gate application


def test_identity_gates_leave_state_unchanged():
    s = T.product_state((1, 0, 1), 3, 9)
    before = amplitudes(s, 2).amplitudes
    s.apply_one_site(2, T.GateMatrix(np.eye(3), 1))
    rep = s.apply_two_site(1, T.GateMatrix(np.eye(9), 2))
    assert rep.discarded == 0
    np.testing.assert_allclose(amplitudes(s, 2).amplitudes, before, atol=1e-12)


def test_phase_gate_is_global_phase():
    s = T.product_state((2, 1), 3, 9)
    s.apply(F.phase(1, 0.7))
    psi = amplitudes(s, 3)
    assert psi.amplitude((2, 1)) == pytest.approx(np.exp(1.4j))
    assert O.infidelity(psi, O.fock_state(psi.basis, (2, 1))) < 1e-15


def test_scale_gate_then_renormalize():
    s = T.product_state((1, 1), 2, 4)
    s.apply(F.scale(1, -0.3))
    assert T.mps_norm(s) == pytest.approx(math.exp(-0.3))
    T.renormalize(s)
    assert T.mps_norm(s) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(np.abs(amplitudes(s, 2).amplitudes), [0, 1, 0], atol=1e-15)


def test_imaginary_interaction_norm():
    s = T.product_state((1, 0), 3, 4)
    s.apply_one_site(1, T.interaction_gate(10, 1e-2, 3, "imaginary"))
    assert T.mps_norm(s) == pytest.approx(math.exp(-0.05))


def test_rotation_pi_swaps_occupations():
    s = T.product_state((1, 0), 2, 4)
    s.apply(F.rotation(1, math.pi))
    np.testing.assert_allclose([s.expectation_n(1), s.expectation_n(2)], [0, 1], atol=1e-14)


def test_even_superposition_moments():
    s = T.product_state((1, 0), 2, 4)
    s.apply(F.rotation(1, math.pi / 2))
    for j in (1, 2):
        assert s.expectation_n(j) == pytest.approx(0.5)
        assert s.variance_n(j) == pytest.approx(0.25)
    a, ad, n = T.local_operators(2)
    assert s.expectation(1, n) == pytest.approx(0.5)


def test_fock_variance_is_zero():
    s = T.product_state((1, 2, 0), 4, 4)
    _, var = s.occupation_profile()
    np.testing.assert_array_equal(var, 0)


def test_single_rotation_matches_oracle():
    t = F.rotation(1, 1.1)
    s = run_transforms([t], (1, 1), 3, 9)
    assert O.infidelity(amplitudes(s, 2), plan_state([t], (1, 1))) <= 1e-12


def test_full_rank_gate_has_no_discard():
    s = T.product_state((1, 1), 3, 9)
    rep = s.apply(F.rotation(1, 0.4))
    assert rep.discarded <= 1e-14


def test_two_site_gate_rejects_bad_site():
    s = T.product_state((1, 1), 3, 9)
    with pytest.raises(T.TensorError):
        s.apply(F.rotation(2, 0.4))


# -- random gate sequences against the oracle


transform_st = st.one_of(
    st.builds(F.rotation, st.integers(1, 3), st.floats(-math.pi, math.pi)),
    st.builds(F.phase, st.integers(1, 4), st.floats(-math.pi, math.pi)),
    st.builds(F.pair, st.integers(1, 3), st.floats(-math.pi, math.pi), st.floats(-0.2, 0.2)),
    st.builds(F.scale, st.integers(1, 4), st.floats(-0.3, 0.3)),
)


@settings(max_examples=30, deadline=None)
@given(st.lists(transform_st, min_size=1, max_size=12),
       st.lists(st.integers(0, 2), min_size=4, max_size=4).filter(lambda o: 0 < sum(o) <= 5))
def test_full_rank_exactness(transforms, occupations):
    M = sum(occupations)
    chi = T.max_schmidt_rank(4, M)
    s = run_transforms(transforms, occupations, M + 1, chi)
    ref = plan_state(transforms, occupations).normalized()
    assert O.infidelity(amplitudes(s, M), ref) <= 1e-10
    assert s.canonical_residual() <= 1e-10
    assert abs(s.total_number() - M) <= 1e-10


def test_norm_drift_over_many_unitary_gates(rng):
    s = T.product_state((1, 1, 1, 1, 1), 6, 14)
    for k in range(1000):
        s.apply(F.rotation(1 + k % 4, rng.uniform(-3, 3)))
    assert abs(T.mps_norm(s) - 1) < 1e-10
    assert s.canonical_residual() <= 1e-10
    assert abs(s.total_number() - 5) <= 1e-10


def test_truncation_monotone_in_chi(rng):
    ts = [F.rotation(1 + k % 5, rng.uniform(-3, 3)) for k in range(40)]
    discards = []
    for chi in (2, 4, 8, 16, 36):
        s = T.product_state((1,) * 6, 7, chi)
        for t in ts:
            s.apply(t)
        discards.append(s.discarded_total)
        assert max(s.bond_dimensions()) <= chi
    assert all(a >= b - 1e-15 for a, b in zip(discards, discards[1:]))
    assert discards[0] > 0 and discards[-1] < 1e-13


def test_bond_spectra_sorted_and_normalised(rng):
    s = T.product_state((1, 1, 1, 1), 5, 9)
    for k in range(12):
        s.apply(F.rotation(1 + k % 3, rng.uniform(-3, 3)))
    for cut in (1, 2, 3):
        lam = s.schmidt_values(cut)
        assert np.all(lam >= 0) and np.all(np.diff(lam) <= 1e-15)
        assert np.sum(lam ** 2) == pytest.approx(1, abs=1e-12)


def test_leakage_reduces_number():
    # cap of one boson per site: the second particle partly leaks out of the space
    s = T.product_state((1, 1), 2, 4)
    g = T.synthesize_gate(F.rotation(1, 0.9), 2)
    assert g.leakage > 0
    s.apply_two_site(1, g)
    assert T.mps_norm(s) < 1
    assert s.leaked_total > 0
    # the lost weight is uneven across Schmidt states; measurements re-canonicalise
    assert not s.canonical
    assert s.total_number() == pytest.approx(2, abs=1e-14)
    assert s.canonical_residual() <= 1e-12


def test_non_conserving_gate_drops_labels():
    s = T.product_state((1, 0), 2, 4)
    assert s.symmetric
    a, ad, n = T.local_operators(2)
    s.apply_one_site(1, T.GateMatrix(np.eye(2) + 0.3 * (a + ad), 1))
    assert not s.symmetric
    s.renormalize()
    assert s.canonical_residual() <= 1e-10


# -- frames and serialisation


def test_mirrored_state_is_site_reversal(rng):
    ts = [F.rotation(1 + k % 3, rng.uniform(-3, 3)) for k in range(8)]
    s = run_transforms(ts, (2, 1, 0, 1), 5, 20)
    psi = amplitudes(s, 4)
    m = s.copy()
    m.reflect()
    psi_m = amplitudes(m, 4)
    for occ in psi.basis.states:
        assert psi_m.amplitude(occ[::-1]) == pytest.approx(psi.amplitude(occ), abs=1e-14)
    means, _ = s.occupation_profile()
    np.testing.assert_allclose(m.occupation_profile()[0], means[::-1], atol=1e-14)
    m.materialize()
    assert not m.mirrored
    assert O.infidelity(amplitudes(m, 4), psi_m) < 1e-12


def test_gate_in_mirrored_frame(rng):
    # applying g on logical sites (1, 2) of the reflected state equals reflecting g's image
    t = F.pair(1, 0.3, 0.1)
    s = T.product_state((1, 2, 0), 4, 10)
    s.reflect()
    s.apply(t)
    s.reflect()
    direct = T.product_state((1, 2, 0), 4, 10)
    # logical (1, 2) of the reversed chain are physical sites (3, 2) in reversed roles
    g = T.synthesize_gate(t, 4)
    direct.apply_two_site(2, T.GateMatrix(g.swapped, 2, g.leakage, g.unitary))
    s.renormalize()
    direct.renormalize()
    assert O.infidelity(amplitudes(s, 3), amplitudes(direct, 3)) < 1e-12


def test_dumps_loads_roundtrip(rng):
    s = run_transforms([F.rotation(1, 0.4), F.rotation(2, -1.2), F.phase(3, 0.3)],
                       (1, 1, 1), 4, 10)
    back = T.TensorState.loads(s.dumps())
    assert back.dumps() == s.dumps()
    np.testing.assert_array_equal(amplitudes(back, 3).amplitudes, amplitudes(s, 3).amplitudes)


def test_profile_csv_header():
    text = T.product_state((1, 0), 2, 2).profile_csv()
    assert text.splitlines()[0] == "site,mean,variance"
    assert text.splitlines()[1].startswith("1,1,0")


# -- Schmidt rank arithmetic


def test_max_schmidt_rank_eight_sites():
    assert T.max_schmidt_rank(8, 8) == 105
    assert sum(min(math.comb(k + 3, 3), math.comb(11 - k, 3)) for k in range(9)) == 105


@pytest.mark.parametrize("N,value", [(4, 9), (5, 14), (6, 30)])
def test_max_schmidt_rank_small(N, value):
    assert T.max_schmidt_rank(N, N) == value


def test_max_schmidt_rank_with_cap():
    assert T.max_schmidt_rank(12, 12, n_max=4) == 1338
    assert T.max_schmidt_rank(12, 12, n_max=4) < T.max_schmidt_rank(12, 12)


def test_max_schmidt_rank_is_reached(rng):
    # a generic state at full rank saturates the bound across the centre
    s = T.product_state((1, 1, 1, 1), 5, 50)
    for k in range(60):
        s.apply(F.rotation(1 + k % 3, rng.uniform(-3, 3)))
        s.apply(F.phase(1 + k % 4, rng.uniform(-3, 3)))
    assert len(s.schmidt_values(2)) == T.max_schmidt_rank(4, 4)
