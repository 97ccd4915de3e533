import math

import numpy as np
import pytest

from bosefold import engine as E
from bosefold import folding as F
from bosefold import oracle as O
from bosefold.model import BoseHubbardParams, harmonic_trap
from bosefold.tensor import product_state


def params(N=4, M=None, U=1.0, J=1.0, mu=()):
    return BoseHubbardParams(N, N if M is None else M, U, J, tuple(mu))


# -- configuration


@pytest.mark.parametrize("kwargs", [dict(t_s=0), dict(t_s=-1e-3), dict(T=-1),
                                    dict(scheme="mf-banded"), dict(scheme="rk4"),
                                    dict(chi=0)])
def test_evolution_config_rejects(kwargs):
    with pytest.raises(ValueError):
        E.EvolutionConfig(**kwargs)


def test_steps_for():
    assert E.steps_for(1.0, 1e-3) == 1000
    assert E.steps_for(0.0, 0.1) == 0
    with pytest.raises(ValueError):
        E.steps_for(1.0, 0.3)


def test_ground_config_rejects_nonpositive_slice():
    with pytest.raises(ValueError):
        E.GroundConfig(tau_s=0)


# -- step programs


def test_banded_program_counts():
    prog = E.build_step_mf(params(8), 1e-3, "mf-banded", eta=2)
    assert prog.two_site_count == 13
    interaction = [op for op in prog.ops if op.kind == "one" and op.gate.arity == 1
                   and op.gate.matrix[2, 2] == pytest.approx(np.exp(-1e-3j))]
    assert len(interaction) == 16
    assert prog.one_site_count > 16  # phase strips in between


@pytest.mark.parametrize("scheme", ["mf-normal", "mf-inverse"])
def test_full_fold_counts(scheme):
    prog = E.build_step_mf(params(6), 1e-2, scheme)
    assert prog.two_site_count == 15


def test_zero_interaction_program_is_plan_only():
    prog = E.build_step_mf(params(4, U=0), 1e-2, "mf-normal")
    assert len(prog.ops) == sum(1 for t in prog.plan) + (2 if prog.plan.reflect else 0)


@pytest.mark.parametrize("N,count", [(4, 5), (8, 11), (16, 23)])
def test_tse_count(N, count):
    # odd bonds twice (half slices) plus even bonds once
    prog = E.build_step_tse(params(N), 1e-3)
    assert prog.two_site_count == count == 3 * N // 2 - 1


def test_tse_identity_without_couplings():
    prog = E.build_step_tse(params(6, U=0, J=0), 0.1)
    for op in prog.ops:
        np.testing.assert_allclose(op.gate.matrix, np.eye(49), atol=1e-15)


def test_tse_single_bond_is_exact():
    p = params(2, U=1.7, J=0.8, mu=(0.3, -0.4))
    ref = E.ExactReference.from_occupations(p, (1, 1))
    state = product_state((1, 1), 3, 3)
    prog = E.build_step_tse(p, 0.37)
    for _ in range(3):
        prog.apply(state)
    assert E.state_infidelity(state, ref.state(3 * 0.37), ref.basis) <= 1e-12


def test_bond_hamiltonian_sums_to_full_hamiltonian():
    p = params(3, M=2, U=1.3, J=0.7, mu=(0.2, -0.5, 0.9))
    d = 3
    full = np.zeros((d ** 3, d ** 3))
    eye = np.eye(d)
    full += np.kron(E.bond_hamiltonian(p, 1, d), eye)
    full += np.kron(eye, E.bond_hamiltonian(p, 2, d))
    basis = O.enumerate_basis(3, 2)
    idx = [((s[0] * d) + s[1]) * d + s[2] for s in basis.states]
    H = O.build_hamiltonian(p, basis).toarray()
    np.testing.assert_allclose(full[np.ix_(idx, idx)], H, atol=1e-14)


def test_gate_reuse_is_bit_identical():
    prog = E.build_step_mf(params(5, U=2), 1e-2, "mf-inverse")
    before = [op.gate.matrix.copy() for op in prog.ops if op.gate is not None]
    state = product_state((1,) * 5, 6, 14)
    prog.apply(state)
    prog.apply(state)
    after = [op.gate.matrix for op in prog.ops if op.gate is not None]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))
    # rotations with equal angles share one gate object
    again = E.build_step_mf(params(5, U=2), 1e-2, "mf-inverse")
    assert all(np.array_equal(a.gate.matrix, b.gate.matrix)
               for a, b in zip(prog.ops, again.ops) if a.gate is not None)


def test_state_dimension_mismatch():
    prog = E.build_step_mf(params(3), 1e-2, "mf-normal")
    with pytest.raises(E.EngineError):
        prog.apply(product_state((1, 1, 1), 3, 4))


# -- real-time evolution against the oracle


@pytest.mark.parametrize("scheme", ["mf-normal", "mf-inverse", "spectral"])
def test_single_particle_step_is_exact(scheme):
    p = params(4, U=0, mu=(0.1, -0.3, 0.5, 0.2))
    record, _ = E.run_evolution(p, E.EvolutionConfig(scheme, 0.25, 0.5, 9, cadence=1))
    assert max(record.delta) <= 1e-10


def test_interacting_evolution_tracks_oracle():
    p = params(4, U=1)
    record, state = E.run_evolution(p, E.EvolutionConfig("mf-inverse", 1e-2, 1.0, 9, cadence=20))
    assert record.delta[-1] < 1e-5
    assert all(abs(n - 4) <= 1e-8 for n in record.total_number)
    assert len(set(record.times)) == len(record.times) == 6


def test_zero_steps_records_initial_data_only():
    record, _ = E.run_evolution(params(3), E.EvolutionConfig("mf-inverse", 0.1, 0.0, 10))
    assert record.times == [0.0]
    assert record.delta == [0.0]


def test_truncated_bond_dimension_degrades_accuracy():
    p = params(5, U=1)
    cfg = dict(scheme="mf-inverse", t_s=2e-2, T=0.4, cadence=20)
    full, _ = E.run_evolution(p, E.EvolutionConfig(chi=14, **cfg))
    half, _ = E.run_evolution(p, E.EvolutionConfig(chi=7, **cfg))
    assert half.delta[-1] > 100 * full.delta[-1]
    assert sum(half.discarded) > 0


def test_second_order_split(tmp_path):
    p = params(3, U=2)
    deltas = []
    for t_s in (4e-2, 2e-2, 1e-2):
        rec, _ = E.run_evolution(p, E.EvolutionConfig("mf-inverse", t_s, 0.4, 6, cadence=1000))
        deltas.append(rec.delta[-1])
    # the infidelity is quadratic in a state error of second order
    assert E.convergence_slope([4e-2, 2e-2, 1e-2], np.sqrt(deltas)) == pytest.approx(2, abs=0.3)


def test_trajectory_csv_layout():
    record, _ = E.run_evolution(params(2), E.EvolutionConfig("tse", 0.1, 0.2, 3, cadence=1))
    lines = record.to_csv().splitlines()
    assert lines[0] == "time,site,mean_n,var_n,delta,discarded_weight,gate_count"
    assert len(lines) == 1 + 3 * 2
    assert lines[1].split(",")[-1] == "2"  # the single bond, twice at half slice


def test_oracle_modes():
    assert E.oracle_enabled(params(4), "auto")
    assert not E.oracle_enabled(params(4), "off")
    assert not E.oracle_enabled(params(20), "auto")
    with pytest.raises(E.EngineError):
        E.oracle_enabled(params(20), "on")
    with pytest.raises(ValueError):
        E.oracle_enabled(params(4), "maybe")


def test_energy_matches_oracle_expectation(rng):
    p = params(4, U=1.5, J=0.6, mu=(0.1, 0.4, -0.2, 0.0))
    state = product_state((1, 1, 1, 1), 5, 9)
    for k in range(10):
        state.apply(F.rotation(1 + k % 3, rng.uniform(-3, 3)))
        state.apply(F.phase(1 + k % 4, rng.uniform(-3, 3)))
    basis = O.enumerate_basis(4, 4)
    psi = state.fock_amplitudes(basis).normalized().amplitudes
    H = O.build_hamiltonian(p, basis)
    assert E.energy(state, p) == pytest.approx(np.vdot(psi, H @ psi).real, abs=1e-12)


# -- imaginary time


def test_ground_state_without_hopping_is_immediate():
    result = E.ground_state_mf(params(4, U=5, J=0), E.GroundConfig(tau_s=1e-2, chi=9))
    assert result.converged and result.sweeps <= 2
    assert result.energy == 0
    np.testing.assert_allclose(result.state.occupation_profile()[0], 1, atol=1e-14)


def test_ground_state_energy_is_monotone():
    result = E.ground_state_mf(params(4, U=10), E.GroundConfig(tau_s=1e-2, chi=9))
    assert result.converged
    assert np.max(np.diff(result.energies)) <= 1e-10
    assert result.energy == pytest.approx(E.exact_ground(params(4, U=10)).energy, abs=1e-4)


def test_ground_state_infidelity_floor_depends_on_slice():
    p = params(3, U=4)
    target = E.exact_ground(p).state.amplitudes
    floors = [E.ground_state_mf(p, E.GroundConfig(tau_s=tau, chi=4), target=target).delta[-1]
              for tau in (2e-2, 1e-2)]
    assert floors[1] < floors[0]
    assert floors[1] < 1e-4


def test_tse_ground_state():
    p = params(4, U=2)
    result = E.ground_state_mf(p, E.GroundConfig(tau_s=1e-2, chi=9), scheme="tse")
    assert result.energy == pytest.approx(E.exact_ground(p).energy, abs=1e-3)


def test_symmetric_trap_gives_symmetric_profile():
    p = params(5, U=4, mu=harmonic_trap(5, 0.3, 3))
    result = E.ground_state_mf(p, E.GroundConfig(tau_s=1e-2, chi=14))
    means, _ = result.state.occupation_profile()
    assert np.abs(means - means[::-1]).max() < 2e-4
    assert means.sum() == pytest.approx(5, abs=1e-9)


def test_divergence_guard():
    with pytest.raises(E.GroundStateDivergence) as info:
        E.ground_state_mf(params(3, U=1), E.GroundConfig(tau_s=1e-2, chi=4, patience=2,
                                                          rise_tol=-1.0))
    assert len(info.value.energies) > 2


def test_unknown_ground_scheme():
    with pytest.raises(ValueError):
        E.ground_state_mf(params(2), E.GroundConfig(), scheme="dmrg")


# -- quench


def test_quench_from_exact_eigenstate_is_static():
    p = params(4, U=3, J=0)
    q = E.run_quench(p, E.GroundConfig(tau_s=1e-2, chi=9), p,
                     E.EvolutionConfig("mf-inverse", 1e-2, 1.0, 9, cadence=10))
    means = np.array(q.record.means)
    assert np.abs(means - means[0]).max() <= 1e-8


def test_quench_conserves_number_and_spreads():
    g = params(4, U=10, mu=harmonic_trap(4, 0.5, 2.5))
    qp = params(4, U=0, J=0.5)
    q = E.run_quench(g, E.GroundConfig(tau_s=1e-2, chi=9), qp,
                     E.EvolutionConfig("mf-inverse", 5e-2, 1.0, 9, cadence=2),
                     oracle_mode="on")
    assert all(abs(n - 4) <= 1e-8 for n in q.record.total_number)
    var = np.array(q.record.variances)
    assert var[-1].mean() > var[0].mean()
    assert q.record.delta[-1] <= 1e-10  # U = 0 after the quench: the fold is exact


def test_quench_requires_matching_sectors():
    with pytest.raises(ValueError):
        E.run_quench(params(4), E.GroundConfig(), params(5), E.EvolutionConfig())


# -- benchmarking


def test_benchmark_rows_sorted_and_thread_independent():
    p = params(3, U=1)
    kw = dict(schemes=["tse", "mf-inverse"], t_s_list=[0.1, 0.05], chi_list=[4], T=0.2)
    rows = E.benchmark(p, **kw)
    keys = [(r.scheme, r.t_s, r.chi) for r in rows]
    assert keys == sorted(keys)
    threaded = E.benchmark(p, threads=2, **kw)
    assert [r.delta for r in rows] == [r.delta for r in threaded]
    text = E.bench_csv(rows)
    assert text.splitlines()[0] == "scheme,t_s,chi,delta,two_site_per_step"


def test_benchmark_zero_interaction_column():
    rows = E.benchmark(params(4, U=0), ["mf-inverse"], [0.1, 0.05], [9], 0.5)
    assert all(r.delta <= 1e-10 for r in rows)


def test_saturation_sweep_and_full_rank():
    p = params(3, U=1)
    out = E.saturation_sweep(p, "mf-inverse", [0.1, 0.05], 0.2, E.full_rank_chi(p))
    assert [t for t, _ in out] == [0.1, 0.05]
    assert out[1][1] < out[0][1]
    assert E.full_rank_chi(params(8)) == 105


@pytest.mark.slow
def test_chi_beyond_maximal_rank_changes_nothing():
    p = params(8, U=1)
    cfg = dict(scheme="mf-banded", eta=2, t_s=1e-3, T=0.01, cadence=10)
    a, _ = E.run_evolution(p, E.EvolutionConfig(chi=105, **cfg))
    b, _ = E.run_evolution(p, E.EvolutionConfig(chi=150, **cfg))
    assert abs(a.delta[-1] - b.delta[-1]) <= 0.1 * a.delta[-1] + 1e-14
