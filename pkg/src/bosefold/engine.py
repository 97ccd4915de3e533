"""Evolution drivers built on the tensor state.

A step program is a fixed list of gate operations assembled once per
(Hamiltonian, slice) and replayed every step. Two families exist:

* mode folding: half interaction gates, the folded single-particle plan,
  half interaction gates (second-order split of H = H_SP + H_MP);
* Trotter-Suzuki: even-odd bond splitting with exact bond exponentials.

Real-time runs can be compared against the exact Fock-space propagator;
imaginary-time runs drive the state to the ground state.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import folding, oracle
from .model import BoseHubbardParams, single_particle_matrix, unit_filling
from .tensor import (GateMatrix, TensorError, TensorState, bond_hamiltonian_gate,
                     interaction_gate, local_operators, max_schmidt_rank, product_state,
                     synthesize_gate)

ORACLE_LIMIT = 10**5
MF_SCHEMES = ("mf-normal", "mf-inverse", "mf-banded", "spectral")
SCHEMES = MF_SCHEMES + ("tse",)


class EngineError(RuntimeError):
    pass


class GroundStateDivergence(EngineError):
    def __init__(self, message, energies):
        super().__init__(message)
        self.energies = energies


# -- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    scheme: str = "mf-inverse"
    t_s: float = 1e-3
    T: float = 1.0
    chi: int = 64
    n_max: int | None = None
    eta: int | None = None
    cadence: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.t_s > 0:
            raise ValueError(f"t_s must be positive, got {self.t_s}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if self.scheme == "mf-banded" and (self.eta is None or self.eta < 1):
            raise ValueError("banded scheme needs eta >= 1")
        if self.chi < 1 or self.cadence < 1:
            raise ValueError("chi and cadence must be positive")

    @property
    def steps(self) -> int:
        return steps_for(self.T, self.t_s)


@dataclass(frozen=True)
class GroundConfig:
    tau_s: float = 1e-3
    tol: float = 1e-10
    max_sweeps: int = 10**6
    chi: int = 64
    n_max: int | None = None
    cadence: int = 1
    patience: int = 10
    rise_tol: float = 1e-6
    alternate: bool = True

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ValueError(f"tau_s must be positive, got {self.tau_s}")
        if self.tol < 0 or self.max_sweeps < 1 or self.chi < 1:
            raise ValueError("invalid ground-state configuration")


def steps_for(T: float, t_s: float) -> int:
    n = T / t_s
    steps = int(round(n))
    if abs(n - steps) > 1e-9 * max(1.0, n):
        raise ValueError(f"T={T} is not an integer multiple of t_s={t_s}")
    return steps


def local_dimension(params: BoseHubbardParams, n_max: int | None) -> int:
    return (params.M if n_max is None else n_max) + 1


# -- step programs ----------------------------------------------------------------

class Op(NamedTuple):
    kind: str  # "one", "two" or "reflect"
    site: int
    gate: GateMatrix | None


@dataclass
class StepProgram:
    ops: list
    scheme: str
    t_s: float
    d: int
    imaginary: bool = False
    plan: folding.FoldingPlan | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def two_site_count(self) -> int:
        return sum(op.kind == "two" for op in self.ops)

    @property
    def one_site_count(self) -> int:
        return sum(op.kind == "one" for op in self.ops)

    @property
    def max_leakage(self) -> float:
        return max((op.gate.leakage for op in self.ops if op.gate is not None), default=0.0)

    def apply(self, state: TensorState) -> tuple:
        if state.d != self.d:
            raise EngineError(f"state local dimension {state.d} != program dimension {self.d}")
        discarded = leaked = 0.0
        for op in self.ops:
            if op.kind == "two":
                rep = state.apply_two_site(op.site, op.gate)
                discarded += rep.discarded
                leaked += rep.leaked
            elif op.kind == "one":
                state.apply_one_site(op.site, op.gate)
            else:
                state.reflect()
        if self.imaginary:
            state.renormalize()
        elif not state.canonical:
            state.canonicalize()
        return discarded, leaked


def _interaction_ops(params: BoseHubbardParams, slice_: float, d: int, mode: str) -> list:
    if params.U == 0:
        return []
    gate = interaction_gate(params.U, slice_, d, mode)
    return [Op("one", j, gate) for j in range(1, params.N + 1)]


def _plan_ops(plan: folding.FoldingPlan, d: int) -> list:
    ops = [Op("reflect", 0, None)] if plan.reflect else []
    cache = {}
    for t in plan:
        key = (t.kind, t.params)
        if key not in cache:
            cache[key] = synthesize_gate(t, d)
        ops.append(Op("two" if t.two_site else "one", t.site, cache[key]))
    return ops


def single_particle_plan(params: BoseHubbardParams, t_s: float, scheme: str,
                         eta: int | None = None, imaginary: bool = False) -> folding.FoldingPlan:
    h = single_particle_matrix(params)
    if imaginary:
        return folding.fold_nonunitary(folding.propagate_imaginary(h, t_s))
    if scheme == "spectral":
        return folding.spectral_plan(h, t_s)
    stack = folding.propagate(h, t_s)
    if scheme == "mf-normal":
        return folding.fold_normal(stack)
    if scheme == "mf-inverse":
        return folding.fold_inverse(stack)
    if scheme == "mf-banded":
        return folding.fold_banded(stack, eta)
    raise ValueError(f"not a mode-folding scheme: {scheme!r}")


def build_step_mf(params: BoseHubbardParams, t_s: float, scheme: str = "mf-inverse",
                  n_max: int | None = None, eta: int | None = None,
                  imaginary: bool = False, mirrored: bool = False) -> StepProgram:
    """Half interaction, folded single-particle slice, half interaction.

    With ``mirrored`` the stack of the reflected chain is folded and its gates
    are applied in the reflected frame, so the same slice is produced with the
    fold running in the opposite spatial direction.
    """
    d = local_dimension(params, n_max)
    source = params.replace(mu=params.mu[::-1]) if mirrored else params
    plan = single_particle_plan(source, t_s, scheme, eta, imaginary)
    mode = "imaginary" if imaginary else "real"
    half = _interaction_ops(params, 0.5 * t_s, d, mode)
    middle = _plan_ops(plan, d)
    if mirrored:
        middle = [Op("reflect", 0, None)] + middle + [Op("reflect", 0, None)]
    ops = half + middle + half
    tag = "mf-nonunitary" if imaginary else scheme
    return StepProgram(ops, tag, t_s, d, imaginary, plan, dict(plan.metadata))


def bond_hamiltonian(params: BoseHubbardParams, j: int, d: int) -> np.ndarray:
    """Two-site Hamiltonian on bond (j, j+1); on-site terms shared between adjacent bonds."""
    a, ad, n = local_operators(d)
    eye = np.eye(d)
    onsite = lambda k: 0.5 * params.U * n @ (n - eye) + params.mu[k - 1] * n
    N = params.N
    w_left = 1.0 if j == 1 else 0.5
    w_right = 1.0 if j + 1 == N else 0.5
    hop = -params.J * (np.kron(a, ad) + np.kron(ad, a))
    return (hop + w_left * np.kron(onsite(j), eye) + w_right * np.kron(eye, onsite(j + 1)))


def build_step_tse(params: BoseHubbardParams, t_s: float, n_max: int | None = None,
                   imaginary: bool = False) -> StepProgram:
    """Second-order even-odd splitting: odd bonds t_s/2, even bonds t_s, odd bonds t_s/2."""
    d = local_dimension(params, n_max)
    N = params.N
    dt = (lambda x: -1j * x) if imaginary else (lambda x: x)
    if N == 1:
        a, ad, n = local_operators(d)
        h1 = 0.5 * params.U * n @ (n - np.eye(d)) + params.mu[0] * n
        gate = bond_hamiltonian_gate(h1, dt(t_s), d)
        return StepProgram([Op("one", 1, GateMatrix(gate.matrix, 1, 0.0, gate.unitary))],
                           "tse", t_s, d, imaginary)
    odd = list(range(1, N, 2))
    even = list(range(2, N, 2))
    half = {j: bond_hamiltonian_gate(bond_hamiltonian(params, j, d), dt(0.5 * t_s), d)
            for j in odd}
    full = {j: bond_hamiltonian_gate(bond_hamiltonian(params, j, d), dt(t_s), d)
            for j in even}
    ops = ([Op("two", j, half[j]) for j in odd] + [Op("two", j, full[j]) for j in even]
           + [Op("two", j, half[j]) for j in odd])
    return StepProgram(ops, "tse", t_s, d, imaginary)


def build_program(params: BoseHubbardParams, config: EvolutionConfig) -> StepProgram:
    if config.scheme == "tse":
        return build_step_tse(params, config.t_s, config.n_max)
    return build_step_mf(params, config.t_s, config.scheme, config.n_max, config.eta)


def energy(state: TensorState, params: BoseHubbardParams) -> float:
    """<H> from nearest-neighbour bond expectations."""
    if params.N == 1:
        n = np.arange(state.d, dtype=float)
        rho = np.real(np.diagonal(state.site_density(1)))
        rho = rho / rho.sum()
        return float(rho @ (0.5 * params.U * n * (n - 1) + params.mu[0] * n))
    return float(sum(state.bond_expectation(j, bond_hamiltonian(params, j, state.d)).real
                     for j in range(1, params.N)))


# -- exact reference --------------------------------------------------------------

class ExactReference:
    """Exact real-time trajectory of a Fock initial state, advanced incrementally."""

    def __init__(self, params: BoseHubbardParams, psi0: oracle.FockVector):
        self.basis = psi0.basis
        self.propagator = oracle.Propagator(oracle.build_hamiltonian(params, self.basis))
        self.psi0 = psi0.amplitudes
        self._t, self._psi = 0.0, psi0.amplitudes

    @classmethod
    def from_occupations(cls, params, occupations):
        basis = oracle.enumerate_basis(params.N, params.M)
        return cls(params, oracle.fock_state(basis, occupations))

    def state(self, t: float) -> np.ndarray:
        if self.propagator.dense:
            return self.propagator.apply(self.psi0, t)
        if t < self._t:
            self._t, self._psi = 0.0, self.psi0
        self._psi = self.propagator.apply(self._psi, t - self._t)
        self._t = t
        return self._psi


def oracle_enabled(params: BoseHubbardParams, mode: str = "auto") -> bool:
    if mode == "off":
        return False
    dim = oracle.sector_dimension(params.N, params.M)
    if mode == "on":
        if dim > oracle.DEFAULT_DIMENSION_CAP:
            raise EngineError(f"oracle requested but Fock dimension {dim} exceeds the cap")
        return True
    if mode != "auto":
        raise ValueError(f"oracle mode must be on, off or auto, got {mode!r}")
    return dim <= ORACLE_LIMIT


def state_infidelity(state: TensorState, reference: np.ndarray, basis) -> float:
    v = state.fock_amplitudes(basis).amplitudes
    v = v / np.linalg.norm(v)
    r = reference / np.linalg.norm(reference)
    return float(min(max(1.0 - abs(np.vdot(r, v)) ** 2, 0.0), 1.0))


# -- trajectories -----------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    means: list = field(default_factory=list)
    variances: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    discarded: list = field(default_factory=list)
    leaked: list = field(default_factory=list)
    total_number: list = field(default_factory=list)
    gate_count: int = 0
    scheme: str = ""

    def measure(self, t, state, delta, discarded, leaked):
        means, variances = state.occupation_profile()
        self.times.append(float(t))
        self.means.append(means)
        self.variances.append(variances)
        self.delta.append(delta)
        self.discarded.append(discarded)
        self.leaked.append(leaked)
        self.total_number.append(float(means.sum()))

    def __len__(self):
        return len(self.times)

    def to_csv(self) -> str:
        rows = ["time,site,mean_n,var_n,delta,discarded_weight,gate_count"]
        for t, m, v, dl, dw in zip(self.times, self.means, self.variances, self.delta,
                                   self.discarded):
            dtext = "" if dl is None else f"{dl:.17g}"
            for j in range(len(m)):
                rows.append(f"{t:.17g},{j + 1},{m[j]:.17g},{v[j]:.17g},{dtext},"
                            f"{dw:.17g},{self.gate_count}")
        return "\n".join(rows) + "\n"


def evolve(state: TensorState, program: StepProgram, steps: int,
           record: TrajectoryRecord | None = None, cadence: int = 1,
           reference: ExactReference | None = None, t0: float = 0.0) -> TrajectoryRecord:
    """Apply the program ``steps`` times, measuring every ``cadence`` steps."""
    record = TrajectoryRecord() if record is None else record
    record.gate_count = program.two_site_count
    record.scheme = program.scheme
    discarded = state.discarded_total
    leaked = state.leaked_total

    def measure(k):
        t = t0 + k * program.t_s
        delta = None
        if reference is not None:
            delta = state_infidelity(state, reference.state(t), reference.basis)
        record.measure(t, state, delta, state.discarded_total - discarded,
                       state.leaked_total - leaked)

    if not record.times:
        measure(0)
    for k in range(1, steps + 1):
        program.apply(state)
        if not math.isfinite(state.norm_factor):
            raise EngineError(f"non-finite norm after step {k} (t={t0 + k * program.t_s:.6g}); "
                              f"bond dimensions {state.bond_dimensions()}")
        if k % cadence == 0 or k == steps:
            measure(k)
    return record


def initial_state(params: BoseHubbardParams, occupations, d: int, chi: int) -> TensorState:
    occupations = unit_filling(params.N) if occupations is None else tuple(occupations)
    if sum(occupations) != params.M or len(occupations) != params.N:
        raise ValueError(f"occupations {occupations} inconsistent with N={params.N}, M={params.M}")
    return product_state(occupations, d, chi)


def run_evolution(params: BoseHubbardParams, config: EvolutionConfig, occupations=None,
                  oracle_mode: str = "auto", state: TensorState | None = None) -> tuple:
    """Evolve a Fock product state (or a given state); returns (record, final state)."""
    program = build_program(params, config)
    reference = None
    if state is None:
        state = initial_state(params, occupations, program.d, config.chi)
        if oracle_enabled(params, oracle_mode):
            occ = unit_filling(params.N) if occupations is None else tuple(occupations)
            reference = ExactReference.from_occupations(params, occ)
    elif oracle_enabled(params, oracle_mode):
        basis = oracle.enumerate_basis(params.N, params.M)
        reference = ExactReference(params, state.fock_amplitudes(basis).normalized())
    record = evolve(state, program, config.steps, cadence=config.cadence, reference=reference)
    return record, state


# -- imaginary time ---------------------------------------------------------------

@dataclass
class GroundResult:
    state: TensorState
    energies: list
    sweeps: int
    converged: bool
    delta: list = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.energies[-1]


def ground_state_mf(params: BoseHubbardParams, config: GroundConfig, occupations=None,
                    scheme: str = "mf", target: np.ndarray | None = None,
                    callback=None) -> GroundResult:
    """Imaginary-time projection with renormalisation after every sweep.

    ``scheme`` is "mf" (non-unitary fold) or "tse". The non-unitary fold runs
    along the chain in one direction and its slice error is not reflection
    symmetric; with ``config.alternate`` every other sweep uses the mirrored
    fold, so the error cancels to leading order between the two. Energies are
    then compared between sweeps of equal parity.

    The folded step is not a symmetric contraction, so the energy may dip
    slightly below its fixed-point value and climb back. Only rises above
    ``config.rise_tol * max(1, |E|)`` per period count towards the
    divergence guard.

    When ``target`` (an exact ground-state vector) is given, the infidelity
    is recorded every ``config.cadence`` sweeps.
    """
    if scheme == "mf":
        programs = [build_step_mf(params, config.tau_s, n_max=config.n_max, imaginary=True)]
        if config.alternate and params.N > 2:
            programs.append(build_step_mf(params, config.tau_s, n_max=config.n_max,
                                          imaginary=True, mirrored=True))
    elif scheme == "tse":
        programs = [build_step_tse(params, config.tau_s, config.n_max, imaginary=True)]
    else:
        raise ValueError(f"unknown ground-state scheme {scheme!r}")
    period = len(programs)
    program = programs[0]
    state = initial_state(params, occupations, program.d, config.chi)
    basis = oracle.enumerate_basis(params.N, params.M) if target is not None else None
    energies = [energy(state, params)]
    deltas = []
    if target is not None:
        deltas.append(state_infidelity(state, target, basis))
    rising = 0
    converged = False
    sweep = 0
    for sweep in range(1, config.max_sweeps + 1):
        programs[(sweep - 1) % period].apply(state)
        energies.append(energy(state, params))
        if target is not None and sweep % config.cadence == 0:
            deltas.append(state_infidelity(state, target, basis))
        if callback is not None:
            callback(sweep, state, energies[-1])
        if sweep < period:
            continue
        change = energies[-1] - energies[-1 - period]
        noise = config.rise_tol * max(1.0, abs(energies[-1]))
        rising = rising + 1 if change > noise else 0
        if rising > config.patience:
            raise GroundStateDivergence(
                f"energy increased for {rising} consecutive sweeps at sweep {sweep}", energies)
        if abs(change) < config.tol * config.tau_s:
            converged = True
            break
    return GroundResult(state, energies, sweep, converged, deltas)


def exact_ground(params: BoseHubbardParams) -> oracle.GroundState:
    basis = oracle.enumerate_basis(params.N, params.M)
    return oracle.ground_state_exact(oracle.build_hamiltonian(params, basis), basis)


# -- quench -----------------------------------------------------------------------

@dataclass
class QuenchResult:
    ground: GroundResult
    record: TrajectoryRecord
    state: TensorState


def run_quench(ground_params: BoseHubbardParams, ground_config: GroundConfig,
               quench_params: BoseHubbardParams, evo_config: EvolutionConfig,
               occupations=None, oracle_mode: str = "off") -> QuenchResult:
    if (ground_params.N, ground_params.M) != (quench_params.N, quench_params.M):
        raise ValueError("ground and quench parameters must share N and M")
    if local_dimension(ground_params, ground_config.n_max) != local_dimension(
            quench_params, evo_config.n_max):
        raise ValueError("ground and quench runs must use the same occupation cap")
    ground = ground_state_mf(ground_params, ground_config, occupations)
    state = ground.state.copy()
    state.chi = evo_config.chi
    state.norm_factor = 1.0
    record, state = run_evolution(quench_params, evo_config, oracle_mode=oracle_mode,
                                  state=state)
    return QuenchResult(ground, record, state)


# -- benchmarking -----------------------------------------------------------------

class BenchRow(NamedTuple):
    scheme: str
    t_s: float
    chi: int
    delta: float
    two_site_per_step: int
    wall_per_step: float


def _bench_one(params, scheme, t_s, chi, T, n_max, eta, occupations):
    config = EvolutionConfig(scheme=scheme, t_s=t_s, T=T, chi=chi, n_max=n_max, eta=eta,
                             cadence=steps_for(T, t_s) or 1)
    start = time.perf_counter()
    record, _ = run_evolution(params, config, occupations, oracle_mode="on")
    wall = time.perf_counter() - start
    return BenchRow(scheme, t_s, chi, record.delta[-1], record.gate_count,
                    wall / max(config.steps, 1))


def benchmark(params: BoseHubbardParams, schemes, t_s_list, chi_list, T: float,
              n_max: int | None = None, eta: int | None = None, occupations=None,
              threads: int = 1) -> list:
    """Delta(T) against the oracle for every (scheme, t_s, chi); sorted by that key."""
    keys = sorted((s, t, c) for s in schemes for t in t_s_list for c in chi_list)
    job = lambda k: _bench_one(params, k[0], k[1], k[2], T, n_max, eta, occupations)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(job, keys))
    else:
        rows = [job(k) for k in keys]
    return rows


def bench_csv(rows) -> str:
    out = ["scheme,t_s,chi,delta,two_site_per_step"]
    out += [f"{r.scheme},{r.t_s:.17g},{r.chi},{r.delta:.17g},{r.two_site_per_step}" for r in rows]
    return "\n".join(out) + "\n"


def convergence_slope(t_s_list, deltas) -> float:
    """Least-squares slope of log(delta) against log(t_s)."""
    x = np.log(np.asarray(t_s_list, dtype=float))
    y = np.log(np.asarray(deltas, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def saturation_sweep(params: BoseHubbardParams, scheme: str, t_s_list, T: float, chi: int,
                     n_max: int | None = None, eta: int | None = None) -> list:
    """Delta(T) for each slice; the optimum is where the curve stops improving."""
    return [(t, _bench_one(params, scheme, t, chi, T, n_max, eta, None).delta)
            for t in t_s_list]


def full_rank_chi(params: BoseHubbardParams, n_max: int | None = None) -> int:
    return max_schmidt_rank(params.N, params.M, n_max=params.M if n_max is None else n_max)
