"""Exact reference engine in the fixed-particle-number Fock basis.

Only feasible for small chains; everything here is dense or plain sparse
linear algebra and serves as ground truth for the tensor-state engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, expm_multiply

from .model import BoseHubbardParams

DEFAULT_DIMENSION_CAP = 10**6
DENSE_LIMIT = 5000


class OracleError(RuntimeError):
    pass


class DimensionOverflow(OracleError):
    pass


def sector_dimension(N: int, M: int) -> int:
    return math.comb(N + M - 1, M)


class FockBasis:
    """Occupation tuples of M bosons on N sites, lexicographically descending."""

    def __init__(self, N: int, M: int, states: np.ndarray):
        self.N = N
        self.M = M
        self.states = states
        self.states.setflags(write=False)
        self._index = {tuple(int(x) for x in s): i for i, s in enumerate(states)}

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        return f"FockBasis(N={self.N}, M={self.M}, dim={len(self)})"

    def index(self, occupations) -> int:
        return self._index[tuple(int(x) for x in occupations)]

    def lookup(self, states: np.ndarray) -> np.ndarray:
        """Vectorised index lookup; -1 for tuples outside the basis."""
        get = self._index.get
        return np.fromiter((get(tuple(s), -1) for s in states.tolist()),
                           dtype=np.int64, count=len(states))

    def __contains__(self, occupations):
        return tuple(int(x) for x in occupations) in self._index


def _compositions(N: int, M: int):
    if N == 1:
        yield (M,)
        return
    for first in range(M, -1, -1):
        for rest in _compositions(N - 1, M - first):
            yield (first,) + rest


@lru_cache(maxsize=64)
def enumerate_basis(N: int, M: int, cap: int = DEFAULT_DIMENSION_CAP) -> FockBasis:
    if N < 1 or M < 0:
        raise ValueError(f"invalid sector N={N}, M={M}")
    dim = sector_dimension(N, M)
    if dim > cap:
        raise DimensionOverflow(f"sector N={N}, M={M} has dimension {dim} > cap {cap}")
    states = np.array(list(_compositions(N, M)), dtype=np.int64).reshape(dim, N)
    return FockBasis(N, M, states)


@dataclass
class FockVector:
    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (len(self.basis),):
            raise ValueError("amplitude vector does not match basis dimension")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        return FockVector(self.basis, self.amplitudes / self.norm)

    def amplitude(self, occupations) -> complex:
        return complex(self.amplitudes[self.basis.index(occupations)])

    def dumps(self) -> str:
        lines = []
        for occ, a in zip(self.basis.states.tolist(), self.amplitudes):
            occ_text = "(" + ",".join(str(n) for n in occ) + ")"
            lines.append(f"{occ_text}\t{a.real:.17g}\t{a.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "FockVector":
        occs, amps = [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            occ, re, im = line.split("\t")
            occs.append(tuple(int(x) for x in occ.strip("()").split(",")))
            amps.append(complex(float(re), float(im)))
        N, M = len(occs[0]), sum(occs[0])
        basis = enumerate_basis(N, M)
        vec = np.zeros(len(basis), dtype=complex)
        for occ, a in zip(occs, amps):
            vec[basis.index(occ)] = a
        return cls(basis, vec)


def fock_state(basis: FockBasis, occupations) -> FockVector:
    vec = np.zeros(len(basis), dtype=complex)
    vec[basis.index(occupations)] = 1.0
    return FockVector(basis, vec)


def _hop(basis: FockBasis, src: int, dst: int):
    """Rows, cols and amplitudes of a+_dst a_src within the basis (0-based sites)."""
    states = basis.states
    cols = np.nonzero(states[:, src] > 0)[0]
    moved = states[cols].copy()
    amp = np.sqrt(moved[:, src] * (moved[:, dst] + 1.0))
    moved[:, src] -= 1
    moved[:, dst] += 1
    rows = basis.lookup(moved)
    return rows, cols, amp


def build_hamiltonian(params: BoseHubbardParams, basis: FockBasis) -> sp.csr_matrix:
    if basis.N != params.N or basis.M != params.M:
        raise ValueError(f"basis {basis!r} does not match N={params.N}, M={params.M}")
    n = basis.states.astype(float)
    diag = (0.5 * params.U * n * (n - 1.0)).sum(axis=1) + n @ params.mu_array
    rows, cols, vals = [np.arange(len(basis))], [np.arange(len(basis))], [diag]
    for j in range(params.N - 1):
        for src, dst in ((j, j + 1), (j + 1, j)):
            r, c, a = _hop(basis, src, dst)
            rows.append(r)
            cols.append(c)
            vals.append(-params.J * a)
    D = len(basis)
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(D, D))
    return H.tocsr()


class Propagator:
    """exp(-i H t) applied to vectors, reusing one eigendecomposition when dense."""

    def __init__(self, H, dense_limit: int = DENSE_LIMIT):
        self.H = H
        self.dim = H.shape[0]
        self.dense = self.dim <= dense_limit
        if self.dense:
            Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
            try:
                self.energies, self.vectors = sla.eigh(Hd)
            except np.linalg.LinAlgError as exc:
                cond = np.linalg.cond(Hd)
                raise OracleError(f"diagonalisation failed (condition number {cond:.3e})") from exc

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(psi, dtype=complex)
        if self.dense:
            coeff = self.vectors.conj().T @ psi
            return self.vectors @ (np.exp(-1j * self.energies * t) * coeff)
        return expm_multiply(-1j * t * sp.csr_matrix(self.H), np.asarray(psi, dtype=complex))


def evolve_exact(H, psi0: FockVector, t: float) -> FockVector:
    return FockVector(psi0.basis, Propagator(H).apply(psi0.amplitudes, t))


class GroundState(NamedTuple):
    energy: float
    state: FockVector
    gap: float
    degenerate: bool


def fix_global_phase(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    if vec[k] == 0:
        return vec
    return vec * (abs(vec[k]) / vec[k])


def ground_state_exact(H, basis: FockBasis, degeneracy_tol: float = 1e-10) -> GroundState:
    D = H.shape[0]
    if D == 1:
        val = H.toarray() if sp.issparse(H) else np.asarray(H)
        return GroundState(float(val[0, 0].real), FockVector(basis, np.ones(1)), np.inf, False)
    if D <= DENSE_LIMIT:
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
        energies, vectors = sla.eigh(Hd, subset_by_index=[0, 1])
    else:
        energies, vectors = eigsh(sp.csr_matrix(H), k=2, which="SA", tol=1e-13)
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]
    gap = float(energies[1] - energies[0])
    vec = fix_global_phase(vectors[:, 0].astype(complex))
    vec /= np.linalg.norm(vec)
    return GroundState(float(energies[0]), FockVector(basis, vec), gap, gap < degeneracy_tol)


@lru_cache(maxsize=256)
def _creation_operator(N: int, m: int, site: int) -> sp.csr_matrix:
    """a+_site mapping the m-particle sector into the (m+1)-particle sector."""
    lo, hi = enumerate_basis(N, m), enumerate_basis(N, m + 1)
    raised = lo.states.copy()
    amp = np.sqrt(raised[:, site] + 1.0)
    raised[:, site] += 1
    rows = hi.lookup(raised)
    return sp.csr_matrix((amp, (rows, np.arange(len(lo)))), shape=(len(hi), len(lo)))


def state_from_modes(C: np.ndarray, occupations) -> FockVector:
    """prod_q (alpha+_q)^{n_q} / sqrt(n_q!) |0>, with alpha+_q = sum_l C[l, q] a+_l."""
    C = np.asarray(C, dtype=complex)
    N = C.shape[0]
    occupations = [int(n) for n in occupations]
    if C.shape != (N, N) or len(occupations) != N:
        raise ValueError("mode matrix must be N x N with N occupations")
    vec = np.ones(1, dtype=complex)
    m = 0
    for q, n_q in enumerate(occupations):
        for _ in range(n_q):
            new = np.zeros(sector_dimension(N, m + 1), dtype=complex)
            for l in range(N):
                if C[l, q] != 0:
                    new += C[l, q] * (_creation_operator(N, m, l) @ vec)
            vec = new
            m += 1
        vec = vec / math.sqrt(math.factorial(n_q))
    return FockVector(enumerate_basis(N, m), vec)


def infidelity(psi_a, psi_b, norm_tol: float = 1e-6) -> float:
    """1 - |<a|b>|^2 for (nearly) normalised inputs."""
    a = psi_a.amplitudes if isinstance(psi_a, FockVector) else np.asarray(psi_a, dtype=complex)
    b = psi_b.amplitudes if isinstance(psi_b, FockVector) else np.asarray(psi_b, dtype=complex)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    for label, nrm in (("first", na), ("second", nb)):
        if abs(nrm - 1.0) > norm_tol:
            raise ValueError(f"{label} state has norm {nrm:.12g}; expected 1 within {norm_tol}")
    overlap = np.vdot(a, b) / (na * nb)
    return float(min(max(1.0 - abs(overlap) ** 2, 0.0), 1.0))
