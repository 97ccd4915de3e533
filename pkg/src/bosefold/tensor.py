"""Matrix-product states for bosonic chains with an occupation cap.

The state is stored as right-canonical site tensors ``B[i]`` of shape
``(chi_left, d, chi_right)`` together with the bond spectra ``lam[i]``
(Schmidt values on the cut left of site ``i``; ``lam[0] = lam[N] = [1]``).
This is the Gamma-lambda form with ``B[i] = Gamma[i] lam[i+1]``, which lets
two-site updates avoid dividing by small Schmidt values. An overall scalar
``norm_factor`` carries norm changes from non-unitary gates, truncation and
occupation-cap leakage so that ``B``/``lam`` describe a unit vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .folding import ElementaryTransform, PHASE, SCALE
from .oracle import FockBasis, FockVector

SVD_CUTOFF = 1e-14


class TensorError(RuntimeError):
    pass


@dataclass(frozen=True)
class GateMatrix:
    matrix: np.ndarray
    arity: int
    leakage: float = 0.0
    unitary: bool = True

    @cached_property
    def diagonal(self) -> np.ndarray | None:
        m = self.matrix
        if np.count_nonzero(m - np.diag(np.diagonal(m))) == 0:
            return np.diagonal(m).copy()
        return None

    @cached_property
    def conserves_number(self) -> bool:
        m = self.matrix
        n = np.arange(math.isqrt(m.shape[0]) if self.arity == 2 else m.shape[0])
        tot = (n[:, None] + n[None, :]).ravel() if self.arity == 2 else n
        return bool(np.all(m[tot[:, None] != tot[None, :]] == 0))

    @cached_property
    def swapped(self) -> np.ndarray:
        """Two-site matrix with the roles of the two sites exchanged."""
        d = math.isqrt(self.matrix.shape[0])
        m = self.matrix.reshape(d, d, d, d).transpose(1, 0, 3, 2)
        return m.reshape(d * d, d * d)


class TruncationReport(NamedTuple):
    discarded: float
    leaked: float


# -- gate synthesis -----------------------------------------------------------

def _sector_generator(g: np.ndarray, s: int) -> np.ndarray:
    """Many-body generator sum_xy g[x, y] a+_x a_y on the s-boson two-mode sector.

    Basis |a, s - a>, a = 0..s, where a is the occupation of the first mode.
    """
    a = np.arange(s + 1, dtype=float)
    b = s - a
    G = np.diag(g[0, 0] * a + g[1, 1] * b).astype(complex)
    # a+_0 a_1 : |a, b> -> sqrt((a + 1) b) |a + 1, b - 1>
    up = np.sqrt((a[:-1] + 1) * b[:-1])
    G[np.arange(1, s + 1), np.arange(s)] += g[0, 1] * up
    # a+_1 a_0 : |a, b> -> sqrt(a (b + 1)) |a - 1, b + 1>
    down = np.sqrt(a[1:] * (b[1:] + 1))
    G[np.arange(s), np.arange(1, s + 1)] += g[1, 0] * down
    return G


def two_site_gate_from_generator(g: np.ndarray, d: int, unitary: bool) -> GateMatrix:
    """exp of a quadratic two-mode generator, sector by sector, projected to n <= d - 1.

    Sectors whose total exceeds the cap are exponentiated uncapped and then
    projected; the largest weight lost by any representable input is the leakage.
    """
    n_max = d - 1
    gate = np.zeros((d * d, d * d), dtype=complex)
    leakage = 0.0
    for s in range(2 * n_max + 1):
        block = sla.expm(_sector_generator(g, s))
        a = np.arange(s + 1)
        keep = (a <= n_max) & (s - a <= n_max)
        idx = a[keep] * d + (s - a[keep])
        sub = block[np.ix_(keep, keep)]
        gate[np.ix_(idx, idx)] = sub
        if not keep.all():
            full = np.linalg.norm(block[:, keep], axis=0) ** 2
            kept = np.linalg.norm(sub, axis=0) ** 2
            leakage = max(leakage, float(np.max(1.0 - kept / full)))
    return GateMatrix(gate, 2, leakage, unitary)


def synthesize_gate(t: ElementaryTransform, d: int) -> GateMatrix:
    if d < 2:
        raise ValueError("local dimension must be at least 2")
    n = np.arange(d)
    if t.kind == PHASE:
        return GateMatrix(np.diag(np.exp(1j * t.params[0] * n)), 1)
    if t.kind == SCALE:
        return GateMatrix(np.diag(np.exp(t.params[0] * n)).astype(complex), 1, unitary=False)
    return two_site_gate_from_generator(t.generator(), d, t.unitary)


def interaction_gate(U: float, slice_: float, d: int, mode: str = "real") -> GateMatrix:
    """exp(-i slice U/2 n^2) or, in imaginary time, exp(-slice U/2 n^2)."""
    n = np.arange(d, dtype=float)
    if mode == "real":
        return GateMatrix(np.diag(np.exp(-1j * slice_ * 0.5 * U * n ** 2)), 1)
    if mode == "imaginary":
        return GateMatrix(np.diag(np.exp(-slice_ * 0.5 * U * n ** 2)).astype(complex), 1,
                          unitary=(U == 0 or slice_ == 0))
    raise ValueError(f"mode must be 'real' or 'imaginary', got {mode!r}")


def bond_hamiltonian_gate(h2: np.ndarray, dt: complex, d: int) -> GateMatrix:
    """exp(-i dt h2) for a d^2 x d^2 two-site Hamiltonian (dt may be -i tau)."""
    m = sla.expm(-1j * dt * h2)
    return GateMatrix(m, 2, 0.0, unitary=np.isreal(dt))


def local_operators(d: int):
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
    return a, a.T.copy(), np.diag(np.arange(d, dtype=float))


# -- block-sparse linear algebra ------------------------------------------------

def _svd(m: np.ndarray):
    try:
        return sla.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return sla.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def _sectors(row_q: np.ndarray, col_q: np.ndarray):
    for c in np.intersect1d(row_q, col_q):
        yield int(c), np.flatnonzero(row_q == c), np.flatnonzero(col_q == c)


def truncated_block_svd(mat: np.ndarray, row_q: np.ndarray, col_q: np.ndarray, chi: int,
                        cutoff: float = SVD_CUTOFF):
    """SVD restricted to the charge blocks (row charge == column charge).

    Entries outside the blocks are rounding noise from number-conserving
    updates and are discarded. The retained singular triplets are the
    largest ones over all blocks, at most ``chi`` and above ``cutoff``
    relative to the largest. Returns (U, S, Vh, charges, total weight).
    """
    parts = []
    for c, rows, cols in _sectors(row_q, col_q):
        try:
            U, S, Vh = _svd(mat[np.ix_(rows, cols)])
        except np.linalg.LinAlgError as exc:
            raise TensorError(f"SVD failed on charge block {c} of shape "
                              f"({len(rows)}, {len(cols)})") from exc
        parts.append((c, rows, cols, U, S, Vh))
    if not parts:
        raise TensorError("no charge sector is shared between the two sides of the cut")
    S_all = np.concatenate([p[4] for p in parts])
    owner = np.concatenate([np.full(len(p[4]), b) for b, p in enumerate(parts)])
    pos = np.concatenate([np.arange(len(p[4])) for p in parts])
    order = np.argsort(-S_all, kind="stable")
    total = float(np.sum(S_all ** 2))
    smax = S_all[order[0]]
    if not smax > 0:
        raise TensorError("zero-norm block encountered")
    keep = max(1, min(int(np.count_nonzero(S_all > cutoff * smax)), chi))
    sel = order[:keep]
    U_full = np.zeros((mat.shape[0], keep), dtype=complex)
    Vh_full = np.zeros((keep, mat.shape[1]), dtype=complex)
    charges = np.empty(keep, dtype=np.int64)
    for k, idx in enumerate(sel):
        c, rows, cols, U, _, Vh = parts[owner[idx]]
        U_full[rows, k] = U[:, pos[idx]]
        Vh_full[k, cols] = Vh[pos[idx]]
        charges[k] = c
    return U_full, S_all[sel], Vh_full, charges, total


def block_qr(mat: np.ndarray, row_q: np.ndarray, col_q: np.ndarray):
    """Thin QR per charge block; returns (Q, R, charges of the new index)."""
    Qs, Rs, qs = [], [], []
    for c, rows, cols in _sectors(row_q, col_q):
        Q, R = np.linalg.qr(mat[np.ix_(rows, cols)])
        Qs.append((rows, Q))
        Rs.append((cols, R))
        qs.append(np.full(Q.shape[1], c))
    K = sum(Q.shape[1] for _, Q in Qs)
    Q_full = np.zeros((mat.shape[0], K), dtype=complex)
    R_full = np.zeros((K, mat.shape[1]), dtype=complex)
    k = 0
    for (rows, Q), (cols, R) in zip(Qs, Rs):
        Q_full[rows, k:k + Q.shape[1]] = Q
        R_full[k:k + Q.shape[1], cols] = R
        k += Q.shape[1]
    return Q_full, R_full, np.concatenate(qs) if qs else np.zeros(0, dtype=np.int64)


# -- the state -----------------------------------------------------------------

class TensorState:
    """Right-canonical MPS with optional particle-number labels on every bond.

    ``q[i]`` holds, for each index of the bond left of storage site ``i``, the
    number of bosons on the sites to its left. With labels present every SVD
    and QR is done block by block, which keeps the state in a single number
    sector (imaginary-time evolution would otherwise amplify rounding noise
    in lower-energy sectors) and makes the updates cheaper. States built
    without labels use a single block for everything.
    """

    def __init__(self, B: list, lam: list, d: int, chi: int, norm_factor: float = 1.0,
                 cutoff: float = SVD_CUTOFF, charges: list | None = None):
        self.B = B
        self.lam = lam
        self.d = d
        self.chi = chi
        self.norm_factor = norm_factor
        self.cutoff = cutoff
        self.symmetric = charges is not None
        self.q = ([np.asarray(c, dtype=np.int64) for c in charges] if self.symmetric
                  else [np.zeros(len(l), dtype=np.int64) for l in lam])
        self.canonical = True
        self.mirrored = False
        self.discarded_total = 0.0
        self.leaked_total = 0.0

    @property
    def N(self) -> int:
        return len(self.B)

    @property
    def n_max(self) -> int:
        return self.d - 1

    def bond_dimensions(self) -> list:
        dims = [len(l) for l in self.lam[1:-1]]
        return dims[::-1] if self.mirrored else dims

    def _site(self, j: int) -> int:
        """0-based storage index of logical site j."""
        if not 1 <= j <= self.N:
            raise TensorError(f"site {j} outside 1..{self.N}")
        return self.N - j if self.mirrored else j - 1

    def _n(self) -> np.ndarray:
        return np.arange(self.d) if self.symmetric else np.zeros(self.d, dtype=np.int64)

    def _drop_symmetry(self) -> None:
        self.symmetric = False
        self.q = [np.zeros(len(l), dtype=np.int64) for l in self.lam]

    def copy(self) -> "TensorState":
        out = TensorState([b.copy() for b in self.B], [l.copy() for l in self.lam],
                          self.d, self.chi, self.norm_factor, self.cutoff,
                          [c.copy() for c in self.q] if self.symmetric else None)
        out.canonical = self.canonical
        out.mirrored = self.mirrored
        out.discarded_total = self.discarded_total
        out.leaked_total = self.leaked_total
        return out

    # gates

    def apply_one_site(self, j: int, gate: GateMatrix) -> None:
        i = self._site(j)
        diag = gate.diagonal
        if diag is not None:
            self.B[i] = self.B[i] * diag[None, :, None]
        else:
            if self.symmetric:
                self._drop_symmetry()
            self.B[i] = np.einsum("st,atb->asb", gate.matrix, self.B[i])
        if not gate.unitary:
            self.canonical = False

    def apply_two_site(self, j: int, gate: GateMatrix) -> TruncationReport:
        if not 1 <= j < self.N:
            raise TensorError(f"two-site gate site {j} outside 1..{self.N - 1}")
        if self.symmetric and not gate.conserves_number:
            self._drop_symmetry()
        if self.mirrored:
            rep = self._two_site(self.N - j - 1, gate.swapped, gate.unitary, j)
        else:
            rep = self._two_site(j - 1, gate.matrix, gate.unitary, j)
        if gate.leakage > 0 and rep.leaked > 0:
            # the projection removes weight unevenly across the left Schmidt states
            self.canonical = False
        return rep

    def _two_site(self, i: int, matrix: np.ndarray, unitary: bool, j: int) -> TruncationReport:
        d = self.d
        B1, B2 = self.B[i], self.B[i + 1]
        chl, chr_ = B1.shape[0], B2.shape[2]
        phi = np.tensordot(B1, B2, axes=(2, 0))
        weights = self.lam[i]
        before = float(np.einsum("a,asbc->", weights ** 2, np.abs(phi) ** 2))
        phi = matrix @ phi.transpose(1, 2, 0, 3).reshape(d * d, chl * chr_)
        phi = phi.reshape(d, d, chl, chr_).transpose(2, 0, 1, 3).reshape(chl * d, d * chr_)
        theta = (weights[:, None] * phi.reshape(chl, d * d * chr_)).reshape(chl * d, d * chr_)
        if not np.all(np.isfinite(theta)):
            raise TensorError(f"non-finite amplitudes after gate on sites ({j}, {j + 1})")
        n = self._n()
        row_q = (self.q[i][:, None] + n[None, :]).ravel()
        col_q = (self.q[i + 2][None, :] - n[:, None]).ravel()
        try:
            _, S, Vh, charges, total = truncated_block_svd(theta, row_q, col_q, self.chi,
                                                           self.cutoff)
        except TensorError as exc:
            raise TensorError(f"update of sites ({j}, {j + 1}) failed: {exc}") from exc
        keep = len(S)
        kept = float(np.sum(S ** 2))
        discarded = (total - kept) / total
        scale = math.sqrt(kept)
        left = phi @ Vh.conj().T
        left[row_q[:, None] != charges[None, :]] = 0.0
        self.B[i + 1] = Vh.reshape(keep, d, chr_)
        self.B[i] = left.reshape(chl, d, keep) / scale
        self.lam[i + 1] = S / scale
        self.q[i + 1] = charges
        self.norm_factor *= scale
        leaked = max(0.0, 1.0 - total / before) if unitary and before > 0 else 0.0
        if not unitary:
            self.canonical = False
        self.discarded_total += discarded
        self.leaked_total += leaked
        return TruncationReport(discarded, leaked)

    def apply(self, transform: ElementaryTransform) -> TruncationReport | None:
        gate = synthesize_gate(transform, self.d)
        if gate.arity == 1:
            self.apply_one_site(transform.site, gate)
            return None
        return self.apply_two_site(transform.site, gate)

    # canonical form

    def canonicalize(self, chi: int | None = None) -> float:
        """Restore right-canonical form with exact Schmidt spectra; returns discarded weight."""
        chi = self.chi if chi is None else chi
        A = [b.copy() for b in self.B]
        q = [c.copy() for c in self.q]
        N, n = self.N, self._n()
        for i in range(N - 1):
            chl, d, chr_ = A[i].shape
            row_q = (q[i][:, None] + n[None, :]).ravel()
            Q, R, q[i + 1] = block_qr(A[i].reshape(chl * d, chr_), row_q, q[i + 1])
            A[i] = Q.reshape(chl, d, Q.shape[1])
            A[i + 1] = np.tensordot(R, A[i + 1], axes=(1, 0))
        nrm = float(np.linalg.norm(A[-1]))
        if nrm == 0.0 or not math.isfinite(nrm):
            raise TensorError(f"cannot canonicalise a state with norm {nrm}")
        A[-1] /= nrm
        self.norm_factor *= nrm
        discarded = 0.0
        lam = [np.ones(1)] + [None] * (N - 1) + [np.ones(1)]
        for i in range(N - 1, 0, -1):
            chl, d, chr_ = A[i].shape
            col_q = (q[i + 1][None, :] - n[:, None]).ravel()
            U, S, Vh, q[i], total = truncated_block_svd(A[i].reshape(chl, d * chr_), q[i],
                                                        col_q, chi, self.cutoff)
            keep = len(S)
            kept = float(np.sum(S ** 2))
            discarded += (total - kept) / total
            scale = math.sqrt(kept)
            A[i] = Vh.reshape(keep, d, chr_)
            lam[i] = S / scale
            A[i - 1] = np.tensordot(A[i - 1], U * (S / scale), axes=(2, 0))
            self.norm_factor *= scale
        n0 = float(np.linalg.norm(A[0]))
        A[0] /= n0
        self.norm_factor *= n0
        self.B, self.lam, self.q = A, lam, q
        self.canonical = True
        self.discarded_total += discarded
        return discarded

    def _ensure_canonical(self):
        if not self.canonical:
            self.canonicalize()

    def renormalize(self) -> None:
        self.canonicalize()
        if self.norm_factor == 0:
            raise TensorError("zero-norm state cannot be renormalised")
        self.norm_factor = 1.0

    def reflect(self) -> None:
        """Reverse the site order (site j becomes site N + 1 - j).

        Only a frame flag is toggled; gates and measurements are mapped onto
        the stored tensors, so reflection costs nothing.
        """
        self.mirrored = not self.mirrored

    def materialize(self) -> None:
        """Physically reorder the tensors so that storage matches logical order."""
        if not self.mirrored:
            return
        total = self.q[-1]
        self.B = [b.transpose(2, 1, 0).copy() for b in reversed(self.B)]
        self.lam = [l.copy() for l in reversed(self.lam)]
        self.q = [total[0] - c for c in reversed(self.q)]
        self.mirrored = False
        self.canonicalize()

    def canonical_residual(self) -> float:
        """Largest deviation from right- and left-orthonormality over all sites."""
        worst = 0.0
        for i, B in enumerate(self.B):
            right = np.einsum("asb,csb->ac", B, B.conj())
            worst = max(worst, np.abs(right - np.eye(len(right))).max())
            w = self.lam[i] ** 2
            left = np.einsum("a,asb,asc->bc", w, B.conj(), B)
            worst = max(worst, np.abs(left - np.diag(self.lam[i + 1] ** 2)).max())
        return float(worst)

    # measurements

    def norm(self) -> float:
        E = np.ones((1, 1), dtype=complex)
        for B in self.B:
            E = np.einsum("ab,asc,bsd->cd", E, B, B.conj())
        return self.norm_factor * math.sqrt(max(E[0, 0].real, 0.0))

    def site_density(self, j: int) -> np.ndarray:
        self._ensure_canonical()
        i = self._site(j)
        B = self.B[i]
        return np.einsum("a,asb,atb->st", self.lam[i] ** 2, B, B.conj())

    def expectation(self, j: int, op: np.ndarray) -> float:
        rho = self.site_density(j)
        return float(np.real(np.trace(rho @ op.T)) / np.real(np.trace(rho)))

    def expectation_n(self, j: int) -> float:
        rho = self.site_density(j)
        p = np.real(np.diagonal(rho))
        return float(p @ np.arange(self.d) / p.sum())

    def variance_n(self, j: int) -> float:
        rho = self.site_density(j)
        p = np.real(np.diagonal(rho))
        p = p / p.sum()
        n = np.arange(self.d)
        mean = p @ n
        return float(p @ n ** 2 - mean ** 2)

    def occupation_profile(self) -> tuple:
        means = np.array([self.expectation_n(j) for j in range(1, self.N + 1)])
        variances = np.array([self.variance_n(j) for j in range(1, self.N + 1)])
        return means, variances

    def total_number(self, normalized: bool = True) -> float:
        total = sum(self.expectation_n(j) for j in range(1, self.N + 1))
        return total if normalized else total * self.norm_factor ** 2

    def bond_expectation(self, j: int, op: np.ndarray) -> complex:
        """<op> for a d^2 x d^2 operator on sites (j, j+1)."""
        self._ensure_canonical()
        if not 1 <= j < self.N:
            raise TensorError(f"bond {j} outside 1..{self.N - 1}")
        d = self.d
        if self.mirrored:
            i = self.N - j - 1
            op = op.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
        else:
            i = j - 1
        theta = np.tensordot(self.lam[i][:, None, None] * self.B[i], self.B[i + 1], axes=(2, 0))
        chl, chr_ = theta.shape[0], theta.shape[3]
        v = theta.transpose(1, 2, 0, 3).reshape(d * d, chl * chr_)
        return complex(np.vdot(v, op @ v) / np.vdot(v, v))

    def fock_amplitudes(self, basis: FockBasis) -> FockVector:
        if basis.N != self.N:
            raise ValueError("basis and state have different site counts")
        M = basis.M
        level = [((), 0, np.ones(1, dtype=complex))]
        for i, B in enumerate(self.B):
            last = i == self.N - 1
            nxt = []
            for occ, used, vec in level:
                left = M - used
                choices = [left] if last else range(min(left, self.d - 1) + 1)
                for n in choices:
                    if n >= self.d:
                        continue
                    nxt.append((occ + (n,), used + n, vec @ B[:, n, :]))
            level = nxt
        amps = np.zeros(len(basis), dtype=complex)
        for occ, _, vec in level:
            amps[basis.index(occ[::-1] if self.mirrored else occ)] = vec[0]
        return FockVector(basis, amps * self.norm_factor)

    def schmidt_values(self, cut: int) -> np.ndarray:
        """Schmidt coefficients between sites 1..cut and cut+1..N."""
        self._ensure_canonical()
        return self.lam[self.N - cut if self.mirrored else cut].copy()

    # snapshots

    def profile_csv(self) -> str:
        means, variances = self.occupation_profile()
        rows = ["site,mean,variance"]
        rows += [f"{j + 1},{m:.17g},{v:.17g}" for j, (m, v) in enumerate(zip(means, variances))]
        return "\n".join(rows) + "\n"

    def dumps(self) -> str:
        """Text checkpoint: header, then per bond the spectrum and per site the tensor.

        Layout, one record per line, numbers with 17 significant digits::

            N <N> d <d> chi <chi> norm_factor <f>
            lam <i> <len> <values...>             i = 0..N
            q <i> <len> <integers...>             i = 0..N, only for labelled states
            B <i> <chi_l> <d> <chi_r> <re im ...> i = 0..N-1, C order
        """
        if self.mirrored:
            state = self.copy()
            state.materialize()
            return state.dumps()
        out = [f"N {self.N} d {self.d} chi {self.chi} norm_factor {self.norm_factor:.17g}"]
        for i, l in enumerate(self.lam):
            out.append(f"lam {i} {len(l)} " + " ".join(f"{x:.17g}" for x in l))
        if self.symmetric:
            for i, c in enumerate(self.q):
                out.append(f"q {i} {len(c)} " + " ".join(str(int(x)) for x in c))
        for i, B in enumerate(self.B):
            shape = " ".join(str(s) for s in B.shape)
            flat = B.ravel()
            out.append(f"B {i} {shape} " + " ".join(f"{z.real:.17g} {z.imag:.17g}" for z in flat))
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TensorState":
        lines = text.splitlines()
        head = lines[0].split()
        N, d, chi, nf = int(head[1]), int(head[3]), int(head[5]), float(head[7])
        lam, B, q = [None] * (N + 1), [None] * N, [None] * (N + 1)
        for line in lines[1:]:
            parts = line.split()
            if parts[0] == "lam":
                lam[int(parts[1])] = np.array([float(x) for x in parts[3:]])
            elif parts[0] == "q":
                q[int(parts[1])] = np.array([int(x) for x in parts[3:]], dtype=np.int64)
            elif parts[0] == "B":
                shape = tuple(int(x) for x in parts[2:5])
                vals = np.array([float(x) for x in parts[5:]])
                B[int(parts[1])] = (vals[0::2] + 1j * vals[1::2]).reshape(shape)
        return cls(B, lam, d, chi, nf, charges=q if q[0] is not None else None)


def product_state(occupations, d: int, chi: int) -> TensorState:
    occupations = [int(n) for n in occupations]
    if any(n >= d or n < 0 for n in occupations):
        raise ValueError(f"occupations {occupations} not representable with d={d}")
    B = []
    for n in occupations:
        t = np.zeros((1, d, 1), dtype=complex)
        t[0, n, 0] = 1.0
        B.append(t)
    lam = [np.ones(1) for _ in range(len(occupations) + 1)]
    charges = [np.array([c]) for c in np.concatenate([[0], np.cumsum(occupations)])]
    return TensorState(B, lam, d, chi, charges=charges)


def mps_norm(state: TensorState) -> float:
    return state.norm()


def renormalize(state: TensorState) -> None:
    state.renormalize()


def max_schmidt_rank(N: int, M: int, cut: int | None = None, n_max: int | None = None) -> int:
    """Largest possible Schmidt rank of an M-boson state across the cut after ``cut`` sites."""
    cut = N // 2 if cut is None else cut
    n_max = M if n_max is None else n_max

    def count(sites, particles):
        return _capped_compositions(sites, particles, n_max)

    return sum(min(count(cut, k), count(N - cut, M - k)) for k in range(M + 1))


def _capped_compositions(sites: int, particles: int, cap: int) -> int:
    # inclusion-exclusion over sites exceeding the cap
    total = 0
    for r in range(sites + 1):
        rest = particles - r * (cap + 1)
        if rest < 0:
            break
        total += (-1) ** r * math.comb(sites, r) * math.comb(rest + sites - 1, sites - 1)
    return total if sites > 0 else int(particles == 0)
