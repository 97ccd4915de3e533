"""One-dimensional Bose-Hubbard chain with open boundaries.

The Hamiltonian is split into a quadratic single-particle part and a local
interaction part::

    H    = sum_j U/2 n_j (n_j - 1) - J (a+_{j+1} a_j + h.c.) + mu_j n_j
    H_SP = sum_j (-U/2 + mu_j) n_j - J (a+_{j+1} a_j + h.c.)
    H_MP = sum_j U/2 n_j^2

Sites are numbered 1..N in every public interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoseHubbardParams:
    N: int
    M: int
    U: float
    J: float
    mu: tuple = field(default=())

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"site count must be a positive integer, got {self.N!r}")
        if int(self.M) != self.M or self.M < 0:
            raise ValueError(f"particle count must be a non-negative integer, got {self.M!r}")
        mu = tuple(float(m) for m in self.mu) if len(self.mu) else (0.0,) * int(self.N)
        if len(mu) != self.N:
            raise ValueError(f"mu has {len(mu)} entries, expected {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "U", float(self.U))
        object.__setattr__(self, "J", float(self.J))
        object.__setattr__(self, "mu", mu)

    def replace(self, **changes) -> "BoseHubbardParams":
        values = dict(N=self.N, M=self.M, U=self.U, J=self.J, mu=self.mu)
        values.update(changes)
        return BoseHubbardParams(**values)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)


def single_particle_matrix(params: BoseHubbardParams) -> np.ndarray:
    """Matrix h with H_SP = sum_{lm} h[l, m] a+_l a_m (0-based storage)."""
    N = params.N
    h = np.diag(-0.5 * params.U + params.mu_array)
    if N > 1:
        off = np.full(N - 1, -params.J)
        h = h + np.diag(off, 1) + np.diag(off, -1)
    return h


def interaction_coefficients(params: BoseHubbardParams) -> np.ndarray:
    """Per-site coefficient of n_j^2 in H_MP."""
    return np.full(params.N, 0.5 * params.U)


def harmonic_trap(N: int, k: float, center: float) -> np.ndarray:
    """Site potentials mu_j = k (j - center)^2 for j = 1..N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    j = np.arange(1, N + 1, dtype=float)
    return k * (j - center) ** 2


def unit_filling(N: int) -> tuple:
    return (1,) * N


def default_occupations(N: int, M: int) -> tuple:
    """Spread M bosons as evenly as possible, extra ones on the leftmost sites."""
    base, extra = divmod(M, N)
    return tuple(base + (1 if j < extra else 0) for j in range(N))


def is_hermitian(h: np.ndarray, rtol: float = 1e-14) -> bool:
    h = np.asarray(h)
    scale = max(np.abs(h).max(), 1.0)
    return bool(np.abs(h - h.conj().T).max() <= rtol * scale)

