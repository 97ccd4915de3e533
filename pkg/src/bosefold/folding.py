"""Mode stacks and their folding into elementary one- and two-site transforms.

A mode stack ``C`` is an N x N matrix whose column ``q`` holds the
coefficients of the evolved creation operator
``alpha+_q = sum_l C[l, q] a+_l``. Every elementary transform ``T`` on the
state maps creation operators linearly, ``T a+_q T^-1 = sum_l u[l, q] a+_l``,
so applying gates ``T_1, T_2, ..., T_K`` (in that order) to a Fock state
produces the stack ``u_K ... u_2 u_1``.

Folding strips a stack back to the identity (or to the site reversal for the
inverse scheme) by applying inverse transforms; the recorded transforms,
replayed in reverse, rebuild the stack. Plans therefore store transforms in
state-application order.

Site labels in transforms are 1-based. Storage is 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.linalg as sla

PHASE = "phase"
ROTATION = "rotation"
PAIR = "pair"
SCALE = "scale"
KINDS = (PHASE, ROTATION, PAIR, SCALE)
TWO_SITE_KINDS = (ROTATION, PAIR)

IDENTITY_TOL = 1e-15
DEFAULT_DROP = math.sqrt(np.finfo(float).eps)
UNITARITY_TOL = 1e-8


class FoldingError(ValueError):
    pass


class UnitarityError(FoldingError):
    pass


class BandViolation(FoldingError):
    pass


class NonUnitaryFoldFailure(FoldingError):
    """The pair-transform solve has no real solution; the time slice is too large."""


class DegenerateSpectrum(FoldingError):
    pass


@dataclass(frozen=True)
class ElementaryTransform:
    kind: str
    site: int
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @property
    def two_site(self) -> bool:
        return self.kind in TWO_SITE_KINDS

    @property
    def sites(self) -> tuple:
        return (self.site, self.site + 1) if self.two_site else (self.site,)

    def generator(self) -> np.ndarray:
        """Single-particle generator g, with the transform equal to exp(sum g_xy a+_x a_y).

        Two-site generators are written in the (site, site + 1) ordering.
        """
        p = self.params
        if self.kind == PHASE:
            return np.array([[1j * p[0]]])
        if self.kind == SCALE:
            return np.array([[p[0]]], dtype=complex)
        if self.kind == ROTATION:
            # exp(i theta J_y), J_y = (a+_{j+1} a_j - a+_j a_{j+1}) / 2i
            half = 0.5 * p[0]
            return np.array([[0.0, -half], [half, 0.0]], dtype=complex)
        # exp(eps (cos(phi) J_x + sin(phi) J_z)), J_z = (n_{j+1} - n_j) / 2
        phi, eps = p
        c, s = math.cos(phi), math.sin(phi)
        return 0.5 * eps * np.array([[-s, c], [c, s]], dtype=complex)

    def mode_matrix(self) -> np.ndarray:
        """Action u on mode coefficients of the rows this transform touches."""
        p = self.params
        if self.kind == PHASE:
            return np.array([[np.exp(1j * p[0])]])
        if self.kind == SCALE:
            return np.array([[math.exp(p[0])]], dtype=complex)
        if self.kind == ROTATION:
            c, s = math.cos(0.5 * p[0]), math.sin(0.5 * p[0])
            return np.array([[c, -s], [s, c]], dtype=complex)
        return sla.expm(self.generator())

    def inverse(self) -> "ElementaryTransform":
        if self.kind == PAIR:
            return ElementaryTransform(PAIR, self.site, (self.params[0], -self.params[1]))
        return ElementaryTransform(self.kind, self.site, (-self.params[0],))

    def is_identity(self, tol: float = IDENTITY_TOL) -> bool:
        if self.kind == PAIR:
            return abs(self.params[1]) < tol
        return abs(self.params[0]) < tol

    @property
    def unitary(self) -> bool:
        return self.kind in (PHASE, ROTATION)


def phase(site, phi):
    return ElementaryTransform(PHASE, site, (phi,))


def rotation(site, theta):
    return ElementaryTransform(ROTATION, site, (theta,))


def pair(site, phi, eps):
    return ElementaryTransform(PAIR, site, (phi, eps))


def scale(site, delta):
    return ElementaryTransform(SCALE, site, (delta,))


@dataclass
class FoldingPlan:
    """Transforms in state-application order.

    ``reflect`` marks plans whose transforms act on the site-reversed state
    (the inverse scheme folds mode q onto site N + 1 - q).
    """

    N: int
    transforms: list
    scheme: str
    time_slice: float = 0.0
    reflect: bool = False
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.transforms)

    def __iter__(self):
        return iter(self.transforms)

    def count(self, kind: str) -> int:
        return sum(1 for t in self.transforms if t.kind == kind)

    @property
    def two_site_count(self) -> int:
        return sum(1 for t in self.transforms if t.two_site)

    @property
    def identity_flags(self) -> list:
        return [t.is_identity() for t in self.transforms]

    def compacted(self, tol: float = IDENTITY_TOL) -> "FoldingPlan":
        kept = [t for t in self.transforms if not t.is_identity(tol)]
        return replace(self, transforms=kept, metadata=dict(self.metadata, compacted=True))

    def dumps(self) -> str:
        lines = [f"# scheme={self.scheme} N={self.N} time_slice={self.time_slice:.17g} "
                 f"reflect={int(self.reflect)}"]
        for t in self.transforms:
            pars = "\t".join(f"{p:.17g}" for p in t.params)
            lines.append(f"{t.kind}\t{t.site}\t{pars}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "FoldingPlan":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
        transforms = []
        for ln in lines[1:]:
            kind, site, *pars = ln.split("\t")
            transforms.append(ElementaryTransform(kind, int(site), tuple(float(p) for p in pars)))
        return cls(int(header["N"]), transforms, header["scheme"],
                   float(header["time_slice"]), bool(int(header["reflect"])))


# -- propagation ------------------------------------------------------------

def propagate(h: np.ndarray, t: float) -> np.ndarray:
    """Stack of exp(-iHt) a+_q exp(iHt): C(t) = exp(-i t h)."""
    return sla.expm(-1j * t * np.asarray(h, dtype=complex))


def propagate_imaginary(h: np.ndarray, tau: float) -> np.ndarray:
    """Stack of the imaginary-time step exp(-tau H_SP): C = exp(-tau h)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    h = np.asarray(h)
    out = sla.expm(-tau * h)
    if np.isrealobj(h) or np.abs(out.imag).max() == 0:
        return np.real(out)
    return out


# -- elementary coefficient actions ----------------------------------------

def phase_angle(c: complex) -> float:
    if c == 0:
        return 0.0
    return float(np.angle(c))


def rotation_angle(c_upper: float, c_lower: float) -> float:
    """theta with tan(theta/2) = c_upper / c_lower; cancels c_upper (site j+1)."""
    if c_upper == 0 and c_lower == 0:
        return 0.0
    return 2.0 * math.atan2(c_upper, c_lower)


def apply_rotation(stack: np.ndarray, j: int, theta: float) -> np.ndarray:
    """Coefficient change induced by the inverse rotation on sites (j, j+1)."""
    out = np.array(stack, dtype=complex)
    _rotate_rows(out, j - 1, theta)
    return out


def _rotate_rows(C: np.ndarray, i: int, theta: float) -> None:
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    lower, upper = C[i].copy(), C[i + 1].copy()
    C[i + 1] = upper * c - lower * s
    C[i] = upper * s + lower * c


def _strip_phase(C: np.ndarray, l: int, k: int) -> ElementaryTransform:
    phi = phase_angle(C[l, k])
    if phi != 0.0:
        C[l] *= np.exp(-1j * phi)
    return phase(l + 1, phi)


def _check_unitary(C: np.ndarray, tol: float = UNITARITY_TOL) -> None:
    err = np.abs(C.conj().T @ C - np.eye(len(C))).max()
    if err > tol:
        raise UnitarityError(f"stack is not unitary: max |C^H C - I| = {err:.3e} > {tol:.1e}")


def _square(stack) -> np.ndarray:
    C = np.array(stack, dtype=complex)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"mode stack must be square, got shape {C.shape}")
    return C


def _finish(folded: list, N: int, scheme: str, residual: np.ndarray, target: np.ndarray,
            reflect: bool = False, **meta) -> FoldingPlan:
    applied = list(reversed(folded))
    meta["residual"] = float(np.abs(residual - target).max()) if N else 0.0
    return FoldingPlan(N, applied, scheme, reflect=reflect, metadata=meta)


# -- unitary folding -------------------------------------------------------

def fold_normal(stack: np.ndarray, check: bool = True) -> FoldingPlan:
    """Fold mode k onto site k for k = 1..N, cancelling a+_N first in each layer."""
    C = _square(stack)
    N = len(C)
    if check:
        _check_unitary(C)
    folded = []
    for k in range(N):
        for l in range(k, N):
            folded.append(_strip_phase(C, l, k))
        for i in range(N - 2, k - 1, -1):
            theta = rotation_angle(C[i + 1, k].real, C[i, k].real)
            _rotate_rows(C, i, theta)
            folded.append(rotation(i + 1, theta))
    return _finish(folded, N, "normal", C, np.eye(N))


def fold_inverse(stack: np.ndarray, check: bool = True) -> FoldingPlan:
    """Fold starting from mode N, which ends on site 1; mode k ends on site N + 1 - k.

    Each layer begins with the largest coefficient of the mode being folded.
    The residual is the site reversal, so the plan is flagged ``reflect``.
    """
    C = _square(stack)
    N = len(C)
    if check:
        _check_unitary(C)
    folded = []
    for layer in range(N):
        k = N - 1 - layer
        for l in range(N - 1, layer - 1, -1):
            folded.append(_strip_phase(C, l, k))
        for i in range(N - 2, layer - 1, -1):
            theta = rotation_angle(C[i + 1, k].real, C[i, k].real)
            _rotate_rows(C, i, theta)
            folded.append(rotation(i + 1, theta))
    return _finish(folded, N, "inverse", C, np.eye(N)[::-1], reflect=True)


def band_mass(stack: np.ndarray, eta: int) -> tuple:
    """(largest |entry|, its 0-based index, root-sum-square) outside the eta band."""
    C = np.asarray(stack)
    N = len(C)
    l, q = np.indices((N, N))
    outside = np.abs(l - q) > eta
    if not outside.any():
        return 0.0, None, 0.0
    mags = np.where(outside, np.abs(C), 0.0)
    idx = np.unravel_index(int(np.argmax(mags)), mags.shape)
    return float(mags[idx]), idx, float(np.sqrt((mags ** 2).sum()))


def fold_banded(stack: np.ndarray, eta: int, drop: float = DEFAULT_DROP) -> FoldingPlan:
    """Normal folding restricted to eta coefficients below the diagonal of each mode."""
    C = _square(stack)
    N = len(C)
    if eta < 1:
        raise ValueError("eta must be >= 1")
    worst, idx, mass = band_mass(C, eta)
    if worst > drop:
        raise BandViolation(f"entry C[{idx[0] + 1},{idx[1] + 1}] = {worst:.3e} lies outside "
                            f"the eta={eta} band (drop threshold {drop:.3e})")
    l, q = np.indices((N, N))
    C[np.abs(l - q) > eta] = 0.0
    folded = []
    for k in range(N):
        top = min(k + eta, N - 1)
        for l_ in range(k, top + 1):
            folded.append(_strip_phase(C, l_, k))
        for i in range(top - 1, k - 1, -1):
            theta = rotation_angle(C[i + 1, k].real, C[i, k].real)
            _rotate_rows(C, i, theta)
            folded.append(rotation(i + 1, theta))
    return _finish(folded, N, f"banded({eta})", C, np.eye(N), eta=eta, dropped_mass=mass)


def banded_rotation_count(N: int, eta: int) -> int:
    eta = min(eta, N - 1)
    return N * eta - eta * (eta + 1) // 2


# -- non-unitary folding ----------------------------------------------------

def pair_params(c_up_q: float, c_lo_q: float, c_up_q1: float, c_lo_q1: float,
                bound: float = 0.1) -> tuple:
    """(phi, eps) of the pair transform on sites (j, j+1) cancelling two coefficients.

    Arguments are c_{j+1,q}, c_{j,q}, c_{j+1,q+1}, c_{j,q+1}; the targets are
    c_{j+1,q} and c_{j,q+1}.
    """
    if c_up_q == 0 and c_lo_q1 == 0:
        return 0.0, 0.0
    if abs(c_up_q) > bound * abs(c_lo_q) or abs(c_lo_q1) > bound * abs(c_up_q1):
        raise NonUnitaryFoldFailure(
            f"off-diagonal coefficients ({c_up_q:.3e}, {c_lo_q1:.3e}) are not small against "
            f"({c_lo_q:.3e}, {c_up_q1:.3e}); reduce the imaginary time slice")
    num = c_up_q * c_up_q1 - c_lo_q * c_lo_q1
    den = 2.0 * c_up_q * c_lo_q1
    if num == 0 and den == 0:
        return 0.0, 0.0
    phi = math.atan2(num, den)
    t = c_up_q / (c_up_q * math.sin(phi) + c_lo_q * math.cos(phi))
    if not abs(t) < 1.0:
        raise NonUnitaryFoldFailure(f"tanh(eps/2) = {t:.6g} is outside (-1, 1); "
                                    "reduce the imaginary time slice")
    return phi, 2.0 * math.atanh(t)


def pair_inverse_action(phi: float, eps: float) -> np.ndarray:
    """2x2 map of the inverse pair transform on (c_{j}, c_{j+1})."""
    ch, sh = math.cosh(0.5 * eps), math.sinh(0.5 * eps)
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[ch + s * sh, -c * sh],
                     [-c * sh, ch - s * sh]])


def fold_nonunitary(stack: np.ndarray, bound: float = 0.1) -> FoldingPlan:
    """Alternating pair cancellation and single-site normalisation along the diagonal.

    Layer j cancels c_{j+1,j} and c_{j,j+1} with one pair transform, then scales
    row j so that c_{j,j} = 1. Coefficients further from the diagonal are not
    addressed; their size is reported in ``metadata['residual']``.
    """
    C = _square(stack)
    N = len(C)
    folded = []
    if np.abs(C.imag).max() > 0:
        for l in range(N):
            folded.append(_strip_phase(C, l, l))
        if np.abs(C.imag).max() > 1e-12:
            raise NonUnitaryFoldFailure("stack keeps complex coefficients after phase stripping")
    C = C.real.copy()
    _, _, outside = band_mass(C, 1)
    for i in range(N - 1):
        phi, eps = pair_params(C[i + 1, i], C[i, i], C[i + 1, i + 1], C[i, i + 1], bound)
        C[i:i + 2] = pair_inverse_action(phi, eps) @ C[i:i + 2]
        folded.append(pair(i + 1, phi, eps))
        folded.append(_normalise_row(C, i))
    folded.append(_normalise_row(C, N - 1))
    return _finish(folded, N, "nonunitary", C, np.eye(N), dropped_mass=outside)


def _normalise_row(C: np.ndarray, i: int) -> ElementaryTransform:
    d = C[i, i]
    if not d > 0:
        raise NonUnitaryFoldFailure(f"diagonal coefficient c[{i + 1},{i + 1}] = {d:.6g} is not "
                                    "positive; reduce the imaginary time slice")
    C[i] /= d
    return scale(i + 1, math.log(d))


# -- spectral scheme (experimental) ----------------------------------------

def _fold_vector(v: np.ndarray) -> list:
    """Transforms (folding order) reducing a unit vector to e_1 by inverse actions."""
    C = np.array(v, dtype=complex).reshape(-1, 1)
    N = len(C)
    out = []
    for l in range(N):
        out.append(_strip_phase(C, l, 0))
    for i in range(N - 2, -1, -1):
        theta = rotation_angle(C[i + 1, 0].real, C[i, 0].real)
        _rotate_rows(C, i, theta)
        out.append(rotation(i + 1, theta))
    return out


def spectral_plan(h: np.ndarray, t_s: float, gap_tol: float = 1e-10) -> FoldingPlan:
    """One exact single-particle step built from eigenmode folds.

    For each eigenmode b_q: fold it onto site 1, apply exp(-i t_s E_q n_1),
    unfold. Experimental: the repeated fold/unfold cycles amplify rounding.
    """
    h = np.asarray(h)
    energies, vectors = np.linalg.eigh(h)
    if len(energies) > 1 and np.min(np.diff(energies)) < gap_tol:
        raise DegenerateSpectrum(f"eigenvalue gap {np.min(np.diff(energies)):.3e} < {gap_tol}")
    plan = []
    for q in range(len(energies)):
        fold = _fold_vector(vectors[:, q])
        plan.extend(t.inverse() for t in fold)
        plan.append(phase(1, -t_s * energies[q]))
        plan.extend(reversed(fold))
    return FoldingPlan(len(h), plan, "spectral", time_slice=t_s,
                       metadata={"experimental": True})


# -- replay -----------------------------------------------------------------

def apply_transform(C: np.ndarray, t: ElementaryTransform) -> None:
    """Left-multiply the stack rows touched by t with its forward mode action."""
    i = t.site - 1
    if t.kind == PHASE:
        C[i] *= np.exp(1j * t.params[0])
    elif t.kind == SCALE:
        C[i] *= math.exp(t.params[0])
    elif t.kind == ROTATION:
        _rotate_rows(C, i, -t.params[0])
    else:
        C[i:i + 2] = np.linalg.inv(pair_inverse_action(*t.params)) @ C[i:i + 2]


def replay_on_stack(plan: FoldingPlan, stack0: np.ndarray | None = None) -> np.ndarray:
    N = plan.N
    C = np.eye(N, dtype=complex) if stack0 is None else np.array(stack0, dtype=complex)
    if C.shape[0] != N:
        raise ValueError(f"plan acts on {N} sites, stack has {C.shape[0]} rows")
    if plan.reflect:
        C = C[::-1].copy()
    for t in plan.transforms:
        apply_transform(C, t)
    return C


def fold(stack: np.ndarray, scheme: str, eta: int | None = None, **kwargs) -> FoldingPlan:
    if scheme == "normal":
        return fold_normal(stack, **kwargs)
    if scheme == "inverse":
        return fold_inverse(stack, **kwargs)
    if scheme == "banded":
        return fold_banded(stack, eta, **kwargs)
    if scheme == "nonunitary":
        return fold_nonunitary(stack, **kwargs)
    raise ValueError(f"unknown folding scheme {scheme!r}")


def sites_touched(transforms: Iterable[ElementaryTransform]) -> set:
    return {s for t in transforms for s in t.sites}
