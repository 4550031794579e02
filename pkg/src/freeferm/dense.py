"""Brute-force Jordan-Wigner oracle.

Exact density matrices at desk scale: Majorana operators as signed
permutations, Gaussian-unitary synthesis from an orthogonal matrix, exact
trace distance / fidelity / relative entropy, Gaussianification, and the
analytic derivative of a Gaussian state in its correlation matrix.  Ground
truth for every other module at n <= ~10.

Basis convention: computational index x encodes qubit 0 as the most
significant bit, matching ket notation |x_0 x_1 ... x_{n-1}>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence, TextIO

import numpy as np
import scipy.linalg

from . import skew, states
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonNegligibleImaginaryPart,
    NotOrthogonal,
    TooManyModes,
)
from .skew import SkewMatrix, as_skew_array, schatten_norm
from .states import GaussianState

__all__ = [
    "DenseState",
    "MajoranaSet",
    "StateMetrics",
    "Gaussianification",
    "majoranas",
    "correlation_matrix",
    "gaussian_unitary",
    "gaussian_to_dense",
    "state_metrics",
    "gaussianification",
    "gaussian_derivative",
    "pnp_correlation",
    "partial_trace",
    "depolarize",
    "majorana_product_expectation",
    "computational_basis",
    "maximally_mixed",
    "ghz3",
    "random_density_matrix",
    "write_dense",
    "read_dense",
]

MAX_DENSE_MODES = 10
MAX_SPARSE_MODES = 12


@dataclass(frozen=True)
class DenseState:
    """Full 2^n x 2^n density matrix."""

    n: int
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        d = 1 << self.n
        if rho.shape != (d, d):
            raise DimensionMismatch(f"expected {d}x{d} density matrix, got {rho.shape}")
        object.__setattr__(self, "rho", rho)

    def validate(self) -> "DenseState":
        if np.abs(self.rho - self.rho.conj().T).max() > 1e-10:
            raise ValueError("density matrix is not Hermitian within 1e-10")
        if abs(np.trace(self.rho).real - 1.0) > 1e-10 or abs(np.trace(self.rho).imag) > 1e-10:
            raise ValueError("density matrix trace differs from 1 beyond 1e-10")
        if np.linalg.eigvalsh(self.rho).min() < -1e-9:
            raise ValueError("density matrix has an eigenvalue below -1e-9")
        return self

    @staticmethod
    def from_statevector(vec: np.ndarray) -> "DenseState":
        v = np.asarray(vec, dtype=complex).ravel()
        n = int(round(math.log2(v.size)))
        if 1 << n != v.size:
            raise DimensionMismatch(f"statevector length {v.size} is not a power of 2")
        v = v / np.linalg.norm(v)
        return DenseState(n, np.outer(v, v.conj()))


@dataclass(frozen=True)
class MajoranaSet:
    """The 2n Jordan-Wigner Majoranas as signed permutations with phase.

    gamma_mu |x> = coefs[mu, x] |perms[mu, x]>, with coefficients in
    {+-1, +-i} held exactly in complex arithmetic.
    """

    n: int
    perms: np.ndarray = field(repr=False)
    coefs: np.ndarray = field(repr=False)

    def matrix(self, mu: int) -> np.ndarray:
        d = 1 << self.n
        out = np.zeros((d, d), dtype=complex)
        out[self.perms[mu], np.arange(d)] = self.coefs[mu]
        return out

    def left_apply(self, mu: int, m: np.ndarray) -> np.ndarray:
        """gamma_mu @ m without forming the operator."""
        out = np.empty_like(m, dtype=complex)
        out[self.perms[mu], :] = self.coefs[mu][:, None] * m
        return out

    def right_apply(self, m: np.ndarray, mu: int) -> np.ndarray:
        """m @ gamma_mu without forming the operator."""
        return m[:, self.perms[mu]] * self.coefs[mu][None, :]

    def compose(self, subset: Sequence[int]):
        """Signed permutation of the ordered product gamma_{s1} gamma_{s2} ...

        Returns (perm, coef) with (prod gamma)|x> = coef[x] |perm[x]>.
        """
        d = 1 << self.n
        perm = np.arange(d)
        coef = np.ones(d, dtype=complex)
        for mu in reversed(list(subset)):
            coef = self.coefs[mu][perm] * coef  # note: gamma acts after `perm`
            perm = self.perms[mu][perm]
        return perm, coef

    def pair_trace(self, mu: int, nu: int, rho: np.ndarray) -> complex:
        """Tr(gamma_mu gamma_nu rho) in O(4^n / 2^n) = O(2^n) time."""
        perm, coef = self.compose((mu, nu))
        return complex(np.sum(coef * rho[np.arange(rho.shape[0]), perm]))


@lru_cache(maxsize=None)
def majoranas(n: int) -> MajoranaSet:
    """gamma_{2k} = (prod_{j<k} Z_j) X_k, gamma_{2k+1} = (prod_{j<k} Z_j) Y_k."""
    if not 1 <= n <= MAX_SPARSE_MODES:
        raise TooManyModes(f"mode count {n} outside [1, {MAX_SPARSE_MODES}]")
    d = 1 << n
    x = np.arange(d)
    bits = (x[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1  # bits[x, j]
    perms = np.empty((2 * n, d), dtype=np.int64)
    coefs = np.empty((2 * n, d), dtype=complex)
    for k in range(n):
        zstring = (-1.0) ** bits[:, :k].sum(axis=1)
        flip = x ^ (1 << (n - 1 - k))
        perms[2 * k] = flip
        coefs[2 * k] = zstring
        perms[2 * k + 1] = flip
        # Y|0> = i|1>, Y|1> = -i|0>
        coefs[2 * k + 1] = zstring * 1j * (-1.0) ** bits[:, k]
    perms.setflags(write=False)
    coefs.setflags(write=False)
    return MajoranaSet(n=n, perms=perms, coefs=coefs)


def majorana_product_expectation(rho: DenseState, subset: Sequence[int]) -> complex:
    """Tr(gamma_S rho) for an ordered index set S (the dense Wick oracle)."""
    ms = majoranas(rho.n)
    perm, coef = ms.compose(subset)
    return complex(np.sum(coef * rho.rho[np.arange(rho.rho.shape[0]), perm]))


def correlation_matrix(rho: DenseState) -> SkewMatrix:
    """Gamma_{jk} = -(i/2) Tr([gamma_j, gamma_k] rho), exactly."""
    ms = majoranas(rho.n)
    dim = 2 * rho.n
    g = np.zeros((dim, dim))
    worst = 0.0
    for j in range(dim):
        for k in range(j + 1, dim):
            val = -1j * ms.pair_trace(j, k, rho.rho)
            worst = max(worst, abs(val.imag))
            g[j, k] = val.real
    if worst > 1e-10:
        raise NonNegligibleImaginaryPart(
            f"imaginary residue {worst:.3e} in correlation entries; corrupted state?"
        )
    return SkewMatrix(g - g.T)


# -- Gaussian unitary synthesis ----------------------------------------------

def _so_log(q: np.ndarray) -> np.ndarray:
    """Principal real antisymmetric logarithm of a special-orthogonal matrix.

    Real Schur form gives the rotation planes; -1 eigenvalue pairs are exact
    pi-rotations, so no branch-cut perturbation is needed.
    """
    try:
        t, z = scipy.linalg.schur(q, output="real")
    except Exception as exc:  # pragma: no cover
        raise ConvergenceFailure(f"real Schur factorization failed: {exc}") from exc
    d = q.shape[0]
    tc = z.T @ q @ z
    h = np.zeros((d, d))
    minus_ones = []
    i = 0
    while i < d:
        if i + 1 < d and abs(t[i + 1, i]) > 1e-12:
            theta = math.atan2(tc[i, i + 1], tc[i, i])
            h[i, i + 1] = theta
            h[i + 1, i] = -theta
            i += 2
        else:
            if tc[i, i] < 0:
                minus_ones.append(i)
            i += 1
    if len(minus_ones) % 2 != 0:
        raise NotOrthogonal("odd count of -1 eigenvalues: determinant is not +1")
    for a, b in zip(minus_ones[0::2], minus_ones[1::2]):
        h[a, b] = math.pi
        h[b, a] = -math.pi
    return z @ h @ z.T


def gaussian_unitary(q: np.ndarray, *, check_tol: float = 1e-8) -> np.ndarray:
    """Unitary U with U^dag gamma_mu U = sum_nu q_{mu,nu} gamma_nu.

    For det(q) = +1, U = exp((1/4) sum h_{mu nu} gamma_mu gamma_nu) with
    q = exp(h); for det(q) = -1 the construction right-composes the
    reflection unitary gamma_{2n-1} (adjoint action flips the sign of every
    Majorana except the last).  The defining relation is verified at runtime
    in Frobenius norm, which upper bounds the operator norm.
    """
    q = np.asarray(q, dtype=float)
    dim = q.shape[0]
    if q.ndim != 2 or q.shape[1] != dim or dim % 2 != 0:
        raise DimensionMismatch(f"expected an even-dimensional square matrix, got {q.shape}")
    n = dim // 2
    if n > MAX_DENSE_MODES:
        raise TooManyModes(f"mode count {n} exceeds dense cap {MAX_DENSE_MODES}")
    resid = schatten_norm(q.T @ q - np.eye(dim), np.inf)
    if resid > 1e-10:
        raise NotOrthogonal(f"orthogonality violated by {resid:.3e}")
    ms = majoranas(n)

    det_neg = np.linalg.det(q) < 0
    q_rot = q.copy()
    if det_neg:
        # q = q' @ diag(-1, ..., -1, +1); the reflection is gamma_{2n-1}
        q_rot[:, :-1] *= -1.0
    h = _so_log(q_rot)

    gen = np.zeros((1 << n, 1 << n), dtype=complex)
    for mu in range(dim):
        for nu in range(mu + 1, dim):
            if h[mu, nu] != 0.0:
                gen += 0.5 * h[mu, nu] * ms.left_apply(mu, ms.matrix(nu))
    u = scipy.linalg.expm(gen)
    if det_neg:
        u = ms.right_apply(u, dim - 1)

    worst = 0.0
    idx = np.arange(1 << n)
    for mu in range(dim):
        target = np.zeros_like(u)
        for nu in range(dim):
            if q[mu, nu] != 0.0:
                target[ms.perms[nu], idx] += q[mu, nu] * ms.coefs[nu]
        lhs = u.conj().T @ ms.left_apply(mu, u)
        worst = max(worst, float(np.linalg.norm(lhs - target)))
    if worst > check_tol:
        raise ConvergenceFailure(
            f"defining relation violated by {worst:.3e} (tol {check_tol:.1e})"
        )
    return u


def gaussian_to_dense(s: GaussianState) -> DenseState:
    """rho = U_Q (⊗ (I + lam_j Z_j)/2) U_Q^dag from the normal form of s."""
    n = s.n
    if n > MAX_DENSE_MODES:
        raise TooManyModes(f"mode count {n} exceeds dense cap {MAX_DENSE_MODES}")
    d = 1 << n
    x = np.arange(d)
    diag = np.ones(d)
    for j in range(n):
        bit = (x >> (n - 1 - j)) & 1
        diag *= 0.5 * (1.0 + s.nf.lambdas[j] * (1.0 - 2.0 * bit))
    u = gaussian_unitary(s.nf.q)
    rho = (u * diag[None, :]) @ u.conj().T
    return DenseState(n, rho)


# -- metrics ------------------------------------------------------------------

class StateMetrics(NamedTuple):
    trace_dist: float
    fidelity: float
    relative_entropy: float  # math.inf when supports are incompatible


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def state_metrics(a: DenseState, b: DenseState) -> StateMetrics:
    """Exact trace distance tr|a-b| (unhalved, so ranging over [0,2]),
    fidelity, and relative entropy S(a||b) in bits."""
    if a.n != b.n:
        raise DimensionMismatch(f"mode counts {a.n} and {b.n} differ")
    diff_eigs = np.linalg.eigvalsh(a.rho - b.rho)
    trace_dist = float(np.abs(diff_eigs).sum())

    rb = _psd_sqrt(b.rho)
    fid_eigs = np.linalg.eigvalsh(rb @ a.rho @ rb)
    fidelity = float(np.sqrt(np.clip(fid_eigs, 0.0, None)).sum() ** 2)
    fidelity = min(1.0, max(0.0, fidelity))

    relative_entropy = _relative_entropy(a.rho, b.rho)
    return StateMetrics(trace_dist, fidelity, relative_entropy)


_SUPPORT_EIG = 1e-12


def _relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """S(rho||sigma) in bits; 0 log 0 = 0, infinite outside sigma's support."""
    p, u = np.linalg.eigh(rho)
    q, v = np.linalg.eigh(sigma)
    p = np.clip(p, 0.0, None)
    overlaps = np.abs(u.conj().T @ v) ** 2  # overlaps[i, j] = |<u_i|v_j>|^2
    p_support = p > _SUPPORT_EIG
    q_null = q <= _SUPPORT_EIG
    if np.any(q_null):
        leaked = float(p[p_support] @ overlaps[np.ix_(p_support, q_null)].sum(axis=1))
        if leaked > 1e-10:
            return math.inf
    ent_rho = float(np.sum(p[p_support] * np.log2(p[p_support])))
    logq = np.where(q_null, 0.0, np.log2(np.where(q_null, 1.0, q)))
    cross = float((p * (overlaps @ logq)).sum())
    return max(0.0, ent_rho - cross)


class Gaussianification(NamedTuple):
    g: GaussianState
    d_nongauss: float


def gaussianification(rho: DenseState) -> Gaussianification:
    """The Gaussian state with rho's correlation matrix, and S(rho || G(rho)).

    The relative entropy to the Gaussianification is the relative entropy of
    non-Gaussianity, the minimum over all Gaussian states.
    """
    g = states.clip_to_valid(correlation_matrix(rho))
    d = _relative_entropy(rho.rho, gaussian_to_dense(g).rho)
    return Gaussianification(g=g, d_nongauss=max(0.0, d))


def gaussian_derivative(gamma, x) -> np.ndarray:
    """d/da rho(Gamma + a X) at a = 0, i.e. -(i/8) sum X_ab [gamma_a, {gamma_b, rho}].

    Traceless and Hermitian within 1e-10 by construction of the formula.
    """
    g = as_skew_array(gamma)
    xm = as_skew_array(x)
    if g.shape != xm.shape:
        raise DimensionMismatch(f"shapes {g.shape} and {xm.shape} differ")
    s = states.from_correlation(g)
    rho = gaussian_to_dense(s).rho
    ms = majoranas(s.n)
    out = np.zeros_like(rho)
    for a in range(2 * s.n):
        for b in range(a + 1, 2 * s.n):
            if xm[a, b] == 0.0:
                continue
            ga_gb_rho = ms.left_apply(a, ms.left_apply(b, rho))
            rho_gb_ga = ms.right_apply(ms.right_apply(rho, b), a)
            gb_rho_ga = ms.right_apply(ms.left_apply(b, rho), a)
            ga_rho_gb = ms.left_apply(a, ms.right_apply(rho, b))
            out += (-0.25j * xm[a, b]) * (ga_gb_rho - rho_gb_ga - gb_rho_ga + ga_rho_gb)
    return out


def pnp_correlation(rho: DenseState) -> states.PnpCorrelation:
    """C_{jk} = Tr(a_j^dag a_k rho) with a_j = (gamma_{2j} + i gamma_{2j+1})/2."""
    ms = majoranas(rho.n)
    n = rho.n
    pair = np.empty((2 * n, 2 * n), dtype=complex)
    for mu in range(2 * n):
        for nu in range(2 * n):
            pair[mu, nu] = ms.pair_trace(mu, nu, rho.rho) if mu != nu else 1.0
    c = np.empty((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            c[j, k] = 0.25 * (
                pair[2 * j, 2 * k]
                + 1j * pair[2 * j, 2 * k + 1]
                - 1j * pair[2 * j + 1, 2 * k]
                + pair[2 * j + 1, 2 * k + 1]
            )
    c = 0.5 * (c + c.conj().T)  # remove round-off asymmetry
    return states.PnpCorrelation(n=n, c=c)


# -- assorted dense helpers ----------------------------------------------------

def partial_trace(rho: DenseState, keep_first: int) -> DenseState:
    """Trace out all modes after the first ``keep_first``."""
    if not 0 <= keep_first <= rho.n:
        raise DimensionMismatch(f"keep_first={keep_first} outside [0, {rho.n}]")
    da, db = 1 << keep_first, 1 << (rho.n - keep_first)
    r = rho.rho.reshape(da, db, da, db)
    return DenseState(keep_first, np.einsum("ibjb->ij", r))


def depolarize(rho: DenseState, p: float) -> DenseState:
    d = 1 << rho.n
    return DenseState(rho.n, (1.0 - p) * rho.rho + p * np.eye(d) / d)


def computational_basis(n: int, bits: Sequence[int]) -> DenseState:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    v = np.zeros(1 << n, dtype=complex)
    v[idx] = 1.0
    return DenseState.from_statevector(v)


def maximally_mixed(n: int) -> DenseState:
    d = 1 << n
    return DenseState(n, np.eye(d, dtype=complex) / d)


def ghz3() -> DenseState:
    """(|000> + |111>)/sqrt(2): the canonical non-Gaussian fixture."""
    v = np.zeros(8, dtype=complex)
    v[0] = v[7] = 1.0 / math.sqrt(2.0)
    return DenseState.from_statevector(v)


def random_density_matrix(n: int, rng: np.random.Generator, rank: Optional[int] = None) -> DenseState:
    """Normalized Wishart state of the given rank (full rank by default)."""
    d = 1 << n
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return DenseState(n, rho / np.trace(rho).real)


def write_dense(f: TextIO, rho: DenseState) -> None:
    """Debug dump: mode count, then rows of re/im pairs."""
    f.write(f"{rho.n}\n")
    for row in rho.rho:
        f.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row) + "\n")


def read_dense(f: TextIO) -> DenseState:
    n = int(f.readline().split()[0])
    d = 1 << n
    rows = []
    for _ in range(d):
        vals = np.array(f.readline().split(), dtype=float)
        if vals.size != 2 * d:
            raise DimensionMismatch(f"expected {2 * d} reals per row, got {vals.size}")
        rows.append(vals[0::2] + 1j * vals[1::2])
    return DenseState(n, np.vstack(rows))
