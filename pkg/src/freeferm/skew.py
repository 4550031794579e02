"""Real antisymmetric (skew-symmetric) matrix algebra.

Pfaffians via Parlett-Reid elimination, the orthogonal normal (Youla) form
with non-negative block parameters, Schatten and Ky Fan norms, and the Weyl
bound on normal-eigenvalue perturbations.  All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO, Union

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    IndexOutOfRange,
    NotAntisymmetric,
    OddRestriction,
    RankTooLarge,
    UnsupportedP,
)

__all__ = [
    "SkewMatrix",
    "NormalForm",
    "as_skew_array",
    "canonical_lambda",
    "lambda_blocks",
    "pfaffian",
    "restricted_pfaffian",
    "normal_form",
    "schatten_norm",
    "ky_fan_norm",
    "normal_eigenvalues",
    "normal_eigenvalue_gap",
    "random_skew",
    "random_orthogonal",
    "write_matrix",
    "read_matrix",
]

#: entries this close to zero are treated as exact zeros when clamping lambdas
ZERO_CLAMP = 1e-12

SkewLike = Union["SkewMatrix", np.ndarray]


def _antisymmetrize(m: np.ndarray) -> np.ndarray:
    # only the strict upper triangle is authoritative; the lower triangle and
    # the diagonal are derived, so antisymmetry holds exactly
    u = np.triu(m, 1)
    return u - u.T


class SkewMatrix:
    """Immutable real antisymmetric matrix of even dimension 2n."""

    __slots__ = ("_m",)

    def __init__(self, entries: np.ndarray, *, tol: float = 1e-12):
        m = np.asarray(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] % 2 != 0 or m.shape[0] == 0:
            raise DimensionMismatch(f"dimension must be even and positive, got {m.shape[0]}")
        resid = np.abs(m + m.T).max()
        if resid > tol:
            raise NotAntisymmetric(f"antisymmetry violated by {resid:.3e} (tol {tol:.1e})")
        self._m = _antisymmetrize(m)
        self._m.setflags(write=False)

    @property
    def mat(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def n(self) -> int:
        return self._m.shape[0] // 2

    def __array__(self, dtype=None):
        return self._m if dtype is None else self._m.astype(dtype)

    def __repr__(self) -> str:
        return f"SkewMatrix(dim={self.dim})"

    @staticmethod
    def zeros(dim: int) -> "SkewMatrix":
        if dim % 2 != 0 or dim <= 0:
            raise DimensionMismatch(f"dimension must be even and positive, got {dim}")
        return SkewMatrix(np.zeros((dim, dim)))


def as_skew_array(a: SkewLike, *, tol: float = 1e-12) -> np.ndarray:
    """Coerce to a validated, exactly antisymmetric ndarray."""
    if isinstance(a, SkewMatrix):
        return a.mat
    return SkewMatrix(np.asarray(a, dtype=float), tol=tol).mat


def lambda_blocks(lambdas: Sequence[float]) -> np.ndarray:
    """Block-diagonal matrix with blocks ``lam * [[0, 1], [-1, 0]]``."""
    lams = np.asarray(lambdas, dtype=float)
    n = lams.size
    out = np.zeros((2 * n, 2 * n))
    out[2 * np.arange(n), 2 * np.arange(n) + 1] = lams
    out[2 * np.arange(n) + 1, 2 * np.arange(n)] = -lams
    return out


def canonical_lambda(n: int) -> np.ndarray:
    """The direct sum of n blocks [[0, 1], [-1, 0]]."""
    return lambda_blocks(np.ones(n))


def pfaffian(a: SkewLike) -> float:
    """Pfaffian via skew-symmetric Parlett-Reid elimination with partial pivoting.

    Satisfies Pf(a)^2 = det(a) and Pf(B a B^T) = det(B) Pf(a); O(dim^3).
    """
    m = as_skew_array(a).copy()
    d = m.shape[0]
    pf = 1.0
    for k in range(0, d - 2, 2):
        col = np.abs(m[k + 1:, k])
        ip = k + 1 + int(np.argmax(col))
        if m[ip, k] == 0.0:
            return 0.0
        if ip != k + 1:
            m[[k + 1, ip], :] = m[[ip, k + 1], :]
            m[:, [k + 1, ip]] = m[:, [ip, k + 1]]
            pf = -pf
        piv = m[k, k + 1]
        pf *= piv
        tau = m[k, k + 2:] / piv
        w = m[k + 1, k + 2:]
        m[k + 2:, k + 2:] += np.outer(w, tau) - np.outer(tau, w)
    return pf * m[d - 2, d - 1]


def restricted_pfaffian(a: SkewLike, s: Iterable[int]) -> float:
    """Pfaffian of the principal submatrix on the (0-based) index set ``s``.

    The empty restriction has Pfaffian 1 by convention.
    """
    m = as_skew_array(a)
    idx = list(s)
    if len(idx) % 2 != 0:
        raise OddRestriction(f"restriction needs an even number of indices, got {len(idx)}")
    if not idx:
        return 1.0
    if any(i < 0 or i >= m.shape[0] for i in idx):
        raise IndexOutOfRange(f"indices {idx} outside [0, {m.shape[0]})")
    if any(b <= a_ for a_, b in zip(idx, idx[1:])):
        raise IndexOutOfRange(f"indices must be strictly increasing, got {idx}")
    return pfaffian(m[np.ix_(idx, idx)])


@dataclass(frozen=True)
class NormalForm:
    """Decomposition a = q . blockdiag(lam_j [[0,1],[-1,0]]) . q^T.

    ``lambdas`` are non-negative and sorted ascending; ``det_sign`` records
    det(q) so callers needing the SO(2n) convention can compose a reflection.
    """

    q: np.ndarray
    lambdas: np.ndarray
    det_sign: int

    @property
    def n(self) -> int:
        return self.lambdas.size

    def reconstruct(self) -> np.ndarray:
        return self.q @ lambda_blocks(self.lambdas) @ self.q.T

    def with_lambdas(self, lambdas: Sequence[float]) -> "NormalForm":
        lams = np.asarray(lambdas, dtype=float)
        if lams.size != self.n:
            raise DimensionMismatch("lambda count does not match the block count")
        return NormalForm(self.q, lams, self.det_sign)


def _schur_blocks(a: np.ndarray, block_tol: float):
    """Real Schur factorization of an antisymmetric matrix, as 2x2 plane data.

    Returns (z, blocks) with a = z t z^T and ``blocks`` a list of
    (value, i, j): value >= 0 is the rotation parameter of the plane spanned
    by columns i, j of z, oriented so that t[i, j] = +value.
    """
    try:
        t, z = scipy.linalg.schur(a, output="real")
    except Exception as exc:  # pragma: no cover - scipy signals pathology
        raise ConvergenceFailure(f"real Schur factorization failed: {exc}") from exc
    # structure from the LAPACK subdiagonal, values from the exact congruence
    tc = z.T @ a @ z
    d = a.shape[0]
    blocks = []
    singles = []
    i = 0
    while i < d:
        if i + 1 < d and abs(t[i + 1, i]) > block_tol:
            val = 0.5 * (tc[i, i + 1] - tc[i + 1, i])
            if val >= 0:
                blocks.append((val, i, i + 1))
            else:
                blocks.append((-val, i + 1, i))
            i += 2
        else:
            singles.append(i)
            i += 1
    # 1x1 blocks of an antisymmetric matrix carry eigenvalue 0; pair them up
    for a_, b_ in zip(singles[0::2], singles[1::2]):
        blocks.append((0.0, a_, b_))
    return z, blocks


def normal_form(a: SkewLike) -> NormalForm:
    """Normal (Youla) form with all block parameters non-negative.

    Blocks are sorted ascending by lambda; ties keep the original block
    order.  Values within ZERO_CLAMP of zero are clamped to exactly 0.
    """
    m = as_skew_array(a)
    scale = max(1.0, float(np.abs(m).max()))
    z, blocks = _schur_blocks(m, block_tol=1e-12 * scale)
    order = sorted(range(len(blocks)), key=lambda b: (blocks[b][0], b))
    cols = []
    lams = []
    for b in order:
        val, i, j = blocks[b]
        lams.append(0.0 if val < ZERO_CLAMP else val)
        cols.extend((i, j))
    q = z[:, cols]
    det_sign = 1 if np.linalg.det(q) > 0 else -1
    return NormalForm(q=q, lambdas=np.asarray(lams), det_sign=det_sign)


def normal_eigenvalues(a: SkewLike) -> np.ndarray:
    """Non-negative normal eigenvalues, ascending (no eigenvectors)."""
    m = as_skew_array(a)
    sv = np.linalg.svd(m, compute_uv=False)
    # singular values of a skew matrix come in equal pairs
    return sv[0::2][::-1].copy()


def schatten_norm(a: np.ndarray, p) -> float:
    """Schatten p-norm for p in {1, 2, inf}: the p-norm of the singular values."""
    m = np.asarray(a)
    if p == 2:
        return float(np.linalg.norm(m, "fro"))
    if p == 1 or p == np.inf:
        sv = np.linalg.svd(m, compute_uv=False)
        return float(sv.sum()) if p == 1 else float(sv[0]) if sv.size else 0.0
    raise UnsupportedP(f"supported p are 1, 2 and inf; got {p!r}")


def ky_fan_norm(a: np.ndarray, r: int) -> float:
    """Sum of the r largest singular values."""
    m = np.asarray(a)
    if r <= 0 or r > min(m.shape):
        raise RankTooLarge(f"order r={r} outside [1, {min(m.shape)}]")
    sv = np.linalg.svd(m, compute_uv=False)
    return float(sv[:r].sum())


def normal_eigenvalue_gap(a: SkewLike, b: SkewLike) -> float:
    """max_k |lambda_k(a) - lambda_k(b)|, both sorted ascending.

    Bounded above by the operator norm of a - b (Weyl perturbation bound).
    """
    ma, mb = as_skew_array(a), as_skew_array(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"shapes {ma.shape} and {mb.shape} differ")
    return float(np.abs(normal_eigenvalues(ma) - normal_eigenvalues(mb)).max())


def random_skew(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random antisymmetric matrix with i.i.d. Gaussian upper triangle."""
    return _antisymmetrize(rng.normal(scale=scale, size=(dim, dim)))


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish orthogonal matrix from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


# -- matrix text fixtures ----------------------------------------------------

def write_matrix(f: TextIO, a: SkewLike) -> None:
    """Plain-text fixture: first line the dimension, then the rows."""
    m = as_skew_array(a)
    f.write(f"{m.shape[0]}\n")
    for row in m:
        f.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_matrix(f: TextIO) -> SkewMatrix:
    """Read the plain-text fixture; rejects non-antisymmetric input beyond 1e-12."""
    dim = int(f.readline().split()[0])
    rows = [np.array(f.readline().split(), dtype=float) for _ in range(dim)]
    m = np.vstack(rows)
    if m.shape != (dim, dim):
        raise DimensionMismatch(f"expected {dim}x{dim} entries")
    return SkewMatrix(m, tol=1e-12)
