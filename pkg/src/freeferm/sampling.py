"""Measurement simulation and correlation-matrix estimation.

State sources (analytic Gaussian, dense, depolarized wrappers), Z-basis
sampling after Gaussian rotations, the round-robin matching plan that groups
the quadratic observables -i gamma_j gamma_k into 2n-1 commuting rounds, and
the two estimation schemes with their shot budgets.

Randomness comes from counter-based Philox streams keyed by
(master seed, trial id, matching id); there is no global RNG state, so runs
are reproducible under any parallel schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import dense as dense_mod
from . import skew, states
from .dense import DenseState
from .errors import BudgetOverflow, DimensionMismatch, InvalidMatching, TooManyModes
from .skew import SkewMatrix
from .states import GaussianState

__all__ = [
    "RngStream",
    "StateSource",
    "ExactGaussianSource",
    "DenseSource",
    "NoisySource",
    "MatchingPlan",
    "GammaEstimate",
    "matchings",
    "matching_rotation",
    "z_basis_distribution",
    "sample_z_basis",
    "estimate_gamma",
    "headline_shot_bound",
    "write_shot_records",
    "write_estimate",
    "read_estimate",
]

#: largest mode count for the exact conditional-sampling path (2^n branches)
MAX_SAMPLING_MODES = 14
#: default cap on a single estimation request, in copies of the state
DEFAULT_SHOT_CAP = 10 ** 15


@dataclass(frozen=True)
class RngStream:
    """Splittable counter-based random stream."""

    seed: int
    key: Tuple[int, ...] = ()

    def child(self, *k: int) -> "RngStream":
        return RngStream(self.seed, self.key + k)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


# -- state sources -------------------------------------------------------------

class StateSource:
    """Measurement access to an unknown state.

    Subclasses provide the exact correlation matrix (for exact-scheme runs
    and for Bernoulli simulation of single Pauli-pair measurements), the
    exact Z-basis distribution after an optional Gaussian rotation, and the
    exact reduced density matrix on leading modes (for tomography sampling).
    """

    n: int

    def gamma(self) -> np.ndarray:
        raise NotImplementedError

    def z_distribution(self, q: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def reduced_dense(self, q: Optional[np.ndarray], r: int) -> DenseState:
        raise NotImplementedError


@dataclass(frozen=True)
class ExactGaussianSource(StateSource):
    state: GaussianState

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.state.n

    def gamma(self) -> np.ndarray:
        return self.state.corr.mat

    def z_distribution(self, q: Optional[np.ndarray] = None) -> np.ndarray:
        g = self.state.corr.mat
        if q is not None:
            g = q @ g @ q.T
        return z_basis_distribution(g)

    def reduced_dense(self, q: Optional[np.ndarray], r: int) -> DenseState:
        g = self.state.corr.mat
        if q is not None:
            g = q @ g @ q.T
        sub = states.clip_to_valid(0.5 * (g[: 2 * r, : 2 * r] - g[: 2 * r, : 2 * r].T))
        return dense_mod.gaussian_to_dense(sub)


@dataclass(frozen=True)
class DenseSource(StateSource):
    state: DenseState

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.state.n

    def gamma(self) -> np.ndarray:
        return dense_mod.correlation_matrix(self.state).mat

    def _rotated(self, q: Optional[np.ndarray]) -> np.ndarray:
        if q is None:
            return self.state.rho
        u = dense_mod.gaussian_unitary(q)
        return u @ self.state.rho @ u.conj().T

    def z_distribution(self, q: Optional[np.ndarray] = None) -> np.ndarray:
        d = np.diag(self._rotated(q)).real
        return _normalize_distribution(d)

    def reduced_dense(self, q: Optional[np.ndarray], r: int) -> DenseState:
        return dense_mod.partial_trace(DenseState(self.n, self._rotated(q)), r)


@dataclass(frozen=True)
class NoisySource(StateSource):
    """Depolarizing wrapper: rho -> (1-p) rho + p I/2^n.

    Depolarizing commutes with every unitary, so rotations pass through to
    the inner source and the uniform component mixes in afterwards.
    """

    inner: StateSource
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"depolarizing strength {self.p} outside [0, 1]")

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.inner.n

    def gamma(self) -> np.ndarray:
        return (1.0 - self.p) * self.inner.gamma()

    def z_distribution(self, q: Optional[np.ndarray] = None) -> np.ndarray:
        base = self.inner.z_distribution(q)
        return (1.0 - self.p) * base + self.p / base.size

    def reduced_dense(self, q: Optional[np.ndarray], r: int) -> DenseState:
        base = self.inner.reduced_dense(q, r)
        return dense_mod.depolarize(base, self.p)


def _normalize_distribution(d: np.ndarray) -> np.ndarray:
    d = np.clip(d, 0.0, None)
    total = d.sum()
    if not 0.999 < total < 1.001:
        raise ValueError(f"diagonal mass {total} is not a distribution")
    return d / total


def z_basis_distribution(gamma: np.ndarray) -> np.ndarray:
    """Exact computational-basis distribution of the Gaussian state of ``gamma``.

    Sequential mode-by-mode conditional sampling: measuring the first
    remaining mode gives bit 0 with probability (1 + g_01)/2, and the
    projective update on the remaining block is
    g' = g_rest - s (u^T v - v^T u) / (1 + s g_01) with u, v the first two
    rows.  The full outcome tree is expanded, so the result is exact.
    """
    g = skew.as_skew_array(gamma, tol=1e-9)
    n = g.shape[0] // 2
    if n > MAX_SAMPLING_MODES:
        raise TooManyModes(f"mode count {n} exceeds sampling cap {MAX_SAMPLING_MODES}")
    out = np.zeros(1 << n)
    stack = [(g, 0, 1.0)]
    while stack:
        sub, idx, p = stack.pop()
        m = sub.shape[0] // 2
        g01 = sub[0, 1]
        for bit, sign in ((0, 1.0), (1, -1.0)):
            pb = 0.5 * (1.0 + sign * g01)
            if pb <= 1e-16:
                continue
            if m == 1:
                out[(idx << 1) | bit] = p * pb
                continue
            u = sub[0, 2:]
            v = sub[1, 2:]
            upd = sub[2:, 2:] - sign * (np.outer(u, v) - np.outer(v, u)) / (2.0 * pb)
            stack.append((upd, (idx << 1) | bit, p * pb))
    return _normalize_distribution(out)


# -- matchings -----------------------------------------------------------------

@dataclass(frozen=True)
class MatchingPlan:
    """1-factorization of the complete graph on the 2n Majorana indices."""

    n: int
    matchings: Tuple[Tuple[Tuple[int, int], ...], ...]

    def __len__(self) -> int:
        return len(self.matchings)


def matchings(n: int) -> MatchingPlan:
    """Round-robin (circle method) 1-factorization: 2n-1 perfect matchings.

    Vertex 2n-1 stays fixed; the others rotate, so every unordered pair
    appears in exactly one matching.
    """
    if n < 1:
        raise DimensionMismatch(f"need n >= 1, got {n}")
    v = 2 * n - 1  # number of rotating vertices
    rounds = []
    for t in range(v):
        pairs = [tuple(sorted((t % v, 2 * n - 1)))]
        for i in range(1, n):
            a = (t + i) % v
            b = (t - i) % v
            pairs.append(tuple(sorted((a, b))))
        rounds.append(tuple(sorted(pairs)))
    return MatchingPlan(n=n, matchings=tuple(rounds))


def matching_rotation(m: Sequence[Tuple[int, int]], n: int) -> np.ndarray:
    """Signed permutation q in SO(2n) sending pair (j, k) to rows (2i, 2i+1).

    Measuring Z of qubit i on the q-rotated state reads out the (j, k)
    correlation entry, up to the per-row sign q[2i, j] * q[2i+1, k] that the
    estimator extracts from q itself.
    """
    pairs = [tuple(p) for p in m]
    flat = [x for p in pairs for x in p]
    if len(pairs) != n or sorted(flat) != list(range(2 * n)) or any(j >= k for j, k in pairs):
        raise InvalidMatching(f"{m} is not a perfect matching of range({2 * n})")
    q = np.zeros((2 * n, 2 * n))
    for i, (j, k) in enumerate(pairs):
        q[2 * i, j] = 1.0
        q[2 * i + 1, k] = 1.0
    if np.linalg.det(q) < 0:
        q[2 * n - 1, :] *= -1.0
    return q


def _pair_signs(q: np.ndarray, pairs: Sequence[Tuple[int, int]]) -> np.ndarray:
    return np.array([q[2 * i, j] * q[2 * i + 1, k] for i, (j, k) in enumerate(pairs)])


# -- sampling and estimation ---------------------------------------------------

def sample_z_basis(
    src: StateSource,
    shots: int,
    rng_stream: RngStream,
    q: Optional[np.ndarray] = None,
) -> np.ndarray:
    """i.i.d. computational-basis outcomes (integers, qubit 0 = MSB)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    dist = src.z_distribution(q)
    gen = rng_stream.generator()
    return gen.choice(dist.size, size=shots, p=dist)


@dataclass(frozen=True)
class GammaEstimate:
    """An estimated correlation matrix and its provenance."""

    gamma_hat: SkewMatrix
    shots_used: int
    scheme: str
    eps_stat: float
    delta: float


def _hoeffding_shots(eps_entry: float, fail: float, union_terms: int) -> int:
    """Per-round copies so each +-1 empirical mean is eps_entry-accurate."""
    return math.ceil(2.0 / eps_entry ** 2 * math.log(2.0 * union_terms / fail))


def headline_shot_bound(scheme: str, n: int, eps_stat: float, delta: float) -> int:
    """The headline copy-count bounds of the two estimation guarantees."""
    if scheme == "commuting":
        return math.ceil(8.0 * n ** 3 / eps_stat ** 2 * math.log(4.0 * n ** 2 / delta))
    if scheme == "pauli_pairs":
        return math.ceil(16.0 * n ** 4 / eps_stat ** 2 * math.log(n ** 2 / delta))
    raise ValueError(f"no stated bound for scheme {scheme!r}")


def _split_budget(total: int, rounds: int) -> List[int]:
    base, rem = divmod(total, rounds)
    return [base + (1 if i < rem else 0) for i in range(rounds)]


def estimate_gamma(
    src: StateSource,
    eps_stat: float,
    delta: float,
    scheme: str,
    rng_stream: RngStream,
    *,
    total_shots: Optional[int] = None,
    shot_cap: int = DEFAULT_SHOT_CAP,
) -> GammaEstimate:
    """Estimate the correlation matrix to sup-norm accuracy eps_stat.

    scheme "exact" reads analytic expectations (eps recorded as 0);
    "pauli_pairs" measures each -i gamma_j gamma_k observable separately;
    "commuting" measures one matching round per Clifford-Gaussian rotation.
    Default budgets follow the per-entry Hoeffding accounting with
    eps_entry = eps_stat / (2n) and a union bound over all n(2n-1) entries;
    ``total_shots`` overrides the budget and is split evenly across rounds.
    Entries are clipped to [-1, 1] before assembly.
    """
    n = src.n
    dim = 2 * n
    if scheme == "exact":
        g = np.clip(src.gamma(), -1.0, 1.0)
        return GammaEstimate(SkewMatrix(g, tol=1e-9), 0, "exact", 0.0, delta)
    if scheme not in ("pauli_pairs", "commuting"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if not 0.0 < eps_stat <= 2.0 and total_shots is None:
        raise ValueError(f"eps_stat {eps_stat} outside (0, 2]")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta {delta} outside (0, 1)")

    pair_count = n * (2 * n - 1)
    g = np.zeros((dim, dim))

    if scheme == "pauli_pairs":
        if total_shots is None:
            per_pair = [_hoeffding_shots(eps_stat / dim, delta, pair_count)] * pair_count
        else:
            per_pair = _split_budget(total_shots, pair_count)
        used = sum(per_pair)
        if used > shot_cap:
            raise BudgetOverflow(f"{used} shots exceed the cap {shot_cap}")
        truth = src.gamma()
        i = 0
        for j in range(dim):
            for k in range(j + 1, dim):
                shots = per_pair[i]
                gen = rng_stream.child(i).generator()
                ones = gen.binomial(shots, 0.5 * (1.0 + truth[j, k])) if shots else 0
                g[j, k] = (2.0 * ones - shots) / shots if shots else 0.0
                i += 1
    else:
        plan = matchings(n)
        rounds = len(plan)
        if total_shots is None:
            per_round = [_hoeffding_shots(eps_stat / dim, delta, pair_count)] * rounds
        else:
            per_round = _split_budget(total_shots, rounds)
        used = sum(per_round)
        if used > shot_cap:
            raise BudgetOverflow(f"{used} shots exceed the cap {shot_cap}")
        outcomes = np.arange(1 << n)
        bit_signs = np.empty((n, 1 << n))
        for i in range(n):
            bit_signs[i] = 1.0 - 2.0 * ((outcomes >> (n - 1 - i)) & 1)
        for mi, pairs in enumerate(plan.matchings):
            shots = per_round[mi]
            if shots == 0:
                continue
            q = matching_rotation(pairs, n)
            dist = src.z_distribution(q)
            gen = rng_stream.child(mi).generator()
            counts = gen.multinomial(shots, dist)
            means = (bit_signs @ counts) / shots
            signs = _pair_signs(q, pairs)
            for i, (j, k) in enumerate(pairs):
                g[j, k] = signs[i] * means[i]

    g = np.clip(np.triu(g, 1), -1.0, 1.0)
    return GammaEstimate(SkewMatrix(g - g.T), used, scheme, eps_stat, delta)


# -- export formats -------------------------------------------------------------

def write_shot_records(
    f: TextIO, trial: int, matching_index: int, outcomes: np.ndarray, n: int
) -> None:
    """One JSON line per shot: {trial, matching_index, bitstring}."""
    for x in outcomes:
        rec = {"trial": trial, "matching_index": matching_index, "bitstring": format(int(x), f"0{n}b")}
        f.write(json.dumps(rec) + "\n")


def write_estimate(f: TextIO, est: GammaEstimate, seed: Optional[int] = None) -> None:
    """Metadata header (JSON line) followed by the matrix text format."""
    header = {
        "scheme": est.scheme,
        "shots": est.shots_used,
        "eps": est.eps_stat,
        "delta": est.delta,
        "seed": seed,
    }
    f.write(json.dumps(header) + "\n")
    skew.write_matrix(f, est.gamma_hat)


def read_estimate(f: TextIO) -> GammaEstimate:
    header = json.loads(f.readline())
    gamma = skew.read_matrix(f)
    return GammaEstimate(
        gamma_hat=gamma,
        shots_used=int(header["shots"]),
        scheme=str(header["scheme"]),
        eps_stat=float(header["eps"]),
        delta=float(header["delta"]),
    )
