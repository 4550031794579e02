"""Property-testing and tomography protocols.

The decision procedures ingest measurement samples only (through a
StateSource), compute normal eigenvalues of the estimated correlation
matrix, and compare against the threshold formulas of the corresponding
guarantee.  Verdicts carry enough evidence to recompute every threshold
from the configuration.

Shot budgets follow the algorithm boxes:

* pure test          N = ceil(8 n^3 / eps_stat^2 * ln(4 n^2 / delta))
* bounded-rank test  N = ceil(8 n^3 / eps_stat^2 * ln(8 n^2 / delta)) + tomography
* pure tomography    N = ceil(8 n^3 / eps^2 * ln(4 n^2 / delta))
* mixed tomography   N = ceil(16 n^4 / eps^2 * ln(4 n^2 / delta))

Strict-inequality accuracy parameters ("eps_stat < ...") are instantiated
at 0.9x the open bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import dense as dense_mod
from . import skew, states
from .dense import DenseState
from .errors import (
    InfeasibleThresholds,
    PromiseNotCertified,
    TooManyLocalModes,
    ValidationError,
)
from .sampling import (
    DenseSource,
    ExactGaussianSource,
    NoisySource,
    RngStream,
    StateSource,
    estimate_gamma,
)
from .skew import SkewMatrix
from .states import GaussianState

__all__ = [
    "TestConfig",
    "TestEvidence",
    "TestVerdict",
    "TomographyReport",
    "RobustnessResult",
    "CASE_A",
    "CASE_B",
    "MAXIMALLY_MIXED",
    "FAR_FROM_MAXIMALLY_MIXED",
    "pure_test_thresholds",
    "rank_test_thresholds",
    "test_pure",
    "test_bounded_rank",
    "local_full_tomography",
    "reduce_identity_testing",
    "tomograph_pure",
    "tomograph_mixed",
    "robustness_experiment",
    "pure_tomography_shots",
    "mixed_tomography_shots",
]

CASE_A = "CaseA"
CASE_B = "CaseB"
MAXIMALLY_MIXED = "MaximallyMixed"
FAR_FROM_MAXIMALLY_MIXED = "FarFromMaximallyMixed"

#: strict-inequality parameters are set at this fraction of the open bound
SLACK = 0.9
#: cap for full tomography of the leading modes
MAX_LOCAL_MODES = 6


@dataclass(frozen=True)
class TestConfig:
    """Thresholds and target set for a property-testing run."""

    eps_a: float
    eps_b: float
    delta: float
    r: int = 0
    gaussian_set: str = "mixed_set"  # pure_set | mixed_set | rank_set
    mix2_threshold_factor: float = 1.1

    def __post_init__(self):
        if not (self.eps_b > self.eps_a >= 0.0):
            raise ValidationError(f"need eps_b > eps_a >= 0, got {self.eps_a}, {self.eps_b}")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta {self.delta} outside (0, 1)")
        if self.r < 0:
            raise ValidationError(f"rank exponent {self.r} must be >= 0")
        if self.gaussian_set not in ("pure_set", "mixed_set", "rank_set"):
            raise ValidationError(f"unknown gaussian_set {self.gaussian_set!r}")


@dataclass(frozen=True)
class TestEvidence:
    lambda_hat_relevant: float
    threshold: float
    stage: str  # eigenvalue_stage | tomography_stage
    local_distance: Optional[float] = None


@dataclass(frozen=True)
class TestVerdict:
    verdict: str
    evidence: TestEvidence
    shots_used: int


@dataclass(frozen=True)
class TomographyReport:
    learned: GaussianState
    shots_used: int
    target_eps: float
    target_delta: float


# -- threshold formulas ---------------------------------------------------------

def pure_test_thresholds(cfg: TestConfig, n: int) -> Tuple[float, float]:
    """(eps_T, eps_stat) for the pure test; raises when infeasible.

    mixed_set assumes a pure input state and tests against all Gaussian
    states; pure_set tests an arbitrary input against the pure Gaussian set.
    """
    ea, eb = cfg.eps_a, cfg.eps_b
    if cfg.gaussian_set == "pure_set":
        if eb <= math.sqrt(2.0 * n * ea):
            raise InfeasibleThresholds(
                f"need eps_b > sqrt(2 n eps_a) = {math.sqrt(2 * n * ea):.4f}, got {eb}"
            )
        eps_t = 0.5 * (eb ** 2 / (2 * n) + ea)
        eps_stat = 0.25 * (eb ** 2 / (2 * n) - ea)
    elif cfg.gaussian_set == "mixed_set":
        if eb <= 2.0 * math.sqrt(n * ea):
            raise InfeasibleThresholds(
                f"need eps_b > 2 sqrt(n eps_a) = {2 * math.sqrt(n * ea):.4f}, got {eb}"
            )
        eps_t = 0.5 * (eb ** 2 / (2 * n) + 2.0 * ea)
        eps_stat = SLACK * 0.5 * (eb ** 2 / (2 * n) - 2.0 * ea)
    else:
        raise ValidationError("pure test supports gaussian_set pure_set or mixed_set")
    return eps_t, eps_stat


def rank_test_thresholds(cfg: TestConfig, n: int) -> Tuple[float, float, float, float]:
    """(eps_T, eps_stat, eps_tom, eps_T2) for the bounded-rank test.

    rank_set tests an arbitrary state against Gaussian states of rank at
    most 2^r; mixed_set assumes rank(rho) <= 2^r and tests against all
    Gaussian states.
    """
    ea, eb, r = cfg.eps_a, cfg.eps_b, cfg.r
    if not 0 <= r <= n - 1:
        raise InfeasibleThresholds(f"rank exponent r={r} outside [0, {n - 1}]")
    if cfg.gaussian_set == "rank_set":
        gap = ea
    elif cfg.gaussian_set == "mixed_set":
        gap = (2.0 * ea) ** (1.0 / (r + 1)) if ea > 0 else 0.0
    else:
        raise ValidationError("rank test supports gaussian_set rank_set or mixed_set")
    if eb <= max(math.sqrt(2 ** 5 * (n - r) * gap), 2.0 * (n + 1) * ea):
        raise InfeasibleThresholds(
            f"eps_b={eb} below the feasibility bound "
            f"max({math.sqrt(2 ** 5 * (n - r) * gap):.4f}, {2 * (n + 1) * ea:.4f})"
        )
    eps_stat = SLACK * 0.5 * (eb ** 2 / (2 ** 5 * (n - r)) - gap)
    if cfg.gaussian_set == "rank_set":
        eps_t = eb ** 2 / (2 ** 6 * (n - r)) + 0.5 * ea
    else:
        eps_t = cfg.mix2_threshold_factor * (eps_stat + gap)
    eps_tom = SLACK * (1.0 / (n + 2)) * (0.5 * eb - (n + 1) * ea)
    eps_t2 = (n + 1) / (n + 2) * (0.5 * eb + ea)
    return eps_t, eps_stat, eps_tom, eps_t2


def pure_test_shots(n: int, eps_stat: float, delta: float) -> int:
    return math.ceil(8.0 * n ** 3 / eps_stat ** 2 * math.log(4.0 * n ** 2 / delta))


def rank_test_shots(n: int, eps_stat: float, delta: float) -> int:
    return math.ceil(8.0 * n ** 3 / eps_stat ** 2 * math.log(8.0 * n ** 2 / delta))


def pure_tomography_shots(n: int, eps: float, delta: float) -> int:
    """Appendix budget; the main-text statement carries a 4x larger constant."""
    return math.ceil(8.0 * n ** 3 / eps ** 2 * math.log(4.0 * n ** 2 / delta))


def mixed_tomography_shots(n: int, eps: float, delta: float) -> int:
    return math.ceil(16.0 * n ** 4 / eps ** 2 * math.log(4.0 * n ** 2 / delta))


# -- testers ---------------------------------------------------------------------

def test_pure(
    src: StateSource,
    cfg: TestConfig,
    rng_stream: RngStream,
    scheme: str = "commuting",
    shot_cap: int = 10 ** 15,
) -> TestVerdict:
    """Accept (CaseA) iff every estimated normal eigenvalue is near 1."""
    n = src.n
    eps_t, eps_stat = pure_test_thresholds(cfg, n)
    total = None if scheme == "exact" else pure_test_shots(n, eps_stat, cfg.delta)
    est = estimate_gamma(
        src, eps_stat, cfg.delta, scheme, rng_stream.child(0),
        total_shots=total, shot_cap=shot_cap,
    )
    lam_min = float(skew.normal_eigenvalues(est.gamma_hat)[0])
    verdict = CASE_A if lam_min >= 1.0 - eps_t else CASE_B
    ev = TestEvidence(lambda_hat_relevant=lam_min, threshold=eps_t, stage="eigenvalue_stage")
    return TestVerdict(verdict=verdict, evidence=ev, shots_used=est.shots_used)


def test_bounded_rank(
    src: StateSource,
    cfg: TestConfig,
    rng_stream: RngStream,
    scheme: str = "commuting",
    shot_cap: int = 10 ** 15,
) -> TestVerdict:
    """Two-stage test: tail eigenvalues near 1, then local Gaussianity.

    Stage 1 rejects when the (r+1)-th smallest estimated eigenvalue is
    small.  Stage 2 rotates by the estimated normal form, learns the
    leading r modes by full tomography, and compares against the Gaussian
    state with the same local correlation matrix.
    """
    n = src.n
    eps_t, eps_stat, eps_tom, eps_t2 = rank_test_thresholds(cfg, n)
    r = cfg.r
    total = None if scheme == "exact" else rank_test_shots(n, eps_stat, cfg.delta)
    est = estimate_gamma(
        src, eps_stat, cfg.delta / 2.0, scheme, rng_stream.child(0),
        total_shots=total, shot_cap=shot_cap,
    )
    nf = skew.normal_form(est.gamma_hat)
    lam_next = float(nf.lambdas[r])
    if lam_next <= 1.0 - eps_t:
        ev = TestEvidence(lambda_hat_relevant=lam_next, threshold=eps_t, stage="eigenvalue_stage")
        return TestVerdict(verdict=CASE_B, evidence=ev, shots_used=est.shots_used)

    if r == 0:
        # no mixed modes to examine: the eigenvalue stage already certifies
        ev = TestEvidence(lambda_hat_relevant=lam_next, threshold=eps_t2,
                          stage="tomography_stage", local_distance=0.0)
        return TestVerdict(verdict=CASE_A, evidence=ev, shots_used=est.shots_used)

    rho_hat, tomo_shots = _local_tomography_counted(
        src, r, eps_tom, cfg.delta / 2.0, rng_stream.child(1), rotation=nf.q, scheme=scheme,
    )
    local_dist = _distance_to_own_gaussianification(rho_hat)
    verdict = CASE_B if local_dist > eps_t2 else CASE_A
    ev = TestEvidence(lambda_hat_relevant=lam_next, threshold=eps_t2,
                      stage="tomography_stage", local_distance=local_dist)
    return TestVerdict(verdict=verdict, evidence=ev, shots_used=est.shots_used + tomo_shots)


def _distance_to_own_gaussianification(rho: DenseState) -> float:
    gamma = dense_mod.correlation_matrix(rho)
    sigma = dense_mod.gaussian_to_dense(states.clip_to_valid(gamma))
    return dense_mod.state_metrics(rho, sigma).trace_dist


def local_full_tomography(
    src: StateSource,
    modes: int,
    eps_tom: float,
    delta: float,
    rng_stream: RngStream,
    rotation: Optional[np.ndarray] = None,
    scheme: str = "sampled",
) -> DenseState:
    """Single-copy Pauli tomography of the leading ``modes`` qubits.

    Every non-identity Pauli expectation of the rotated-and-reduced state is
    estimated to accuracy eps_tom / (2 * 2^r); linear inversion is projected
    to the PSD unit-trace cone by eigenvalue clipping.  With probability at
    least 1 - delta the output is within eps_tom in trace norm.
    """
    rho, _ = _local_tomography_counted(src, modes, eps_tom, delta, rng_stream, rotation, scheme)
    return rho


def _local_tomography_counted(
    src: StateSource,
    modes: int,
    eps_tom: float,
    delta: float,
    rng_stream: RngStream,
    rotation: Optional[np.ndarray],
    scheme: str,
) -> Tuple[DenseState, int]:
    r = modes
    if not 1 <= r <= MAX_LOCAL_MODES:
        raise TooManyLocalModes(f"local tomography supports 1..{MAX_LOCAL_MODES} modes, got {r}")
    if not (0.0 < eps_tom and 0.0 < delta < 1.0):
        raise ValidationError(f"need eps_tom > 0 and delta in (0, 1), got {eps_tom}, {delta}")
    truth = src.reduced_dense(rotation, r)
    if scheme == "exact":
        return truth, 0

    d = 1 << r
    n_paulis = 4 ** r - 1
    eps_p = eps_tom / (2.0 * d)
    per_pauli = math.ceil(2.0 / eps_p ** 2 * math.log(2.0 * n_paulis / delta))
    acc = np.eye(d, dtype=complex)  # identity expectation is exactly 1
    for code in range(1, 4 ** r):
        p = _pauli_matrix(r, code)
        t = float(np.sum(p * truth.rho.T).real)
        gen = rng_stream.child(code).generator()
        ones = gen.binomial(per_pauli, 0.5 * (1.0 + max(-1.0, min(1.0, t))))
        t_hat = (2.0 * ones - per_pauli) / per_pauli
        acc += t_hat * p
    rho_hat = acc / d
    w, v = np.linalg.eigh(rho_hat)
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    return DenseState(r, (v * w) @ v.conj().T), per_pauli * n_paulis


_PAULI_1Q = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _pauli_matrix(r: int, code: int) -> np.ndarray:
    """Pauli string from a base-4 code, qubit 0 as the leading factor."""
    digits = []
    for _ in range(r):
        digits.append(code % 4)
        code //= 4
    out = _PAULI_1Q[digits[-1]]
    for dgt in digits[-2::-1]:
        out = np.kron(out, _PAULI_1Q[dgt])
    return out


# -- identity-testing reduction --------------------------------------------------

def reduce_identity_testing(
    src: StateSource,
    eps: float,
    delta: float,
    rng_stream: RngStream,
    scheme: str = "commuting",
    shot_cap: int = 10 ** 15,
) -> Tuple[str, int]:
    """Identity testing through the free-fermionic lens.

    Step 1 estimates the correlation matrix at eps/(6n); step 2 flags the
    state as far whenever its operator norm exceeds eps/(3n) (the maximally
    mixed state has a vanishing correlation matrix); step 3 hands the
    remaining states to a Gaussianity check over the whole register: full
    tomography plus the distance to the learned state's Gaussianification,
    thresholded like the bounded-rank test with every mode examined.
    Returns (verdict, shots_used).
    """
    n = src.n
    eps_stat = eps / (6.0 * n)
    eps_t = eps / (3.0 * n)
    est = estimate_gamma(
        src, eps_stat, delta / 2.0, scheme, rng_stream.child(0), shot_cap=shot_cap,
    )
    sup = skew.schatten_norm(est.gamma_hat.mat, np.inf)
    if sup > eps_t:
        return FAR_FROM_MAXIMALLY_MIXED, est.shots_used

    # full-register Gaussianity solver with eps_B = eps, eps_A = 0
    eps_tom = SLACK * (1.0 / (n + 2)) * (0.5 * eps)
    eps_t2 = (n + 1) / (n + 2) * (0.5 * eps)
    rho_hat, tomo_shots = _local_tomography_counted(
        src, n, eps_tom, delta / 2.0, rng_stream.child(1), rotation=None, scheme=scheme,
    )
    dist = _distance_to_own_gaussianification(rho_hat)
    verdict = MAXIMALLY_MIXED if dist <= eps_t2 else FAR_FROM_MAXIMALLY_MIXED
    return verdict, est.shots_used + tomo_shots


# -- tomography -------------------------------------------------------------------

def tomograph_pure(
    src: StateSource,
    eps: float,
    delta: float,
    rng_stream: RngStream,
    scheme: str = "commuting",
    shot_cap: int = 10 ** 15,
) -> TomographyReport:
    """Learn a pure Gaussian state: estimate, take the normal form, snap
    every eigenvalue to 1."""
    _check_eps_delta(eps, delta)
    n = src.n
    total = None if scheme == "exact" else pure_tomography_shots(n, eps, delta)
    est = estimate_gamma(
        src, eps, delta, scheme, rng_stream.child(0), total_shots=total, shot_cap=shot_cap,
    )
    nf = skew.normal_form(est.gamma_hat).with_lambdas(np.ones(n))
    learned = GaussianState(corr=SkewMatrix(nf.reconstruct(), tol=1e-9), nf=nf)
    return TomographyReport(learned, est.shots_used, eps, delta)


def tomograph_mixed(
    src: StateSource,
    eps: float,
    delta: float,
    rng_stream: RngStream,
    scheme: str = "commuting",
    shot_cap: int = 10 ** 15,
) -> TomographyReport:
    """Learn a possibly mixed Gaussian state; eigenvalues above 1 clip to 1."""
    _check_eps_delta(eps, delta)
    n = src.n
    eps_stat = eps / math.sqrt(2.0 * n)
    total = None if scheme == "exact" else mixed_tomography_shots(n, eps, delta)
    est = estimate_gamma(
        src, eps_stat, delta, scheme, rng_stream.child(0), total_shots=total, shot_cap=shot_cap,
    )
    learned = states.clip_to_valid(est.gamma_hat)
    return TomographyReport(learned, est.shots_used, eps, delta)


def _check_eps_delta(eps: float, delta: float) -> None:
    if not (0.0 < eps < 1.0 and 0.0 < delta < 1.0):
        raise ValidationError(f"need eps, delta in (0, 1), got {eps}, {delta}")


# -- robustness experiments --------------------------------------------------------

@dataclass(frozen=True)
class RobustnessResult:
    learned: GaussianState
    dense_error: float
    promise_value: float
    shots_used: int


def robustness_experiment(
    base: GaussianState,
    noise: Tuple[str, float],
    eps: float,
    delta: float,
    rng_stream: RngStream,
    promise: str = "trace",
    scheme: str = "commuting",
) -> RobustnessResult:
    """Run mixed tomography on a noisy preparation of ``base``.

    noise is ("depolarizing", p) or ("trace_perturbation", strength); the
    latter mixes in the |+>^n projector, a non-Gaussian direction.  The
    promise ("trace": distance to the Gaussianification <= eps/(3n);
    "relative_entropy": non-Gaussianity <= eps^2) is certified by the dense
    oracle before sampling; failure raises PromiseNotCertified, marking the
    run out-of-contract rather than an algorithm failure.
    """
    n = base.n
    if n > dense_mod.MAX_DENSE_MODES // 2:
        raise TooManyLocalModes(f"promise certification needs n <= 5, got {n}")
    kind, strength = noise
    rho_base = dense_mod.gaussian_to_dense(base)
    if kind == "depolarizing":
        rho_noisy = dense_mod.depolarize(rho_base, strength)
        src: StateSource = NoisySource(ExactGaussianSource(base), strength)
    elif kind == "trace_perturbation":
        plus = np.full(1 << n, (1.0 / math.sqrt(2.0)) ** n, dtype=complex)
        tau = np.outer(plus, plus.conj())
        rho_noisy = DenseState(n, (1.0 - 0.5 * strength) * rho_base.rho + 0.5 * strength * tau)
        src = DenseSource(rho_noisy)
    else:
        raise ValidationError(f"unknown noise kind {kind!r}")

    gaussification = dense_mod.gaussianification(rho_noisy)
    if promise == "trace":
        promise_value = dense_mod.state_metrics(
            rho_noisy, dense_mod.gaussian_to_dense(gaussification.g)
        ).trace_dist
        bound = eps / (3.0 * n)
    elif promise == "relative_entropy":
        promise_value = gaussification.d_nongauss
        bound = eps ** 2
    else:
        raise ValidationError(f"unknown promise {promise!r}")
    if promise_value > bound:
        raise PromiseNotCertified(
            f"promise value {promise_value:.6f} exceeds the bound {bound:.6f}"
        )

    report = tomograph_mixed(src, eps, delta, rng_stream, scheme=scheme)
    rho_learned = dense_mod.gaussian_to_dense(report.learned)
    err = dense_mod.state_metrics(rho_learned, rho_noisy).trace_dist
    return RobustnessResult(
        learned=report.learned,
        dense_error=err,
        promise_value=promise_value,
        shots_used=report.shots_used,
    )
