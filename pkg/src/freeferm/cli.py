"""Batch experiment runner.

Seeded, config-driven execution of estimation, testing, tomography,
bound-verification and scaling sweeps.  Per-trial outcomes are derived from
counter-based streams keyed by (seed, trial), so a record re-runs
byte-identically from its config echo regardless of the worker-pool size.

Exit codes: 0 on completion, 2 on validation or I/O error, 3 when a shot
budget overflows its cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import __version__
from . import dense as dense_mod
from . import learning, sampling, skew, states
from .errors import BudgetOverflow, FreeFermError, ValidationError
from .learning import TestConfig
from .sampling import (
    DenseSource,
    ExactGaussianSource,
    RngStream,
    StateSource,
    estimate_gamma,
    headline_shot_bound,
)

COMMANDS = (
    "verify-bounds",
    "estimate",
    "test-pure",
    "test-rank",
    "reduce-id",
    "tomo-pure",
    "tomo-mixed",
    "robustness",
    "sweep",
)

DENSE_VERIFY_MODES = 5  # dense cross-checks only run at or below this n


@dataclass
class ExperimentConfig:
    command: str
    modes: int = 3
    rank_exponent: Optional[int] = None
    eps_a: float = 0.0
    eps_b: float = 0.5
    eps: float = 0.2
    delta: float = 0.1
    trials: int = 10
    seed: int = 0
    scheme: str = "commuting"
    state_spec: str = "random_gaussian:mixed"
    out_path: Optional[str] = None
    format: str = "json"
    workers: int = 1
    shots: Optional[int] = None
    expected: Optional[str] = None
    noise_kind: str = "depolarizing"
    noise_strength: float = 0.0
    promise: str = "trace"
    gaussian_set: str = "mixed_set"
    axis: Optional[str] = None
    points: List[float] = field(default_factory=list)
    sub_command: Optional[str] = None
    shot_cap: int = sampling.DEFAULT_SHOT_CAP

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.modes < 1:
            raise ValidationError(f"modes must be >= 1, got {self.modes}")
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta {self.delta} outside (0, 1)")
        if self.scheme not in ("pauli_pairs", "commuting", "exact"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.format not in ("json", "csv"):
            raise ValidationError(f"unknown format {self.format!r}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.command == "sweep":
            if self.axis not in ("shots", "eps", "modes"):
                raise ValidationError(f"sweep axis must be shots/eps/modes, got {self.axis!r}")
            if not self.points:
                raise ValidationError("sweep needs at least one point")
            if self.sub_command not in ("estimate", "tomo-pure", "tomo-mixed"):
                raise ValidationError(f"sweep sub-command {self.sub_command!r} unsupported")
        _parse_state_spec(self.state_spec)  # raises on malformed specs


def _parse_state_spec(spec: str):
    head, _, arg = spec.partition(":")
    if head == "vacuum":
        return ("vacuum", None)
    if head == "product":
        try:
            lams = [float(x) for x in arg.split(",") if x != ""]
        except ValueError as exc:
            raise ValidationError(f"bad product spec {spec!r}") from exc
        if not lams:
            raise ValidationError(f"product spec {spec!r} has no lambdas")
        return ("product", lams)
    if head == "random_gaussian":
        if arg not in ("pure", "mixed"):
            raise ValidationError(f"random_gaussian needs :pure or :mixed, got {spec!r}")
        return ("random_gaussian", arg)
    if head == "dense_fixture":
        if not arg:
            raise ValidationError("dense_fixture needs a path")
        return ("dense_fixture", arg)
    if head == "ghz3":
        return ("ghz3", None)
    raise ValidationError(f"unknown state spec {spec!r}")


def _make_source(cfg: ExperimentConfig, stream: RngStream) -> StateSource:
    kind, arg = _parse_state_spec(cfg.state_spec)
    if kind == "vacuum":
        return ExactGaussianSource(states.vacuum(cfg.modes))
    if kind == "product":
        if len(arg) != cfg.modes:
            raise ValidationError(f"product spec has {len(arg)} lambdas but modes={cfg.modes}")
        return ExactGaussianSource(states.product_state(arg))
    if kind == "random_gaussian":
        gen = stream.child(999).generator()
        return ExactGaussianSource(states.random_gaussian_state(cfg.modes, arg, gen))
    if kind == "dense_fixture":
        with open(arg) as f:
            rho = dense_mod.read_dense(f)
        if rho.n != cfg.modes:
            raise ValidationError(f"fixture has n={rho.n}, expected modes={cfg.modes}")
        return DenseSource(rho)
    if kind == "ghz3":
        if cfg.modes != 3:
            raise ValidationError("ghz3 requires modes=3")
        return DenseSource(dense_mod.ghz3())
    raise ValidationError(f"unknown state spec {cfg.state_spec!r}")


def _dense_of_source(src: StateSource) -> Optional[dense_mod.DenseState]:
    if isinstance(src, ExactGaussianSource) and src.n <= DENSE_VERIFY_MODES:
        return dense_mod.gaussian_to_dense(src.state)
    if isinstance(src, DenseSource):
        return src.state
    return None


# -- per-trial workers ----------------------------------------------------------

def _trial_verify_bounds(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    gen = stream.generator()
    n = cfg.modes
    mode = ("mixed_mixed", "pure_pure", "pure_vs_any")[trial % 3]
    if mode == "pure_pure":
        s1 = states.random_gaussian_state(n, "pure", gen)
        s2 = states.random_gaussian_state(n, "pure", gen)
        rho1, rho2 = dense_mod.gaussian_to_dense(s1), dense_mod.gaussian_to_dense(s2)
        g2 = s2.corr.mat
    elif mode == "mixed_mixed":
        s1 = states.random_gaussian_state(n, "mixed", gen)
        s2 = states.random_gaussian_state(n, "mixed", gen)
        rho1, rho2 = dense_mod.gaussian_to_dense(s1), dense_mod.gaussian_to_dense(s2)
        g2 = s2.corr.mat
    else:
        s1 = states.random_gaussian_state(n, "pure", gen)
        rho1 = dense_mod.gaussian_to_dense(s1)
        rho2 = dense_mod.random_density_matrix(n, gen)
        g2 = dense_mod.correlation_matrix(rho2).mat
    report = states.distance_bounds(s1.corr.mat, g2, mode)
    td = dense_mod.state_metrics(rho1, rho2).trace_dist
    tol = 1e-9
    ok = report.lb_infty <= td + tol
    if mode == "pure_vs_any":
        ok = ok and td <= report.ub_pure_vs_any + tol
    else:
        ok = ok and td <= report.ub_mixed + tol
        if mode == "pure_pure":
            ok = ok and td <= report.ub_pure + tol
    return {
        "trial": trial,
        "mode": mode,
        "trace_dist": td,
        "lb_infty": report.lb_infty,
        "ub_mixed": report.ub_mixed,
        "ub_pure": report.ub_pure,
        "ub_pure_vs_any": report.ub_pure_vs_any,
        "ok": bool(ok),
        "verdict_or_error": "ok" if ok else "violation",
        "shots": 0,
    }


def _trial_estimate(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    src = _make_source(cfg, stream)
    est = estimate_gamma(
        src, cfg.eps, cfg.delta, cfg.scheme, stream.child(1),
        total_shots=cfg.shots, shot_cap=cfg.shot_cap,
    )
    err = skew.schatten_norm(est.gamma_hat.mat - src.gamma(), np.inf)
    ok = err <= cfg.eps
    return {
        "trial": trial,
        "error_inf": err,
        "ok": bool(ok),
        "verdict_or_error": f"{err:.6f}",
        "shots": est.shots_used,
    }


def _trial_test(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    src = _make_source(cfg, stream)
    tc = TestConfig(
        eps_a=cfg.eps_a, eps_b=cfg.eps_b, delta=cfg.delta,
        r=cfg.rank_exponent or 0, gaussian_set=cfg.gaussian_set,
    )
    if cfg.command == "test-pure":
        verdict = learning.test_pure(src, tc, stream.child(1), scheme=cfg.scheme,
                                     shot_cap=cfg.shot_cap)
    else:
        verdict = learning.test_bounded_rank(src, tc, stream.child(1), scheme=cfg.scheme,
                                             shot_cap=cfg.shot_cap)
    rec = {
        "trial": trial,
        "verdict_or_error": verdict.verdict,
        "shots": verdict.shots_used,
        "lambda_hat": verdict.evidence.lambda_hat_relevant,
        "threshold": verdict.evidence.threshold,
        "stage": verdict.evidence.stage,
    }
    if cfg.expected:
        rec["ok"] = verdict.verdict == cfg.expected
    return rec


def _trial_reduce_id(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    src = _make_source(cfg, stream)
    verdict, shots = learning.reduce_identity_testing(
        src, cfg.eps, cfg.delta, stream.child(1), scheme=cfg.scheme, shot_cap=cfg.shot_cap,
    )
    rec = {"trial": trial, "verdict_or_error": verdict, "shots": shots}
    if cfg.expected:
        rec["ok"] = verdict == cfg.expected
    return rec


def _trial_tomo(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    src = _make_source(cfg, stream)
    if cfg.command == "tomo-pure":
        report = learning.tomograph_pure(src, cfg.eps, cfg.delta, stream.child(1),
                                         scheme=cfg.scheme, shot_cap=cfg.shot_cap)
    else:
        report = learning.tomograph_mixed(src, cfg.eps, cfg.delta, stream.child(1),
                                          scheme=cfg.scheme, shot_cap=cfg.shot_cap)
    rec = {"trial": trial, "shots": report.shots_used}
    truth = _dense_of_source(src)
    if truth is not None:
        err = dense_mod.state_metrics(
            dense_mod.gaussian_to_dense(report.learned), truth
        ).trace_dist
        rec["dense_error"] = err
        rec["ok"] = err <= cfg.eps
        rec["verdict_or_error"] = f"{err:.6f}"
    else:
        rec["verdict_or_error"] = "learned"
    return rec


def _trial_robustness(cfg: ExperimentConfig, trial: int, stream: RngStream) -> dict:
    gen = stream.child(999).generator()
    base = states.random_gaussian_state(cfg.modes, "mixed", gen)
    result = learning.robustness_experiment(
        base, (cfg.noise_kind, cfg.noise_strength), cfg.eps, cfg.delta,
        stream.child(1), promise=cfg.promise, scheme=cfg.scheme,
    )
    return {
        "trial": trial,
        "dense_error": result.dense_error,
        "promise_value": result.promise_value,
        "ok": result.dense_error <= cfg.eps,
        "verdict_or_error": f"{result.dense_error:.6f}",
        "shots": result.shots_used,
    }


_TRIAL_WORKERS: dict = {
    "verify-bounds": _trial_verify_bounds,
    "estimate": _trial_estimate,
    "test-pure": _trial_test,
    "test-rank": _trial_test,
    "reduce-id": _trial_reduce_id,
    "tomo-pure": _trial_tomo,
    "tomo-mixed": _trial_tomo,
    "robustness": _trial_robustness,
}


def _run_trials(cfg: ExperimentConfig, worker: Callable) -> List[dict]:
    streams = [RngStream(cfg.seed, (t,)) for t in range(cfg.trials)]
    if cfg.workers == 1:
        return [worker(cfg, t, streams[t]) for t in range(cfg.trials)]
    results: List[Optional[dict]] = [None] * cfg.trials
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futs = {pool.submit(worker, cfg, t, streams[t]): t for t in range(cfg.trials)}
        for fut, t in futs.items():
            results[t] = fut.result()
    return results  # merged in trial order, independent of pool scheduling


def _aggregate(cfg: ExperimentConfig, results: List[dict]) -> dict:
    agg: dict = {"trials": len(results)}
    agg["shot_total"] = int(sum(r.get("shots", 0) for r in results))
    oks = [r["ok"] for r in results if "ok" in r]
    if oks:
        agg["success_fraction"] = float(np.mean(oks))
    errs = [r[k] for r in results for k in ("error_inf", "dense_error") if k in r]
    if errs:
        agg["median_error"] = float(np.median(errs))
    if cfg.command == "verify-bounds":
        agg["violations"] = int(sum(not r["ok"] for r in results))
    if cfg.command == "estimate" and cfg.shots is None:
        agg["headline_shot_bound"] = headline_shot_bound(cfg.scheme, cfg.modes, cfg.eps, cfg.delta) \
            if cfg.scheme != "exact" else 0
    if cfg.command == "tomo-pure":
        agg["budget_note"] = (
            "appendix budget 8 n^3/eps^2 log(4 n^2/delta); the headline statement "
            "carries constant 32"
        )
    return agg


def run(cfg: ExperimentConfig) -> dict:
    """Execute an experiment and return the run record."""
    cfg.validate()
    start = time.monotonic()
    if cfg.command == "sweep":
        record = _run_sweep(cfg)
    else:
        worker = _TRIAL_WORKERS[cfg.command]
        results = _run_trials(cfg, worker)
        record = {"results": results, "aggregate": _aggregate(cfg, results)}
    record["config"] = asdict(cfg)
    record["wall_time_s"] = time.monotonic() - start
    record["version"] = __version__
    return record


def _run_sweep(cfg: ExperimentConfig) -> dict:
    sub_records = []
    medians = []
    xs = []
    for point in cfg.points:
        sub = ExperimentConfig(**{**asdict(cfg), "command": cfg.sub_command,
                                  "axis": None, "points": [], "sub_command": None})
        if cfg.axis == "shots":
            sub.shots = int(point)
        elif cfg.axis == "eps":
            sub.eps = float(point)
        else:
            sub.modes = int(point)
        sub_record = run(sub)
        sub_records.append(sub_record)
        med = sub_record["aggregate"].get("median_error")
        if med is not None and med > 0:
            xs.append(float(point))
            medians.append(med)
    slope = None
    if len(xs) >= 2:
        slope = float(np.polyfit(np.log(xs), np.log(medians), 1)[0])
    return {
        "results": sub_records,
        "aggregate": {"slope": slope, "axis": cfg.axis, "points": list(cfg.points)},
    }


# -- output -----------------------------------------------------------------------

CSV_COLUMNS = ("trial", "verdict_or_error", "shots", "seed_stream")


def _to_csv(record: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    seed = record["config"]["seed"]
    for r in record.get("results", []):
        if "trial" not in r:  # sweep sub-records are json-only
            continue
        writer.writerow([r["trial"], r["verdict_or_error"], r.get("shots", 0),
                         f"{seed}:{r['trial']}"])
    return buf.getvalue()


def write_record(record: dict, cfg: ExperimentConfig) -> str:
    """Write to out_path ('-' for stdout); returns the destination label."""
    out = cfg.out_path
    if out is None:
        base = os.environ.get("FREEFERM_OUT_DIR", ".")
        ext = "csv" if cfg.format == "csv" else "json"
        out = os.path.join(base, f"{cfg.command}.{ext}")
    payload = _to_csv(record) if cfg.format == "csv" else json.dumps(record, indent=2,
                                                                     default=_json_default)
    if out == "-":
        sys.stdout.write(payload + "\n")
        return "-"
    with open(out, "w") as f:
        f.write(payload)
        if not payload.endswith("\n"):
            f.write("\n")
    return out


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freeferm",
        description="Seeded free-fermionic estimation/testing/tomography experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with config fields (snake_case)")
        p.add_argument("--modes", type=int)
        p.add_argument("--rank-exponent", type=int, dest="rank_exponent")
        p.add_argument("--eps-a", type=float, dest="eps_a")
        p.add_argument("--eps-b", type=float, dest="eps_b")
        p.add_argument("--eps", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--scheme", choices=("pauli_pairs", "commuting", "exact"))
        p.add_argument("--state-spec", dest="state_spec")
        p.add_argument("--out", dest="out_path")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--workers", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--expected")
        p.add_argument("--noise-kind", dest="noise_kind",
                       choices=("depolarizing", "trace_perturbation"))
        p.add_argument("--noise-strength", type=float, dest="noise_strength")
        p.add_argument("--promise", choices=("trace", "relative_entropy"))
        p.add_argument("--gaussian-set", dest="gaussian_set",
                       choices=("pure_set", "mixed_set", "rank_set"))
        p.add_argument("--axis", choices=("shots", "eps", "modes"))
        p.add_argument("--points", help="comma-separated sweep points")
        p.add_argument("--sub-command", dest="sub_command")
        p.add_argument("--shot-cap", type=int, dest="shot_cap")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            values.update(json.load(f))
    names = {f.name for f in fields(ExperimentConfig)}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values["command"] = args.command
    if isinstance(values.get("points"), str):
        values["points"] = [float(x) for x in values["points"].split(",") if x]
    unknown = set(values) - names
    if unknown:
        raise ValidationError(f"unknown config fields {sorted(unknown)}")
    return ExperimentConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        record = run(cfg)
        dest = write_record(record, cfg)
    except BudgetOverflow as exc:
        print(f"budget overflow: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, FreeFermError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    agg = record.get("aggregate", {})
    print(f"{cfg.command}: {json.dumps(agg, default=_json_default)} -> {dest}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
