"""Configuration-driven front end.

Commands::

    fedminimax run    --config cfg.json [--out DIR] [--seed N] [--parallel]
    fedminimax sweep  --config cfg.json --axes AXES --out DIR
    fedminimax verify --trace trace.csv --config cfg.json

Configs are plain JSON with a flat schema; every field has a default (see
``CONFIG_DEFAULTS``).  Either a schedule selector ("theorem1"/"theorem2")
or the six explicit rates may be given, never both.  ``AXES`` is a JSON
object over {algorithm, p, T, N, s, seed}, either inline or @file.

Exit codes: 0 ok, 1 usage/config/parse error, 2 invariant violation,
3 I/O failure.  The default output directory comes from the
FEDMINIMAX_OUTDIR environment variable, falling back to the working
directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ALGORITHMS, HyperParams, NoiseModel, theorem1_schedule, theorem2_schedule
from .fedopt import InternalInvariantViolation, run, trace_from_csv, trace_to_csv
from .metrics import verify_invariants
from .problems import gen_imbalanced_data, make_auc_problem, make_saddle_problem

ENV_OUTDIR = "FEDMINIMAX_OUTDIR"

RATE_KEYS = ("gamma_x", "gamma_y", "eta_x", "eta_y", "beta_x", "beta_y")
SWEEP_AXES = ("algorithm", "p", "T", "N", "s", "seed")
BASELINE_BETA = 0.9  # fixed momentum for the baselines when a schedule is selected

CONFIG_DEFAULTS = {
    "algorithm": "nsgda-m",
    "problem": "saddle",
    "N": 8,
    "p": 4,
    "T": 100,
    "seeds": (1,),
    "schedule": "theorem1",
    "constants": (1.0, 1.0, 1.0),
    "tau": 0.1,
    "ns_iters": 10,
    "ns_mode": "iterative",
    "zero_momentum_policy": "skip",
    "noise": {"family": "none", "s": 2.0, "sigma": 0.0},
    "out": None,
    "parallel_clients": False,
    "momentum_warm_start": False,
    "halt_on_divergence": False,
    "phi_tol": 1e-8,
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class SaddleSpec:
    d_x: int = 10
    d_y: int = 10
    mu: float = 1.0
    amp: float = 1.0
    hetero: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class AucSpec:
    n_per_client: int = 640
    ratio: float = 0.1
    ratios: Optional[tuple] = None  # per-client list overrides `ratio`
    dim: int = 20
    separation: float = 2.0
    batch_size: int = 64
    pooled_ratio: bool = False
    spread: float = 0.5
    seed: int = 0
    test_size: int = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    problem: object  # SaddleSpec | AucSpec
    N: int
    p: int
    T: int
    seeds: tuple
    schedule: Optional[str]
    constants: tuple
    explicit: Optional[dict]  # the six rates when schedule is None
    tau: float
    ns_iters: int
    ns_mode: str
    zero_momentum_policy: str
    noise: NoiseModel
    out: Optional[str]
    parallel_clients: bool
    momentum_warm_start: bool
    halt_on_divergence: bool
    phi_tol: float


def _take(data: dict, key, want, errors, default=None):
    """Pop data[key], type-checked against `want` (a type or tuple of types)."""
    if key not in data:
        return default
    val = data.pop(key)
    kinds = want if isinstance(want, tuple) else (want,)
    if bool in kinds and isinstance(val, bool):
        return val
    if isinstance(val, bool) and bool not in kinds:
        errors.append(f"{key}: expected {want}, got a boolean")
        return default
    if float in kinds and isinstance(val, int):
        return float(val)
    if not isinstance(val, kinds):
        errors.append(f"{key}: expected {tuple(k.__name__ for k in kinds)}, got {type(val).__name__}")
        return default
    return val


def _parse_problem(raw, errors):
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        errors.append(f"problem: expected a kind string or object, got {type(raw).__name__}")
        return SaddleSpec()
    raw = dict(raw)
    kind = raw.pop("kind", "saddle")
    if kind == "saddle":
        spec = SaddleSpec(
            d_x=_take(raw, "d_x", int, errors, 10),
            d_y=_take(raw, "d_y", int, errors, 10),
            mu=_take(raw, "mu", float, errors, 1.0),
            amp=_take(raw, "amp", float, errors, 1.0),
            hetero=_take(raw, "hetero", float, errors, 0.0),
            seed=_take(raw, "seed", int, errors, 0),
        )
        if spec.mu <= 0:
            errors.append("problem.mu: must be positive")
        if spec.amp < 0:
            errors.append("problem.amp: must be >= 0")
    elif kind == "auc":
        ratios = _take(raw, "ratios", list, errors, None)
        spec = AucSpec(
            n_per_client=_take(raw, "n_per_client", int, errors, 640),
            ratio=_take(raw, "ratio", float, errors, 0.1),
            ratios=None if ratios is None else tuple(float(r) for r in ratios),
            dim=_take(raw, "dim", int, errors, 20),
            separation=_take(raw, "separation", float, errors, 2.0),
            batch_size=_take(raw, "batch_size", int, errors, 64),
            pooled_ratio=_take(raw, "pooled_ratio", bool, errors, False),
            spread=_take(raw, "spread", float, errors, 0.5),
            seed=_take(raw, "seed", int, errors, 0),
            test_size=_take(raw, "test_size", int, errors, 2000),
        )
        for r in (spec.ratios or (spec.ratio,)):
            if not (0.0 < r < 1.0):
                errors.append(f"problem ratio {r}: must lie in (0, 1)")
    else:
        errors.append(f"problem.kind: unknown kind {kind!r}")
        spec = SaddleSpec()
    for key in raw:
        errors.append(f"problem.{key}: unknown key")
    return spec


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a JSON config; reports every error at once."""
    errors: list = []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a JSON object"])
    data = dict(data)

    algorithm = _take(data, "algorithm", str, errors, CONFIG_DEFAULTS["algorithm"])
    if algorithm not in ALGORITHMS:
        errors.append(f"algorithm: unknown {algorithm!r}; choose from {ALGORITHMS}")
    problem = _parse_problem(data.pop("problem", CONFIG_DEFAULTS["problem"]), errors)

    N = _take(data, "N", int, errors, CONFIG_DEFAULTS["N"])
    p = _take(data, "p", int, errors, CONFIG_DEFAULTS["p"])
    T = _take(data, "T", int, errors, CONFIG_DEFAULTS["T"])
    for name, val in (("N", N), ("p", p), ("T", T)):
        if val is not None and val < 1:
            errors.append(f"{name}: must be >= 1, got {val}")

    seed = _take(data, "seed", int, errors, None)
    seeds_raw = _take(data, "seeds", list, errors, None)
    if seed is not None and seeds_raw is not None:
        errors.append("seed and seeds are mutually exclusive")
    if seeds_raw is not None:
        if not seeds_raw or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw):
            errors.append("seeds: must be a nonempty list of integers")
            seeds = CONFIG_DEFAULTS["seeds"]
        else:
            seeds = tuple(seeds_raw)
    elif seed is not None:
        seeds = (seed,)
    else:
        seeds = CONFIG_DEFAULTS["seeds"]

    schedule = _take(data, "schedule", str, errors, None)
    explicit_given = {k: _take(data, k, float, errors) for k in RATE_KEYS}
    explicit_given = {k: v for k, v in explicit_given.items() if v is not None}
    if schedule is not None and explicit_given:
        errors.append(
            f"schedule and explicit rates are mutually exclusive (got schedule={schedule!r} "
            f"and {sorted(explicit_given)})")
    if schedule is None and not explicit_given:
        schedule = CONFIG_DEFAULTS["schedule"]
    if schedule is not None and schedule not in ("theorem1", "theorem2"):
        errors.append(f"schedule: must be 'theorem1' or 'theorem2', got {schedule!r}")
    explicit = None
    if schedule is None:
        missing = [k for k in RATE_KEYS if k not in explicit_given]
        if missing:
            errors.append(f"explicit mode needs all of {RATE_KEYS}; missing {missing}")
        for k in ("gamma_x", "gamma_y", "eta_x", "eta_y"):
            v = explicit_given.get(k)
            if v is not None and v <= 0:
                errors.append(f"{k}: must be positive, got {v}")
        for k in ("beta_x", "beta_y"):
            v = explicit_given.get(k)
            if v is not None and not (0.0 < v <= 1.0):
                errors.append(f"{k}: must lie in (0, 1], got {v}")
        explicit = explicit_given

    constants_raw = _take(data, "constants", list, errors, None)
    if constants_raw is None:
        constants = CONFIG_DEFAULTS["constants"]
    elif len(constants_raw) != 3 or any(not isinstance(c, (int, float)) or c <= 0 for c in constants_raw):
        errors.append("constants: must be three positive numbers")
        constants = CONFIG_DEFAULTS["constants"]
    else:
        constants = tuple(float(c) for c in constants_raw)

    tau = _take(data, "tau", float, errors, CONFIG_DEFAULTS["tau"])
    if tau is not None and tau <= 0:
        errors.append(f"tau: must be positive, got {tau}")
    ns_iters = _take(data, "ns_iters", int, errors, CONFIG_DEFAULTS["ns_iters"])
    if ns_iters is not None and ns_iters < 1:
        errors.append(f"ns_iters: must be >= 1, got {ns_iters}")
    ns_mode = _take(data, "ns_mode", str, errors, CONFIG_DEFAULTS["ns_mode"])
    if ns_mode not in ("iterative", "exact-svd"):
        errors.append(f"ns_mode: must be 'iterative' or 'exact-svd', got {ns_mode!r}")
    policy = _take(data, "zero_momentum_policy", str, errors, CONFIG_DEFAULTS["zero_momentum_policy"])
    if policy not in ("skip", "error"):
        errors.append(f"zero_momentum_policy: must be 'skip' or 'error', got {policy!r}")

    noise_raw = _take(data, "noise", dict, errors, dict(CONFIG_DEFAULTS["noise"]))
    noise = NoiseModel()
    if noise_raw is not None:
        noise_raw = dict(noise_raw)
        kwargs = {
            "family": _take(noise_raw, "family", str, errors, "none"),
            "s": _take(noise_raw, "s", float, errors, 2.0),
            "sigma": _take(noise_raw, "sigma", float, errors, 0.0),
            "tail_exponent": _take(noise_raw, "tail_exponent", (float, type(None)), errors, None),
        }
        for key in noise_raw:
            errors.append(f"noise.{key}: unknown key")
        try:
            noise = NoiseModel(**kwargs)
        except (ValueError, TypeError) as exc:
            errors.append(f"noise: {exc}")

    out = _take(data, "out", (str, type(None)), errors, CONFIG_DEFAULTS["out"])
    parallel = _take(data, "parallel_clients", bool, errors, CONFIG_DEFAULTS["parallel_clients"])
    warm = _take(data, "momentum_warm_start", bool, errors, CONFIG_DEFAULTS["momentum_warm_start"])
    halt = _take(data, "halt_on_divergence", bool, errors, CONFIG_DEFAULTS["halt_on_divergence"])
    phi_tol = _take(data, "phi_tol", float, errors, CONFIG_DEFAULTS["phi_tol"])
    if phi_tol is not None and phi_tol <= 0:
        errors.append(f"phi_tol: must be positive, got {phi_tol}")

    for key in data:
        errors.append(f"{key}: unknown key")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        algorithm=algorithm, problem=problem, N=N, p=p, T=T, seeds=seeds,
        schedule=schedule, constants=constants, explicit=explicit,
        tau=tau, ns_iters=ns_iters, ns_mode=ns_mode, zero_momentum_policy=policy,
        noise=noise, out=out, parallel_clients=parallel, momentum_warm_start=warm,
        halt_on_divergence=halt, phi_tol=phi_tol,
    )


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical JSON for a validated config; parse_config inverts it."""
    d: dict = {
        "algorithm": config.algorithm,
        "N": config.N, "p": config.p, "T": config.T,
        "seeds": list(config.seeds),
        "constants": list(config.constants),
        "tau": config.tau, "ns_iters": config.ns_iters, "ns_mode": config.ns_mode,
        "zero_momentum_policy": config.zero_momentum_policy,
        "noise": {
            "family": config.noise.family, "s": config.noise.s,
            "sigma": config.noise.sigma, "tail_exponent": config.noise.tail_exponent,
        },
        "out": config.out,
        "parallel_clients": config.parallel_clients,
        "momentum_warm_start": config.momentum_warm_start,
        "halt_on_divergence": config.halt_on_divergence,
        "phi_tol": config.phi_tol,
    }
    prob = dataclasses.asdict(config.problem)
    prob["kind"] = "saddle" if isinstance(config.problem, SaddleSpec) else "auc"
    if prob.get("ratios") is not None:
        prob["ratios"] = list(prob["ratios"])
    else:
        prob.pop("ratios", None)
    d["problem"] = prob
    if config.schedule is not None:
        d["schedule"] = config.schedule
    else:
        d.update(config.explicit)
    return json.dumps(d, indent=2, sort_keys=True)


def build_problem(config: ExperimentConfig):
    spec = config.problem
    if isinstance(spec, SaddleSpec):
        return make_saddle_problem(
            n_clients=config.N, d_x=spec.d_x, d_y=spec.d_y, mu=spec.mu,
            amp=spec.amp, hetero=spec.hetero, seed=spec.seed)
    ratios = list(spec.ratios) if spec.ratios is not None else [spec.ratio] * config.N
    if len(ratios) != config.N:
        raise ConfigError([f"problem.ratios has {len(ratios)} entries for N={config.N} clients"])
    shards = gen_imbalanced_data(
        spec.n_per_client, ratios, spec.dim, spec.separation,
        seed=spec.seed, spread=spec.spread)
    test = gen_imbalanced_data(
        spec.test_size, [float(np.mean(ratios))], spec.dim, spec.separation,
        seed=spec.seed + 1, spread=spec.spread)[0]
    return make_auc_problem(
        shards, spec.dim, batch_size=spec.batch_size,
        pooled_ratio=spec.pooled_ratio, test_data=test)


def resolve_hyperparams(config: ExperimentConfig, problem) -> HyperParams:
    """Materialize HyperParams, applying the schedule when one is selected.

    The baselines keep their own conventional momentum (0.9) under a
    schedule; the scheduled beta targets the normalized/orthonormalized
    methods.
    """
    extras = dict(tau=config.tau, ns_iters=config.ns_iters, ns_mode=config.ns_mode,
                  zero_momentum_policy=config.zero_momentum_policy)
    if config.schedule is None:
        return HyperParams(N=config.N, p=config.p, T=config.T, **config.explicit, **extras)
    fn = theorem1_schedule if config.schedule == "theorem1" else theorem2_schedule
    hp = fn(config.N, config.p, config.T, problem.smooth, config.constants, **extras)
    if config.algorithm in ("local-sgda-m", "sgda-clip"):
        hp = dataclasses.replace(hp, beta_x=BASELINE_BETA, beta_y=BASELINE_BETA)
    return hp


def _outdir(config: ExperimentConfig, cli_out: Optional[str]) -> str:
    out = cli_out or config.out or os.environ.get(ENV_OUTDIR) or "."
    os.makedirs(out, exist_ok=True)
    return out


def trace_filename(algorithm: str, seed: int) -> str:
    return f"trace_{algorithm}_seed{seed}.csv"


def cmd_run(config: ExperimentConfig, out: Optional[str] = None,
            seed_override: Optional[int] = None, parallel: Optional[bool] = None) -> int:
    """Run one experiment per seed, write trace CSVs, verify invariants."""
    out_dir = _outdir(config, out)
    problem = build_problem(config)
    hp = resolve_hyperparams(config, problem)
    seeds = (seed_override,) if seed_override is not None else config.seeds
    use_parallel = config.parallel_clients if parallel is None else parallel
    status = 0
    for seed in seeds:
        try:
            trace = run(
                config.algorithm, problem, hp, noise=config.noise, seed=seed,
                parallel=use_parallel, momentum_warm_start=config.momentum_warm_start,
                halt_on_divergence=config.halt_on_divergence, phi_tol=config.phi_tol)
        except InternalInvariantViolation as exc:
            print(f"seed {seed}: invariant violation during run: {exc}", file=sys.stderr)
            return 2
        path = os.path.join(out_dir, trace_filename(config.algorithm, seed))
        trace_to_csv(trace, path)
        report = verify_invariants(trace, hp)
        summary = trace.summary()
        print(f"seed {seed}: wrote {path}  "
              f"grad_phi first={summary['first_window_grad_phi']:.4g} "
              f"final={summary['final_window_grad_phi']:.4g} "
              f"diverged={summary['diverged']} invariants={'ok' if report.passed else 'FAIL'}")
        if not report.passed:
            print(report.summary(), file=sys.stderr)
            status = 2
    return status


SWEEP_HEADER = "algorithm,p,T,N,s,seed,first_window_grad_phi,final_window_grad_phi,final_auc,diverged"


def _apply_axis(config: ExperimentConfig, axis: str, value):
    if axis == "algorithm":
        return dataclasses.replace(config, algorithm=value)
    if axis in ("p", "T", "N"):
        return dataclasses.replace(config, **{axis: int(value)})
    if axis == "s":
        noise = dataclasses.replace(config.noise, s=float(value), tail_exponent=None)
        return dataclasses.replace(config, noise=noise)
    if axis == "seed":
        return dataclasses.replace(config, seeds=(int(value),))
    raise ConfigError([f"axes: unknown axis {axis!r}; choose from {SWEEP_AXES}"])


def cmd_sweep(config: ExperimentConfig, axes: dict, out: Optional[str] = None) -> int:
    """Run the cartesian grid and write one summary row per cell."""
    if not isinstance(axes, dict) or not axes:
        raise ConfigError(["axes: need a nonempty JSON object"])
    for axis, values in axes.items():
        if axis not in SWEEP_AXES:
            raise ConfigError([f"axes: unknown axis {axis!r}; choose from {SWEEP_AXES}"])
        if not isinstance(values, list) or not values:
            raise ConfigError([f"axes.{axis}: need a nonempty list of values"])
    if "seed" not in axes:
        axes = dict(axes, seed=list(config.seeds))
    out_dir = _outdir(config, out)
    names = list(axes)
    rows = []
    for combo in itertools.product(*(axes[a] for a in names)):
        cell = config
        for axis, value in zip(names, combo):
            cell = _apply_axis(cell, axis, value)
        problem = build_problem(cell)
        hp = resolve_hyperparams(cell, problem)
        seed = cell.seeds[0]
        trace = run(cell.algorithm, problem, hp, noise=cell.noise, seed=seed,
                    parallel=cell.parallel_clients,
                    momentum_warm_start=cell.momentum_warm_start,
                    halt_on_divergence=cell.halt_on_divergence, phi_tol=cell.phi_tol)
        s = trace.summary()
        rows.append(",".join([
            cell.algorithm, str(hp.p), str(hp.T), str(hp.N),
            format(cell.noise.s, ".17g"), str(seed),
            format(s["first_window_grad_phi"], ".17g"),
            format(s["final_window_grad_phi"], ".17g"),
            "" if s["final_auc"] is None else format(s["final_auc"], ".17g"),
            "1" if s["diverged"] else "0",
        ]))
    path = os.path.join(out_dir, "sweep_summary.csv")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join([SWEEP_HEADER] + rows) + "\n")
    print(f"wrote {path} ({len(rows)} cells)")
    return 0


def cmd_verify(trace_path: str, config: ExperimentConfig) -> int:
    """Re-check the recorded invariants of a trace CSV against the config's bounds.

    Prints the human-readable report followed by a machine-readable CSV
    block (invariant,rounds_checked,max_violation,slack,passed).
    """
    trace = trace_from_csv(trace_path)
    problem = build_problem(config)
    hp = resolve_hyperparams(config, problem)
    report = verify_invariants(trace, hp)
    print(report.summary())
    print(f"result: {'all invariants pass' if report.passed else 'INVARIANT VIOLATION'}")
    print("invariant,rounds_checked,max_violation,slack,passed")
    for name, rounds, violation, slack, passed in report.rows():
        print(f"{name},{rounds},{format(violation, '.17g')},{format(slack, '.17g')},{int(passed)}")
    return 0 if report.passed else 2


def _load_config_arg(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _load_axes_arg(spec: str) -> dict:
    if spec.startswith("@"):
        with open(spec[1:]) as fh:
            spec = fh.read()
    try:
        axes = json.loads(spec)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"axes: not valid JSON: {exc}"]) from None
    return axes


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fedminimax", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment per seed and write trace CSVs")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--parallel", action="store_true", default=None,
                       help="run clients in a thread pool (same results, possibly faster)")

    p_sweep = sub.add_parser("sweep", help="run a grid over {algorithm,p,T,N,s,seed}")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axes", required=True, help="JSON object or @file")
    p_sweep.add_argument("--out", required=True)

    p_verify = sub.add_parser("verify", help="check invariants of a trace CSV")
    p_verify.add_argument("--trace", required=True)
    p_verify.add_argument("--config", required=True)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    try:
        if args.command == "run":
            config = _load_config_arg(args.config)
            return cmd_run(config, out=args.out, seed_override=args.seed, parallel=args.parallel)
        if args.command == "sweep":
            config = _load_config_arg(args.config)
            return cmd_sweep(config, _load_axes_arg(args.axes), out=args.out)
        if args.command == "verify":
            config = _load_config_arg(args.config)
            return cmd_verify(args.trace, config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ValueError as exc:  # malformed trace CSV, bad problem parameters
        print(exc, file=sys.stderr)
        return 1
    except InternalInvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
