"""Round-exact federated minimax engine.

One communication round: every client starts from the server iterates,
performs ``p`` local steps, and returns (a) its final iterates, (b) the
average of the stochastic gradients it used, which becomes its control
variate for the next round.  The server averages the control variates,
moves the global iterates by the normalized average client displacement,
and refreshes the global momentum.

Four local update rules share this skeleton:

* ``nsgda-m``      - momentum with control-variate correction, then a
                     fixed-length step along the normalized momentum.
* ``muon-da``      - same momentum, but the step direction is the polar
                     factor (orthonormalization) of the momentum matrix;
                     vectors are treated as single-column matrices, for
                     which the update coincides with nsgda-m.
* ``sgda-clip``    - same momentum, step clipped to length eta * tau.
* ``local-sgda-m`` - unnormalized baseline: locally recursive momentum,
                     no control variates, raw momentum step.  Under
                     heavy-tailed noise a single extreme gradient can
                     dominate the update, so divergence is possible and
                     is recorded rather than raised.

The local momentum mixes each fresh stochastic gradient with the
*previous round's global* momentum (held constant across the round's
local steps); it is not recursive over local steps.  A locally recursive
variant exists behind ``recursive_local_momentum`` for ablation only.

Within a round, clients are independent given the immutable round-start
server state and may run in parallel; noise streams are keyed by
(seed, client, round, step), so results are identical under any
schedule.  Aggregation always sums in client-index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ALGORITHMS, HyperParams, NoiseModel
from .linalg import newton_schulz_polar, svd_polar
from .metrics import phi_value_and_grad
from .noise import derive_stream
from .problems import MinimaxProblem, with_gradient_noise

ZERO_MOMENTUM_TOL = 1e-15

CSV_HEADER = (
    "round,algo,seed,grad_phi_norm,f_value,grad_err_x,grad_err_y,"
    "max_drift_x,max_drift_y,server_step_x,server_step_y,potential,auc"
)


class ProtocolError(RuntimeError):
    """Client results do not match the round contract."""


class DegenerateMomentumError(RuntimeError):
    """Normalized update requested for a (numerically) zero momentum."""


class InternalInvariantViolation(RuntimeError):
    """A by-construction bound was breached: an implementation bug."""


@dataclass
class ServerState:
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray  # global momentum, primal
    v: np.ndarray  # global momentum, dual
    g_x: np.ndarray  # global control variate, primal
    g_y: np.ndarray
    round: int = 0


@dataclass
class ClientState:
    """Per-client material that survives between rounds."""

    g_prev_x: np.ndarray  # this client's control variate from the previous round
    g_prev_y: np.ndarray


@dataclass
class ClientRoundResult:
    x_final: np.ndarray
    y_final: np.ndarray
    g_x: np.ndarray  # average of the round's stochastic primal gradients
    g_y: np.ndarray
    drift_x: list  # ||x_local - x_t|| after each local step
    drift_y: list


@dataclass
class RoundRecord:
    t: int
    grad_phi_norm: float
    f_value: float
    grad_err_x: float
    grad_err_y: float
    max_drift_x: float
    max_drift_y: float
    server_step_x: float
    server_step_y: float
    potential: float
    auc: Optional[float] = None
    diverged: bool = False
    # in-memory extras, not part of the CSV schema
    bounds_ok: Optional[bool] = None  # this round's drift/step/centering checks
    centering_x: Optional[float] = None
    centering_y: Optional[float] = None
    g_prev_norm_x: Optional[float] = None
    g_prev_norm_y: Optional[float] = None
    dist_x0: Optional[float] = None
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None


@dataclass
class RunTrace:
    algorithm: str
    seed: int
    records: list
    cols_x: int = 1  # column count of the primal block viewed as a matrix
    cols_y: int = 1
    final_state: Optional[ServerState] = None

    @property
    def diverged(self) -> bool:
        return any(r.diverged for r in self.records)

    def summary(self, window_frac: float = 0.1) -> dict:
        """First/last-window means of the envelope gradient norm plus final AUC.

        Window means skip non-finite entries (diverged rounds) and come
        back nan when a window holds none.
        """
        w = max(1, int(len(self.records) * window_frac))
        norms = [r.grad_phi_norm for r in self.records]

        def window_mean(vals):
            vals = [v for v in vals if np.isfinite(v)]
            return float(np.mean(vals)) if vals else float("nan")

        aucs = [r.auc for r in self.records if r.auc is not None]
        return {
            "first_window_grad_phi": window_mean(norms[:w]),
            "final_window_grad_phi": window_mean(norms[-w:]),
            "final_auc": aucs[-1] if aucs else None,
            "diverged": self.diverged,
        }


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trace_to_csv(trace: RunTrace, path) -> None:
    """Write the trace in the stable 13-column schema (17 significant digits)."""
    lines = [CSV_HEADER]
    for r in trace.records:
        lines.append(",".join([
            str(r.t), trace.algorithm, str(trace.seed),
            _fmt(r.grad_phi_norm), _fmt(r.f_value),
            _fmt(r.grad_err_x), _fmt(r.grad_err_y),
            _fmt(r.max_drift_x), _fmt(r.max_drift_y),
            _fmt(r.server_step_x), _fmt(r.server_step_y),
            _fmt(r.potential),
            "" if r.auc is None else _fmt(r.auc),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def trace_from_csv(path) -> RunTrace:
    """Rebuild a trace from CSV.

    Memory-only fields (centering residuals, iterate snapshots) are not in
    the schema and come back as None; rows containing non-finite values are
    flagged as diverged.  Column counts default to 1 (vector runs), so
    matrix-shaped traces should be verified in memory.
    """
    with open(path, newline="") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != CSV_HEADER:
        raise ValueError(f"{path}: row 1: expected header {CSV_HEADER!r}")
    records = []
    algo, seed = "", 0
    for idx, line in enumerate(raw[1:], start=2):
        parts = line.split(",")
        if len(parts) != 13:
            raise ValueError(f"{path}: row {idx}: expected 13 fields, got {len(parts)}")
        try:
            t = int(parts[0])
            algo, seed = parts[1], int(parts[2])
            nums = [float(v) for v in parts[3:12]]
            auc = None if parts[12] == "" else float(parts[12])
        except ValueError as exc:
            raise ValueError(f"{path}: row {idx}: {exc}") from None
        records.append(RoundRecord(
            t, *nums, auc=auc,
            diverged=not np.all(np.isfinite(nums)),
        ))
    return RunTrace(algorithm=algo, seed=seed, records=records)


# ---------------------------------------------------------------------------
# step rules


def local_momentum(grad_sample, g_global_prev, g_local_prev, u_global_prev, beta: float):
    """beta * (grad + g_global_prev - g_local_prev) + (1 - beta) * u_global_prev."""
    g = np.asarray(grad_sample, dtype=float)
    if not (g.shape == np.shape(g_global_prev) == np.shape(g_local_prev) == np.shape(u_global_prev)):
        raise ValueError("momentum inputs must share one shape")
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    return beta * (g + g_global_prev - g_local_prev) + (1.0 - beta) * u_global_prev


def _sign(direction: str) -> float:
    if direction == "descend":
        return -1.0
    if direction == "ascend":
        return 1.0
    raise ValueError(f"direction must be 'descend' or 'ascend', got {direction!r}")


def normalized_step(z, m, eta: float, direction: str, policy: str = "skip"):
    """Fixed-length step: z -+ eta * m / ||m||; degenerate m handled per policy."""
    if not (eta > 0):
        raise ValueError(f"eta must be positive, got {eta}")
    sign = _sign(direction)
    nrm = np.linalg.norm(m)
    if nrm <= ZERO_MOMENTUM_TOL:
        if policy == "error":
            raise DegenerateMomentumError("momentum norm below tolerance")
        return z
    return z + (sign * eta / nrm) * m


def muon_step(Z, M, eta: float, direction: str, ns_iters: int = 10,
              ns_mode: str = "iterative", policy: str = "skip"):
    """Orthonormalized step: Z -+ eta * polar(M); vectors act as d-by-1 matrices."""
    if not (eta > 0):
        raise ValueError(f"eta must be positive, got {eta}")
    sign = _sign(direction)
    M = np.asarray(M, dtype=float)
    if np.linalg.norm(M) <= ZERO_MOMENTUM_TOL:
        if policy == "error":
            raise DegenerateMomentumError("momentum norm below tolerance")
        return Z
    Mm = M if M.ndim == 2 else M[:, None]
    if ns_mode == "exact-svd":
        O = svd_polar(Mm)
    else:
        O = newton_schulz_polar(Mm, ns_iters)
    return Z + sign * eta * O.reshape(np.shape(Z))


def clip_step(z, m, eta: float, tau: float, direction: str):
    """Clipped step: z -+ eta * min(1, tau/||m||) * m.  Zero momentum moves nothing."""
    if not (eta > 0) or not (tau > 0):
        raise ValueError(f"eta and tau must be positive, got eta={eta} tau={tau}")
    sign = _sign(direction)
    nrm = np.linalg.norm(m)
    scale = 1.0 if nrm <= tau else tau / nrm
    return z + sign * eta * scale * np.asarray(m, dtype=float)


# ---------------------------------------------------------------------------
# one round


def _drift_cap(hp: HyperParams, eta: float, cols: int, algorithm: str) -> float:
    if algorithm == "sgda-clip":
        return eta * hp.p * hp.tau
    if algorithm == "muon-da":  # polar factor has Frobenius norm sqrt(rank) <= sqrt(cols)
        return eta * hp.p * np.sqrt(cols)
    return eta * hp.p


def client_round(
    client_id: int,
    server: ServerState,
    state: ClientState,
    problem: MinimaxProblem,
    hp: HyperParams,
    algorithm: str,
    master_seed: int,
    recursive_local_momentum: bool = False,
) -> ClientRoundResult:
    """Run one client's p local steps from the round-start server state.

    The same stochastic gradient drawn at each (client, step) feeds both
    the momentum update and the control-variate average.  Drift bounds are
    asserted at runtime (slack 1e-9) for the bounded algorithms.
    """
    if algorithm == "local-sgda-m":
        # the unnormalized baseline may legitimately overflow under heavy
        # tails; divergence is detected from the aggregated state afterwards
        with np.errstate(over="ignore", invalid="ignore"):
            return _client_steps(client_id, server, state, problem, hp,
                                 algorithm, master_seed, recursive_local_momentum)
    return _client_steps(client_id, server, state, problem, hp,
                         algorithm, master_seed, recursive_local_momentum)


def _client_steps(client_id, server, state, problem, hp, algorithm, master_seed,
                  recursive_local_momentum):
    x = server.x.copy()
    y = server.y.copy()
    sum_gx = np.zeros_like(x)
    sum_gy = np.zeros_like(y)
    drift_x, drift_y = [], []
    u_run = server.u.copy()
    v_run = server.v.copy()
    for i in range(hp.p):
        rng = derive_stream(master_seed, client_id, server.round, i)
        gx, gy = problem.stoch_grad(client_id, x, y, rng)
        sum_gx += gx
        sum_gy += gy
        if algorithm == "local-sgda-m":
            u_run = hp.beta_x * gx + (1.0 - hp.beta_x) * u_run
            v_run = hp.beta_y * gy + (1.0 - hp.beta_y) * v_run
            x = x - hp.eta_x * u_run
            y = y + hp.eta_y * v_run
        else:
            if recursive_local_momentum:  # ablation only: chain the client's own buffer
                u_prev, v_prev = u_run, v_run
            else:
                u_prev, v_prev = server.u, server.v
            u = local_momentum(gx, server.g_x, state.g_prev_x, u_prev, hp.beta_x)
            v = local_momentum(gy, server.g_y, state.g_prev_y, v_prev, hp.beta_y)
            if recursive_local_momentum:
                u_run, v_run = u, v
            if algorithm == "nsgda-m":
                x = normalized_step(x, u, hp.eta_x, "descend", hp.zero_momentum_policy)
                y = normalized_step(y, v, hp.eta_y, "ascend", hp.zero_momentum_policy)
            elif algorithm == "muon-da":
                x = muon_step(x, u, hp.eta_x, "descend", hp.ns_iters, hp.ns_mode,
                              hp.zero_momentum_policy)
                y = muon_step(y, v, hp.eta_y, "ascend", hp.ns_iters, hp.ns_mode,
                              hp.zero_momentum_policy)
            elif algorithm == "sgda-clip":
                x = clip_step(x, u, hp.eta_x, hp.tau, "descend")
                y = clip_step(y, v, hp.eta_y, hp.tau, "ascend")
            else:
                raise ValueError(f"unknown algorithm {algorithm!r}")
        drift_x.append(float(np.linalg.norm(x - server.x)))
        drift_y.append(float(np.linalg.norm(y - server.y)))
    if algorithm in ("nsgda-m", "muon-da", "sgda-clip"):
        cap_x = _drift_cap(hp, hp.eta_x, problem.shape_x.cols, algorithm) + 1e-9
        cap_y = _drift_cap(hp, hp.eta_y, problem.shape_y.cols, algorithm) + 1e-9
        if max(drift_x) > cap_x or max(drift_y) > cap_y:
            raise InternalInvariantViolation(
                f"client {client_id} drift exceeded its bound at round {server.round}")
    return ClientRoundResult(x, y, sum_gx / hp.p, sum_gy / hp.p, drift_x, drift_y)


def server_round(server: ServerState, client_results: list, hp: HyperParams) -> ServerState:
    """Aggregate exactly N client results into the next server state."""
    if len(client_results) != hp.N:
        raise ProtocolError(f"expected {hp.N} client results, got {len(client_results)}")
    g_x = np.sum([r.g_x for r in client_results], axis=0) / hp.N
    g_y = np.sum([r.g_y for r in client_results], axis=0) / hp.N
    disp_x = np.sum([r.x_final - server.x for r in client_results], axis=0)
    disp_y = np.sum([r.y_final - server.y for r in client_results], axis=0)
    x_new = server.x + (hp.gamma_x / (hp.eta_x * hp.N * hp.p)) * disp_x
    y_new = server.y + (hp.gamma_y / (hp.eta_y * hp.N * hp.p)) * disp_y
    u_new = hp.beta_x * g_x + (1.0 - hp.beta_x) * server.u
    v_new = hp.beta_y * g_y + (1.0 - hp.beta_y) * server.v
    return ServerState(x_new, y_new, u_new, v_new, g_x, g_y, server.round + 1)


# ---------------------------------------------------------------------------
# full run


def _all_finite(server: ServerState) -> bool:
    return all(
        np.all(np.isfinite(a))
        for a in (server.x, server.y, server.u, server.v, server.g_x, server.g_y)
    )


def _nan_record(t: int) -> RoundRecord:
    nan = float("nan")
    return RoundRecord(t, nan, nan, nan, nan, nan, nan, nan, nan, nan,
                       auc=None, diverged=True)


def run(
    algorithm: str,
    problem: MinimaxProblem,
    hp: HyperParams,
    noise: Optional[NoiseModel] = None,
    seed: int = 0,
    parallel: bool = False,
    momentum_warm_start: bool = False,
    halt_on_divergence: bool = False,
    x0=None,
    y0=None,
    phi_tol: float = 1e-8,
) -> RunTrace:
    """Execute T communication rounds and return the per-round trace.

    Metrics in record t describe the round-start iterates (x_t, y_t) plus
    the momentum/control variates produced by round t itself, matching the
    quantities the convergence analysis tracks.  Given an identical
    (config, seed) pair the trace is bit-deterministic, with or without
    client-level parallelism.

    Control variates and global momentum start at zero, so the very first
    local momentum is beta * gradient; pass ``momentum_warm_start`` to
    start the global momentum at the full deterministic gradient instead.
    For the unnormalized baseline a non-finite iterate marks the trace as
    diverged from that round on (the remaining records are flagged, or the
    loop stops when ``halt_on_divergence`` is set); for the bounded
    algorithms the same event raises InternalInvariantViolation because
    their updates cannot produce it.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if hp.N != problem.n_clients:
        raise ValueError(f"hp.N={hp.N} does not match problem.n_clients={problem.n_clients}")
    if noise is not None:
        problem = with_gradient_noise(problem, noise)

    x = np.zeros(problem.shape_x.dims) if x0 is None else np.array(x0, dtype=float)
    y = np.zeros(problem.shape_y.dims) if y0 is None else np.array(y0, dtype=float)
    u0 = problem.mean_grad_x(x, y) if momentum_warm_start else np.zeros_like(x)
    v0 = problem.mean_grad_y(x, y) if momentum_warm_start else np.zeros_like(y)
    server = ServerState(x.copy(), y.copy(), u0, v0, np.zeros_like(x), np.zeros_like(y), 0)
    clients = [ClientState(np.zeros_like(x), np.zeros_like(y)) for _ in range(hp.N)]
    x_start, y_start = x.copy(), y.copy()

    records: list = []
    diverged = False
    pool = ThreadPoolExecutor(max_workers=min(hp.N, 8)) if parallel and hp.N > 1 else None

    def metric_guard():
        if algorithm == "local-sgda-m":  # metrics may overflow near divergence
            return np.errstate(over="ignore", invalid="ignore")
        return np.errstate()

    try:
        for t in range(hp.T):
            if diverged:
                records.append(_nan_record(t))
                continue

            with metric_guard():
                phi, gphi = phi_value_and_grad(problem, server.x, tol=phi_tol)
                f_val = float(problem.f_value(server.x, server.y))
            cen_x = float(np.linalg.norm(
                server.g_x - np.sum([c.g_prev_x for c in clients], axis=0) / hp.N))
            cen_y = float(np.linalg.norm(
                server.g_y - np.sum([c.g_prev_y for c in clients], axis=0) / hp.N))
            auc = float(problem.auc_eval(server.x)) if problem.auc_eval is not None else None

            def one(n):
                return client_round(n, server, clients[n], problem, hp, algorithm, seed)

            if pool is not None:
                results = list(pool.map(one, range(hp.N)))
            else:
                results = [one(n) for n in range(hp.N)]

            new_server = server_round(server, results, hp)
            with metric_guard():
                rec = RoundRecord(
                    t=t,
                    grad_phi_norm=float(np.linalg.norm(gphi)),
                    f_value=f_val,
                    grad_err_x=float(np.linalg.norm(problem.mean_grad_x(server.x, server.y) - new_server.u)),
                    grad_err_y=float(np.linalg.norm(problem.mean_grad_y(server.x, server.y) - new_server.v)),
                    max_drift_x=max(max(r.drift_x) for r in results),
                    max_drift_y=max(max(r.drift_y) for r in results),
                    server_step_x=float(np.linalg.norm(new_server.x - server.x)),
                    server_step_y=float(np.linalg.norm(new_server.y - server.y)),
                    potential=3.0 * phi + (phi - f_val),
                    auc=auc,
                    centering_x=cen_x,
                    centering_y=cen_y,
                    g_prev_norm_x=float(np.linalg.norm(server.g_x)),
                    g_prev_norm_y=float(np.linalg.norm(server.g_y)),
                    dist_x0=float(np.linalg.norm(server.x - x_start)),
                    x=server.x.copy(),
                    y=server.y.copy(),
                )
            if algorithm != "local-sgda-m":
                cap_sx = hp.gamma_x * (hp.tau if algorithm == "sgda-clip" else
                                       np.sqrt(problem.shape_x.cols) if algorithm == "muon-da" else 1.0)
                cap_sy = hp.gamma_y * (hp.tau if algorithm == "sgda-clip" else
                                       np.sqrt(problem.shape_y.cols) if algorithm == "muon-da" else 1.0)
                rec.bounds_ok = bool(
                    rec.max_drift_x <= _drift_cap(hp, hp.eta_x, problem.shape_x.cols, algorithm) + 1e-9
                    and rec.max_drift_y <= _drift_cap(hp, hp.eta_y, problem.shape_y.cols, algorithm) + 1e-9
                    and rec.server_step_x <= cap_sx + 1e-9
                    and rec.server_step_y <= cap_sy + 1e-9
                    and rec.centering_x <= 1e-7 * (1.0 + rec.g_prev_norm_x)
                    and rec.centering_y <= 1e-7 * (1.0 + rec.g_prev_norm_y)
                )
            rec_finite = np.all(np.isfinite([
                rec.grad_phi_norm, rec.f_value, rec.grad_err_x, rec.grad_err_y,
                rec.max_drift_x, rec.max_drift_y, rec.server_step_x,
                rec.server_step_y, rec.potential]))
            if not (_all_finite(new_server) and rec_finite):
                if algorithm != "local-sgda-m":
                    raise InternalInvariantViolation(
                        f"{algorithm} produced a non-finite value at round {t}")
                rec.diverged = True
                diverged = True
            records.append(rec)
            if diverged and halt_on_divergence:
                break
            for c, r in zip(clients, results):
                c.g_prev_x = r.g_x
                c.g_prev_y = r.g_y
            server = new_server
    finally:
        if pool is not None:
            pool.shutdown()

    return RunTrace(
        algorithm=algorithm,
        seed=seed,
        records=records,
        cols_x=problem.shape_x.cols,
        cols_y=problem.shape_y.cols,
        final_state=server,
    )
