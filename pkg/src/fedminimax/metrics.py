"""Convergence metrics and the invariant verifier.

``phi_value_and_grad`` evaluates the primal envelope
phi(x) = max_y f(x, y) and its gradient.  When the problem provides a
closed-form inner maximizer this is exact; otherwise a full-batch
gradient ascent with step 1/L_f is run until the dual gradient norm
drops below ``tol`` (linear convergence under gradient dominance), and
the primal gradient is evaluated at the approximate maximizer.  The
resulting gradient error is bounded by L_f * tol / mu.

``verify_invariants`` replays the per-round guarantees of the federated
engine over a finished trace and reports the worst violation of each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HyperParams


class ConvergenceError(RuntimeError):
    """Inner maximization failed to reach the requested tolerance."""


def ascend_dual(problem, x, tol: float = 1e-8, max_iters: int = 100_000, y0=None, record: bool = False):
    """Full-batch gradient ascent on y at fixed x.

    Returns (y, history) where history lists f(x, y_k) per iteration when
    ``record`` is set (empty list otherwise).  The objective values are
    non-decreasing for step 1/L_f.
    """
    if not (tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    y = np.zeros(problem.shape_y.dims) if y0 is None else np.array(y0, dtype=float)
    step = 1.0 / problem.smooth.L_f
    history = [float(problem.f_value(x, y))] if record else []
    for _ in range(max_iters):
        gy = problem.mean_grad_y(x, y)
        if np.linalg.norm(gy) <= tol:
            return y, history
        y = y + step * gy
        if record:
            history.append(float(problem.f_value(x, y)))
    raise ConvergenceError(
        f"dual ascent did not reach tol={tol} within {max_iters} iterations"
    )


def phi_value_and_grad(problem, x, tol: float = 1e-8):
    """Value and gradient of the primal envelope phi(x) = max_y f(x, y)."""
    if not (tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    if problem.y_star is not None:
        y = problem.y_star(x)
    else:
        y, _ = ascend_dual(problem, x, tol=tol)
    value = float(problem.f_value(x, y))
    if problem.phi_grad is not None:
        grad = problem.phi_grad(x)
    else:
        grad = problem.mean_grad_x(x, y)
    return value, np.asarray(grad, dtype=float)


def auc_score(scores, labels) -> float:
    """Exact pairwise AUC: P(score_pos > score_neg) + 0.5 * P(tie).

    Computed over all positive-negative pairs; requires both classes.
    """
    s = np.asarray(scores, dtype=float)
    b = np.asarray(labels)
    pos = s[b == 1]
    neg = s[b == -1]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc_score needs at least one positive and one negative")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


@dataclass
class InvariantCheck:
    name: str
    rounds_checked: int
    max_violation: float
    slack: float
    passed: bool


@dataclass
class InvariantReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(
                f"{status:4s}  {c.name:24s} rounds={c.rounds_checked:<6d} "
                f"max_violation={c.max_violation:.3e} slack={c.slack:.1e}"
            )
        return "\n".join(lines)

    def rows(self) -> list:
        """Machine-readable rows: (name, rounds_checked, max_violation, slack, passed)."""
        return [
            (c.name, c.rounds_checked, c.max_violation, c.slack, c.passed)
            for c in self.checks
        ]


def _bound_check(name, values, bounds, slack) -> InvariantCheck:
    vals = np.asarray(values, dtype=float)
    bnds = np.broadcast_to(np.asarray(bounds, dtype=float), vals.shape)
    if vals.size == 0:
        return InvariantCheck(name, 0, 0.0, slack, True)
    viol = float(np.max(vals - bnds))
    return InvariantCheck(name, int(vals.size), max(viol, 0.0), slack, viol <= slack)


def verify_invariants(trace, hp: HyperParams) -> InvariantReport:
    """Check the engine's per-round guarantees over a finished trace.

    Covered: client drift bounds, server step bounds, centering of the
    control-variate corrections, finiteness of every recorded value
    (bounded algorithms only), and the cumulative travel bound
    ||x_t - x_0|| <= t * gamma_x.  The base bounds eta*p (drift) and
    gamma (server step) pick up a sqrt(cols) factor for the
    orthonormalized update on matrix blocks, and a tau factor for the
    clipping baseline, whose step length is eta * min(tau, ||m||).  The
    unnormalized baseline has no such bounds; its checks are reported
    with zero rounds.
    """
    slack = 1e-9
    algo = trace.algorithm
    recs = [r for r in trace.records if not r.diverged]
    checks = []

    bounded = algo in ("nsgda-m", "muon-da", "sgda-clip")
    step_cap_x = step_cap_y = 0.0
    if algo == "nsgda-m":
        step_cap_x = step_cap_y = 1.0
    elif algo == "muon-da":
        step_cap_x = np.sqrt(trace.cols_x)
        step_cap_y = np.sqrt(trace.cols_y)
    elif algo == "sgda-clip":
        step_cap_x = step_cap_y = hp.tau

    if bounded:
        checks.append(_bound_check(
            "drift_x", [r.max_drift_x for r in recs], hp.eta_x * hp.p * step_cap_x, slack))
        checks.append(_bound_check(
            "drift_y", [r.max_drift_y for r in recs], hp.eta_y * hp.p * step_cap_y, slack))
        checks.append(_bound_check(
            "server_step_x", [r.server_step_x for r in recs], hp.gamma_x * step_cap_x, slack))
        checks.append(_bound_check(
            "server_step_y", [r.server_step_y for r in recs], hp.gamma_y * step_cap_y, slack))
        steps = np.asarray([r.server_step_x for r in recs], dtype=float)
        travel = np.cumsum(np.concatenate([[0.0], steps[:-1]]))
        tt = np.arange(len(recs), dtype=float)
        checks.append(_bound_check(
            "travel_x", travel, tt * (hp.gamma_x * step_cap_x + slack), slack))
        finite = all(
            np.isfinite([r.grad_phi_norm, r.f_value, r.grad_err_x, r.grad_err_y,
                         r.max_drift_x, r.max_drift_y, r.server_step_x,
                         r.server_step_y, r.potential]).all()
            for r in trace.records
        )
        checks.append(InvariantCheck("finite_records", len(trace.records),
                                     0.0 if finite else float("inf"), 0.0, finite))
    else:
        checks.append(InvariantCheck("drift_x", 0, 0.0, slack, True))
        checks.append(InvariantCheck("drift_y", 0, 0.0, slack, True))

    have_centering = [r for r in recs if r.centering_x is not None]
    if have_centering:
        tol_x = [1e-7 * (1.0 + r.g_prev_norm_x) for r in have_centering]
        tol_y = [1e-7 * (1.0 + r.g_prev_norm_y) for r in have_centering]
        checks.append(_bound_check(
            "centering_x", [r.centering_x for r in have_centering], tol_x, 0.0))
        checks.append(_bound_check(
            "centering_y", [r.centering_y for r in have_centering], tol_y, 0.0))
    else:
        checks.append(InvariantCheck("centering_x", 0, 0.0, 0.0, True))
        checks.append(InvariantCheck("centering_y", 0, 0.0, 0.0, True))

    return InvariantReport(checks)
