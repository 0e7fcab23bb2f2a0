"""The two-stage optimization loop: convex warm start, then plain gradient
descent on the nonconvex objective, with runtime convergence diagnostics.

Stage 1 either gradient-descends a convex loss or takes damped Gauss-Newton
steps from a fresh linearization each iteration; it stops as soon as
||grad||^2 / dim <= tau_g or the epoch budget runs out. Stage 2 is bare
gradient descent down to a small gradient floor. Every iteration is recorded
so the descent inequality L(k+1) <= L(k) - c ||grad L(k)||^2 with
c = eta (1 - eta * Lhat / 2) can be audited after the fact.

This module is deliberately free of simulator imports: problems arrive as
plain callables bundled in handles.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .util import derive_rng, params_digest, write_csv

TRACE_CSV_SCHEMA = "training_trace.v1"


class OptimizationError(RuntimeError):
    """Raised when a run produces non-finite losses (divergent step size)."""


@dataclass
class TwoStageConfig:
    """Knobs of the two-stage loop (stage steps, switch threshold, budgets)."""

    eta_c: float = 0.05
    eta_n: float = 0.01
    tau_g: float = 1e-3
    max_epochs_stage1: int = 100
    max_epochs_stage2: int = 450
    stage1_mode: str = "gradient_descent"  # or "gauss_newton_ridge"
    ridge_lambda: float = 1e-2
    seed: int = 0
    stage2_grad_floor: float = 1e-8
    smoothness_probes: int = 0  # > 1 enables the A4 step-size warning
    smoothness_radius: float = 0.1

    def __post_init__(self):
        if self.eta_c <= 0 or self.eta_n <= 0 or self.tau_g <= 0:
            raise ValueError("eta_c, eta_n and tau_g must be positive")
        if self.max_epochs_stage1 < 1 or self.max_epochs_stage2 < 1:
            raise ValueError("epoch budgets must be >= 1")
        if self.stage1_mode not in ("gradient_descent", "gauss_newton_ridge"):
            raise ValueError(f"unknown stage1_mode {self.stage1_mode!r}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.stage2_grad_floor < 0:
            raise ValueError("stage2_grad_floor must be >= 0")


@dataclass
class LossHandle:
    """A differentiable objective. ``gn_update`` (optional) supplies the
    Gauss-Newton move: theta -> (loss, grad, delta)."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None
    gn_update: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]] | None = None

    def eval_vg(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        if self.value_and_grad is not None:
            return self.value_and_grad(theta)
        return self.value(theta), self.gradient(theta)


@dataclass
class ProblemHandle:
    """Initializer plus the two stage objectives of one training problem."""

    name: str
    dim: int
    init: Callable[[int], np.ndarray]
    stage1: LossHandle
    stage2: LossHandle
    smoothness: float | None = None  # analytic Lipschitz constant when known


@dataclass
class TraceRecord:
    stage: int
    iteration: int
    loss: float
    grad_norm: float
    params_hash: str
    slack: float  # loss(k) - loss(k+1), filled once the next loss is known
    elapsed_ms: float
    params_after: np.ndarray | None = None


@dataclass
class TrainingTrace:
    """Per-iteration records; stage-1 records always precede stage-2 ones."""

    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.stage < self.records[-1].stage:
            raise ValueError("stage-1 records must precede stage-2 records")
        if not np.isfinite(record.loss):
            raise OptimizationError("non-finite loss recorded")
        self.records.append(record)

    def stage_records(self, stage: int) -> list[TraceRecord]:
        return [r for r in self.records if r.stage == stage]

    def extend(self, other: "TrainingTrace") -> None:
        for r in other.records:
            self.append(r)
        self.meta.update(other.meta)

    def to_csv(self, path, include_timing: bool = True) -> None:
        header = ["stage", "iter", "loss", "grad_norm", "slack"]
        if include_timing:
            header.append("elapsed_ms")
        rows = []
        for r in self.records:
            row = [r.stage, r.iteration, r.loss, r.grad_norm, r.slack]
            if include_timing:
                row.append(r.elapsed_ms)
            rows.append(row)
        write_csv(path, TRACE_CSV_SCHEMA, header, rows)


@dataclass
class ConvergenceReport:
    """What happened: how Stage 1 stopped, lemma-audit counters, and the
    stationarity gap ||grad E|| at the returned parameters."""

    stage1_terminated_by: str  # gradient_rule | epoch_budget | skipped
    stage1_iters: int
    stage2_iters: int
    final_gradient_norm: float
    descent_violations: int
    stationarity_gap: float

    def as_dict(self) -> dict:
        return {
            "stage1_terminated_by": self.stage1_terminated_by,
            "stage1_iters": self.stage1_iters,
            "stage2_iters": self.stage2_iters,
            "final_gradient_norm": self.final_gradient_norm,
            "descent_violations": self.descent_violations,
            "stationarity_gap": self.stationarity_gap,
        }


def _check_finite(loss: float, where: str) -> float:
    if not np.isfinite(loss):
        raise OptimizationError(f"non-finite loss in {where}: step size too large?")
    return float(loss)


def _run_stage(
    stage: int,
    theta: np.ndarray,
    handle: LossHandle,
    cfg: TwoStageConfig,
    max_iters: int,
    stop_rule: Callable[[np.ndarray], bool],
    step_fn: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    record_params: bool,
) -> tuple[np.ndarray, TrainingTrace, str]:
    """Shared iteration loop: evaluate, test the stop rule, step, record."""
    trace = TrainingTrace()
    theta = np.array(theta, dtype=float)
    terminated = "epoch_budget"
    prev_grad = prev_theta = None
    max_ratio = 0.0
    last_loss = None
    for k in range(max_iters):
        t0 = time.perf_counter()
        loss, grad, delta = step_fn(theta)
        loss = _check_finite(loss, f"stage {stage}")
        if prev_grad is not None:
            dist = float(np.linalg.norm(theta - prev_theta))
            diff = float(np.linalg.norm(grad - prev_grad))
            if dist > 0 and np.isfinite(dist) and np.isfinite(diff):
                max_ratio = max(max_ratio, diff / dist)
        if trace.records:
            trace.records[-1].slack = trace.records[-1].loss - loss
        last_loss = loss
        if stop_rule(grad):
            terminated = "gradient_rule"
            break
        theta_next = theta + delta
        trace.append(
            TraceRecord(
                stage=stage,
                iteration=k,
                loss=loss,
                grad_norm=float(np.linalg.norm(grad)),
                params_hash=params_digest(theta),
                slack=np.nan,
                elapsed_ms=(time.perf_counter() - t0) * 1e3,
                params_after=theta_next.copy() if record_params else None,
            )
        )
        prev_grad, prev_theta = grad, theta
        theta = theta_next
    if trace.records and np.isnan(trace.records[-1].slack):
        final_loss = _check_finite(handle.value(theta), f"stage {stage} final")
        trace.records[-1].slack = trace.records[-1].loss - final_loss
        last_loss = final_loss
    trace.meta[f"stage{stage}_terminated_by"] = terminated
    trace.meta[f"stage{stage}_smoothness_estimate"] = max_ratio
    trace.meta[f"stage{stage}_final_loss"] = last_loss
    return theta, trace, terminated


def stage1_convex(
    params0: np.ndarray,
    loss: LossHandle,
    cfg: TwoStageConfig,
    record_params: bool = False,
) -> tuple[np.ndarray, TrainingTrace]:
    """Convex warm start. Stops at ||grad||^2 / dim <= tau_g or the budget."""
    dim = len(params0)

    def stop(grad):
        return float(grad @ grad) / dim <= cfg.tau_g

    if cfg.stage1_mode == "gauss_newton_ridge":
        if loss.gn_update is None:
            raise ValueError("gauss_newton_ridge mode needs a handle with gn_update")
        step = loss.gn_update
    else:
        def step(theta):
            val, grad = loss.eval_vg(theta)
            return val, grad, -cfg.eta_c * grad

    theta, trace, _ = _run_stage(
        1, params0, loss, cfg, cfg.max_epochs_stage1, stop, step, record_params
    )
    return theta, trace


def stage2_refine(
    params: np.ndarray,
    loss: LossHandle,
    cfg: TwoStageConfig,
    record_params: bool = False,
) -> tuple[np.ndarray, TrainingTrace]:
    """Plain gradient descent on the refinement objective."""

    def stop(grad):
        return float(np.linalg.norm(grad)) <= cfg.stage2_grad_floor

    def step(theta):
        val, grad = loss.eval_vg(theta)
        return val, grad, -cfg.eta_n * grad

    theta, trace, _ = _run_stage(
        2, params, loss, cfg, cfg.max_epochs_stage2, stop, step, record_params
    )
    return theta, trace


def check_descent_inequality(
    trace: TrainingTrace,
    smoothness_estimate: float,
    step: float,
    stage: int | None = None,
) -> int:
    """Count iterations violating L(k+1) <= L(k) - c ||grad||^2 beyond 1e-9.

    c = step * (1 - step * Lhat / 2). If the step violates A4 (c <= 0) the
    lemma promises nothing, so plain monotone descent is audited instead;
    a divergent run then shows up as violations rather than passing vacuously.
    Fewer than two records in the stage count as zero by convention.
    """
    records = trace.records if stage is None else trace.stage_records(stage)
    if len(records) < 2:
        return 0
    c = step * (1.0 - step * smoothness_estimate / 2.0)
    rate = max(c, 0.0)
    violations = 0
    for r in records:
        if np.isnan(r.slack):
            continue
        if r.slack < rate * r.grad_norm**2 - 1e-9:
            violations += 1
    return violations


def estimate_smoothness(
    loss: LossHandle, params: np.ndarray, probes: int, radius: float, seed: int
) -> float:
    """Max gradient-difference ratio over probe pairs near ``params``; a lower
    bound on the true Lipschitz constant of the gradient."""
    if probes < 2:
        raise ValueError("need at least two probes")
    rng = derive_rng(seed)
    pts = params + radius * rng.uniform(-1.0, 1.0, size=(probes, len(params)))
    grads = [np.asarray(loss.gradient(p)) for p in pts]
    best = 0.0
    for i in range(probes):
        for j in range(i + 1, probes):
            dist = np.linalg.norm(pts[i] - pts[j])
            if dist == 0:
                continue
            best = max(best, float(np.linalg.norm(grads[i] - grads[j]) / dist))
    return best


def run_two_stage(
    problem: ProblemHandle,
    cfg: TwoStageConfig,
    include_stage1: bool = True,
    include_stage2: bool = True,
    record_params: bool = False,
) -> tuple[np.ndarray, ConvergenceReport, TrainingTrace]:
    """init_params -> stage1_convex -> stage2_refine, with a lemma audit.

    Baselines fit in by skipping a stage: random-init refinement skips
    stage 1; the convex-only baseline skips stage 2.
    """
    theta = np.asarray(problem.init(cfg.seed), dtype=float)
    if cfg.smoothness_probes > 1:
        _warn_on_a4_violation(problem, theta, cfg)
    trace = TrainingTrace()
    terminated = "skipped"
    if include_stage1:
        theta, t1 = stage1_convex(theta, problem.stage1, cfg, record_params)
        trace.extend(t1)
        terminated = t1.meta["stage1_terminated_by"]
    if include_stage2:
        theta, t2 = stage2_refine(theta, problem.stage2, cfg, record_params)
        trace.extend(t2)

    # Gauss-Newton steps are not gradient-descent iterations, so the Lemma
    # B.1 audit only applies to stage 1 in gradient_descent mode.
    violations = 0
    if include_stage1 and cfg.stage1_mode == "gradient_descent":
        lhat1 = problem.smoothness or trace.meta.get("stage1_smoothness_estimate", 0.0)
        violations += check_descent_inequality(trace, lhat1, cfg.eta_c, stage=1)
    if include_stage2:
        lhat2 = problem.smoothness or trace.meta.get("stage2_smoothness_estimate", 0.0)
        violations += check_descent_inequality(trace, lhat2, cfg.eta_n, stage=2)

    gap = float(np.linalg.norm(np.asarray(problem.stage2.gradient(theta))))
    if include_stage2:
        final_grad_norm = gap
    elif include_stage1:
        final_grad_norm = float(np.linalg.norm(np.asarray(problem.stage1.gradient(theta))))
    else:
        final_grad_norm = gap
    report = ConvergenceReport(
        stage1_terminated_by=terminated,
        stage1_iters=len(trace.stage_records(1)),
        stage2_iters=len(trace.stage_records(2)),
        final_gradient_norm=final_grad_norm,
        descent_violations=violations,
        stationarity_gap=gap,
    )
    return theta, report, trace


def _warn_on_a4_violation(problem, theta, cfg):
    lhat1 = estimate_smoothness(
        problem.stage1, theta, cfg.smoothness_probes, cfg.smoothness_radius, cfg.seed
    )
    lhat2 = estimate_smoothness(
        problem.stage2, theta, cfg.smoothness_probes, cfg.smoothness_radius, cfg.seed + 1
    )
    if lhat1 > 0 and cfg.eta_c >= 2.0 / lhat1:
        warnings.warn(
            f"eta_c={cfg.eta_c} violates the step bound 2/L ~= {2.0 / lhat1:.3g}",
            stacklevel=3,
        )
    if lhat2 > 0 and cfg.eta_n >= 2.0 / lhat2:
        warnings.warn(
            f"eta_n={cfg.eta_n} violates the step bound 2/L ~= {2.0 / lhat2:.3g}",
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# toy problems for the lemma suite
# ---------------------------------------------------------------------------

def quadratic_problem(dim: int = 2, scale: float = 1.0, start: Sequence[float] | None = None) -> ProblemHandle:
    """L(theta) = scale * ||theta||^2; gradient Lipschitz constant 2*scale."""

    def value(theta):
        return float(scale * theta @ theta)

    def gradient(theta):
        return 2.0 * scale * theta

    def init(seed):
        if start is not None:
            return np.asarray(start, dtype=float)
        return derive_rng(seed, 101).normal(0.0, 1.0, size=dim)

    handle = LossHandle(value=value, gradient=gradient)
    return ProblemHandle(
        name="quadratic", dim=dim, init=init, stage1=handle, stage2=handle,
        smoothness=2.0 * scale,
    )


def logistic_problem(
    n_samples: int = 60, dim: int = 4, ridge: float = 0.05, data_seed: int = 0
) -> ProblemHandle:
    """Ridge-regularized logistic regression on synthetic separable-ish data.

    Strongly convex (ridge > 0) and L-smooth with
    L = lambda_max(X^T X) / (4 m) + 2 * ridge.
    """
    rng = derive_rng(data_seed, 202)
    x = rng.normal(size=(n_samples, dim))
    w_true = rng.normal(size=dim)
    y = np.sign(x @ w_true + 0.1 * rng.normal(size=n_samples))
    y[y == 0] = 1.0

    def value(w):
        z = y * (x @ w)
        return float(np.mean(np.logaddexp(0.0, -z)) + ridge * (w @ w))

    def gradient(w):
        z = y * (x @ w)
        s = 1.0 / (1.0 + np.exp(z))  # sigma(-z)
        return -(x.T @ (y * s)) / n_samples + 2.0 * ridge * w

    def init(seed):
        return derive_rng(seed, 303).normal(0.0, 1.0, size=dim)

    smoothness = float(np.linalg.eigvalsh(x.T @ x)[-1] / (4 * n_samples) + 2 * ridge)
    handle = LossHandle(value=value, gradient=gradient)
    return ProblemHandle(
        name="logistic", dim=dim, init=init, stage1=handle, stage2=handle,
        smoothness=smoothness,
    )
