"""Training protocols for the cloning experiment: problem assembly, the
layer sweep behind the fidelity-vs-layers figure, and the per-iteration
fidelity curve behind the fidelity-vs-iteration figure.

One batched simulator pass per iteration supplies the loss, its gradient and
the linearized system, so Gauss-Newton stage-1 and gradient stage-2 cost the
same per epoch. Baselines reuse the identical initial parameters seed by seed
and get the same total epoch budget (stage-1 + stage-2) so comparisons are
paired and epoch-fair.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import count
from typing import Iterable, Sequence

import numpy as np

from .ansatz import InitScheme, init_params, shift_plan
from .cloning import (
    CloningSetup,
    FidelityReport,
    average_fidelity,
    clone_fidelity_batch,
    loss_values,
    with_layers,
)
from .losses import LinearizedSystem, ridge_solve
from .optimizer import (
    ConvergenceReport,
    LossHandle,
    ProblemHandle,
    TwoStageConfig,
    run_two_stage,
)
from .util import derive_seed

BASELINES = ("two_stage", "random_init_nonconvex", "convex_only")


class _CloningEvaluator:
    """Caches the evaluation circuit and shift plan for one setup; every call
    is one batched pass returning base fidelities plus the Z-jacobian."""

    def __init__(self, setup: CloningSetup, shot_seed: int = 0):
        self.setup = setup
        self.dim = setup.dim
        self.circuit = setup.evaluation_circuit()
        self.offsets, self.slots, self.coeffs = shift_plan(self.circuit, self.dim)
        self.shot_seed = shot_seed
        self._calls = count()

    def fidelities(self, rows: np.ndarray) -> np.ndarray:
        return clone_fidelity_batch(rows, self.setup, seed=self.shot_seed, tag=next(self._calls))

    def linearize(self, theta: np.ndarray):
        """(fidelity matrix (4,2), Phi (8,dim), b (8,)) around ``theta``."""
        rows = np.vstack([theta[None, :], theta[None, :] + self.offsets])
        fid = self.fidelities(rows)
        base = fid[0]
        shifted = fid[1:].reshape(-1, 8)
        jac_f = np.zeros((self.dim, 8))
        np.add.at(jac_f, self.slots, self.coeffs[:, None] * shifted)
        b = 1.0 - (2.0 * base.reshape(8) - 1.0)  # = 2 (1 - F)
        phi = 2.0 * jac_f.T
        return base, phi, b


def make_cloning_problem(
    setup: CloningSetup,
    cfg: TwoStageConfig,
    init_sigma: float = 0.1,
    shot_seed: int = 0,
) -> ProblemHandle:
    """Both stage objectives of the cloning task as optimizer handles.

    Stage 1 minimizes the surrogate L_cx through the ridge-damped
    linearization; stage 2 descends the fidelity loss L_nc. Both derive from
    the same batched evaluation, with grad L_cx = -(1/2) Phi^T b and
    grad L_nc = -(1/8) Phi^T b.
    """
    scheme = InitScheme("random_normal", sigma=init_sigma)
    stage1_eval = _CloningEvaluator(setup, derive_seed(shot_seed, 1))
    stage2_eval = _CloningEvaluator(setup, derive_seed(shot_seed, 2))

    def stage1_vg(theta):
        _, phi, b = stage1_eval.linearize(theta)
        return 0.25 * float(b @ b), -0.5 * (phi.T @ b)

    def stage1_gn(theta):
        _, phi, b = stage1_eval.linearize(theta)
        system = LinearizedSystem(phi, b, b, theta)
        return 0.25 * float(b @ b), -0.5 * (phi.T @ b), ridge_solve(system, cfg.ridge_lambda)

    def stage1_value(theta):
        fid = stage1_eval.fidelities(theta[None, :])[0]
        return loss_values(fid)[1]

    def stage2_vg(theta):
        _, phi, b = stage2_eval.linearize(theta)
        return float(b @ b) / 16.0, -(phi.T @ b) / 8.0

    def stage2_value(theta):
        fid = stage2_eval.fidelities(theta[None, :])[0]
        return loss_values(fid)[0]

    stage1 = LossHandle(
        value=stage1_value,
        gradient=lambda t: stage1_vg(t)[1],
        value_and_grad=stage1_vg,
        gn_update=stage1_gn,
    )
    stage2 = LossHandle(
        value=stage2_value,
        gradient=lambda t: stage2_vg(t)[1],
        value_and_grad=stage2_vg,
    )
    return ProblemHandle(
        name=f"cloning-{setup.ansatz.n_qubits}q-{setup.ansatz.n_layers}L",
        dim=setup.dim,
        init=lambda seed: init_params(scheme, setup.dim, seed),
        stage1=stage1,
        stage2=stage2,
    )


def _baseline_run_plan(cfg: TwoStageConfig, baseline: str):
    """Stage switches and budget for one baseline, total epochs held equal."""
    total = cfg.max_epochs_stage1 + cfg.max_epochs_stage2
    if baseline == "two_stage":
        return cfg, True, True
    if baseline == "random_init_nonconvex":
        return replace(cfg, max_epochs_stage2=total), False, True
    if baseline == "convex_only":
        return replace(cfg, max_epochs_stage1=total), True, False
    raise ValueError(f"unknown baseline {baseline!r}")


@dataclass(frozen=True)
class SweepRun:
    """One trained configuration of the layer sweep."""

    layers: int
    seed: int
    baseline: str
    report: FidelityReport
    convergence: ConvergenceReport


def run_cloning_baseline(
    setup: CloningSetup,
    cfg: TwoStageConfig,
    baseline: str,
    seed: int,
    init_sigma: float = 0.1,
    record_params: bool = False,
):
    """Train one (setup, baseline, seed) cell and report its fidelities."""
    shot_seed = derive_seed(cfg.seed, setup.ansatz.n_layers, seed, BASELINES.index(baseline))
    problem = make_cloning_problem(setup, cfg, init_sigma, shot_seed)
    run_cfg, use_s1, use_s2 = _baseline_run_plan(cfg, baseline)
    theta, convergence, trace = run_two_stage(
        problem,
        replace(run_cfg, seed=seed),
        include_stage1=use_s1,
        include_stage2=use_s2,
        record_params=record_params,
    )
    report = average_fidelity(
        theta, setup, seed=derive_seed(shot_seed, 3), baseline=baseline
    )
    report = replace(report, seed=seed)
    return theta, report, convergence, trace


def layer_sweep(
    setup: CloningSetup,
    layer_list: Sequence[int],
    cfg: TwoStageConfig,
    baselines: Iterable[str] = BASELINES,
    seeds: Sequence[int] | None = None,
    init_sigma: float = 0.1,
) -> list[FidelityReport]:
    """Fidelity reports over (layer count, baseline, seed), seeds paired."""
    return [run.report for run in layer_sweep_detailed(setup, layer_list, cfg, baselines, seeds, init_sigma)]


def layer_sweep_detailed(
    setup: CloningSetup,
    layer_list: Sequence[int],
    cfg: TwoStageConfig,
    baselines: Iterable[str] = BASELINES,
    seeds: Sequence[int] | None = None,
    init_sigma: float = 0.1,
) -> list[SweepRun]:
    if not layer_list:
        raise ValueError("layer_list must be non-empty")
    baselines = tuple(baselines)
    for b in baselines:
        if b not in BASELINES:
            raise ValueError(f"unknown baseline {b!r}")
    if seeds is None:
        seeds = list(range(10))
    jobs = [
        (int(layer), int(seed), baseline)
        for layer in layer_list
        for seed in seeds
        for baseline in baselines
    ]
    results = [_run_sweep_job(setup, cfg, init_sigma, job) for job in jobs]
    return results


def _run_sweep_job(setup, cfg, init_sigma, job):
    layer, seed, baseline = job
    lsetup = with_layers(setup, layer)
    _, report, convergence, _ = run_cloning_baseline(
        lsetup, cfg, baseline, seed, init_sigma
    )
    return SweepRun(layers=layer, seed=seed, baseline=baseline, report=report, convergence=convergence)


@dataclass(frozen=True)
class FidelityCurve:
    """Average fidelity evaluated at every recorded training iterate."""

    iterations: np.ndarray
    stages: np.ndarray
    fidelities: np.ndarray
    switch_index: int
    seed: int
    baseline: str
    report: FidelityReport
    convergence: ConvergenceReport


def iteration_curve(
    setup: CloningSetup,
    cfg: TwoStageConfig,
    seed: int = 0,
    baseline: str = "two_stage",
    init_sigma: float = 0.1,
) -> FidelityCurve:
    """The fidelity-vs-iteration series, including the stage-switch index."""
    theta, report, convergence, trace = run_cloning_baseline(
        setup, cfg, baseline, seed, init_sigma, record_params=True
    )
    snapshots = [r.params_after for r in trace.records]
    stages = np.array([r.stage for r in trace.records], dtype=int)
    if snapshots:
        fid = clone_fidelity_batch(
            np.stack(snapshots), setup, seed=derive_seed(cfg.seed, seed, 4)
        )
        fidelities = fid.mean(axis=(1, 2))
    else:
        fidelities = np.array([report.average_fidelity])
        stages = np.array([2 if baseline == "random_init_nonconvex" else 1])
    return FidelityCurve(
        iterations=np.arange(len(fidelities)),
        stages=stages,
        fidelities=fidelities,
        switch_index=int(convergence.stage1_iters),
        seed=seed,
        baseline=baseline,
        report=report,
        convergence=convergence,
    )
