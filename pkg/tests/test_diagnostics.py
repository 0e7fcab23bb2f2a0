import numpy as np
import pytest

from twostage_vqa.ansatz import InitScheme
from twostage_vqa.diagnostics import (
    VarianceSweepSpec,
    WarmStartAudit,
    bootstrap_slope_ci,
    gradient_variance_sweep,
    warm_start_gradient_audit,
)
from twostage_vqa.optimizer import TwoStageConfig, quadratic_problem
from twostage_vqa.sim import SimulationError
from twostage_vqa.util import read_csv


SMALL_RANDOM = VarianceSweepSpec(
    qubit_list=(2, 3, 4),
    init=InitScheme("random_normal", sigma=np.pi),
    observable="global_z",
    samples=60,
)


def test_spec_validation():
    with pytest.raises(SimulationError):
        VarianceSweepSpec(qubit_list=())
    with pytest.raises(SimulationError):
        VarianceSweepSpec(qubit_list=(2, 4), samples=10)
    with pytest.raises(SimulationError):
        VarianceSweepSpec(qubit_list=(2, 4), observable="global_x")


def test_cells_diagonal_vs_grid():
    diag = VarianceSweepSpec(qubit_list=(2, 4, 6))
    assert diag.cells() == [(2, 2), (4, 4), (6, 6)]
    grid = VarianceSweepSpec(qubit_list=(2, 4, 6), layer_list=(1, 3))
    assert grid.cells() == [(2, 1), (2, 3), (4, 1), (4, 3), (6, 1), (6, 3)]


def test_needs_three_qubit_counts_for_slope():
    spec = VarianceSweepSpec(qubit_list=(2, 4), samples=30)
    with pytest.raises(SimulationError):
        gradient_variance_sweep(spec)


def test_sweep_is_bit_reproducible():
    a = gradient_variance_sweep(SMALL_RANDOM)
    b = gradient_variance_sweep(SMALL_RANDOM)
    assert [c.variance for c in a.cells] == [c.variance for c in b.cells]
    assert a.slope == b.slope
    assert all(c.variance >= 0 for c in a.cells)


def test_random_global_variance_decays_with_qubits():
    report = gradient_variance_sweep(SMALL_RANDOM)
    assert report.slope < 0
    lo, hi = bootstrap_slope_ci(report, n_boot=300)
    assert hi < 0


def test_identity_local_variance_does_not_collapse():
    spec = VarianceSweepSpec(
        qubit_list=(2, 3, 4),
        init=InitScheme("identity_near_zero", epsilon=0.1),
        observable="local_z",
        samples=60,
    )
    report = gradient_variance_sweep(spec)
    assert report.slope > -0.2  # flat-to-growing, no exponential decay


def test_local_beats_global_at_same_random_init():
    qubits = (2, 4, 6)
    local = gradient_variance_sweep(
        VarianceSweepSpec(
            qubit_list=qubits,
            init=InitScheme("random_normal", sigma=np.pi),
            observable="local_z",
            samples=60,
        )
    )
    glob = gradient_variance_sweep(
        VarianceSweepSpec(
            qubit_list=qubits,
            init=InitScheme("random_normal", sigma=np.pi),
            observable="global_z",
            samples=60,
        )
    )
    v_local = {c.n_qubits: c.variance for c in local.cells}
    v_global = {c.n_qubits: c.variance for c in glob.cells}
    assert v_local[6] > v_global[6]
    assert v_local[4] > v_global[4]


def test_warm_start_init_kind_runs_in_sweep():
    spec = VarianceSweepSpec(
        qubit_list=(2, 3, 4),
        init=InitScheme("warm_start", sigma=0.5),
        observable="local_z",
        samples=30,
        warm_start_iters=5,
    )
    report = gradient_variance_sweep(spec)
    assert report.init_kind == "warm_start"
    assert all(np.isfinite(c.variance) for c in report.cells)


def test_report_csv(tmp_path):
    report = gradient_variance_sweep(SMALL_RANDOM)
    path = tmp_path / "var.csv"
    report.to_csv(path)
    schema, header, rows = read_csv(path)
    assert schema == "gradient_variance.v1"
    assert header == ["n", "L", "init", "observable", "variance", "samples"]
    assert len(rows) == 3


def test_audit_requires_ten_seeds():
    problem = quadratic_problem(dim=2)
    with pytest.raises(ValueError):
        warm_start_gradient_audit(problem, TwoStageConfig(), seeds=1)


def test_audit_flags_degenerate_shared_optimum():
    # stage 1 converges to the stage-2 stationary point -> ratio < 1, flagged
    problem = quadratic_problem(dim=3)
    cfg = TwoStageConfig(eta_c=0.4, tau_g=1e-10, max_epochs_stage1=300)
    audit = warm_start_gradient_audit(problem, cfg, seeds=10)
    assert isinstance(audit, WarmStartAudit)
    assert audit.degenerate
    assert audit.ratio < 1.0
    assert len(audit.warm_norms) == 10


def test_audit_on_cloning_problem_favors_warm_start():
    from twostage_vqa.cloning import CloningSetup
    from twostage_vqa.experiments import make_cloning_problem

    setup = CloningSetup.make(n_layers=5)
    cfg = TwoStageConfig(stage1_mode="gauss_newton_ridge", max_epochs_stage1=40)
    problem = make_cloning_problem(setup, cfg)
    audit = warm_start_gradient_audit(problem, cfg, seeds=12)
    assert audit.median_warm >= audit.median_random
    assert not audit.degenerate
