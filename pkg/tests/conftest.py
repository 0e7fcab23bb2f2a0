import time

import pytest

from twostage_vqa.cloning import CloningSetup
from twostage_vqa.experiments import iteration_curve, layer_sweep_detailed
from twostage_vqa.optimizer import TwoStageConfig

# Acceptance-run configuration: library defaults except eta_n, which is set
# so the random-init baseline actually trains within the 550-epoch budget
# (with the default 0.01 it cannot leave the near-identity plateau, which
# would leave the convex-only baseline above it instead of lowest).
ACCEPT_CFG = TwoStageConfig(stage1_mode="gauss_newton_ridge", eta_n=0.3)


@pytest.fixture(scope="session")
def sweep_results():
    """Layer sweep behind the fidelity-vs-layers comparison: layers 1..6,
    10 paired seeds, all three baselines, ideal channel. Returns the runs
    plus the wall time spent producing them (charged to criterion 5)."""
    t0 = time.monotonic()
    setup = CloningSetup.make(n_layers=1)
    runs = layer_sweep_detailed(
        setup, [1, 2, 3, 4, 5, 6], ACCEPT_CFG, seeds=list(range(10))
    )
    return {"runs": runs, "elapsed": time.monotonic() - t0}


@pytest.fixture(scope="session")
def curve_results():
    """Iteration curves at 5 layers over 20 paired seeds, two-stage vs
    random-init, with the 100/450 epoch split. Wall time charged to
    criterion 6."""
    t0 = time.monotonic()
    setup = CloningSetup.make(n_layers=5)
    curves = {}
    for baseline in ("two_stage", "random_init_nonconvex"):
        curves[baseline] = [
            iteration_curve(setup, ACCEPT_CFG, seed=seed, baseline=baseline)
            for seed in range(20)
        ]
    curves["elapsed"] = time.monotonic() - t0
    return curves
