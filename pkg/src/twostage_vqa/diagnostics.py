"""Barren-plateau instrumentation: gradient-variance sweeps over qubit count
and depth, and the warm-start gradient audit.

The sweep measures Var[dC/dtheta_1] (first parameter only, so cells stay
i.i.d.) over fresh parameter draws per cell. The telltale contrast: a
uniform-like random init with the global Z...Z cost shows variance decaying
with qubit count, while near-identity or warm-start inits with a local Z_0
cost keep it flat-to-growing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzSpec, InitScheme, build_pqc3, init_params
from .losses import ConvexLossSpec, convex_loss_value_and_grad
from .observables import ObservableSpec
from .optimizer import ProblemHandle, TwoStageConfig, stage1_convex
from .sim import SimulationError, run_circuit_raw
from .util import derive_seed, write_csv

VARIANCE_CSV_SCHEMA = "gradient_variance.v1"
VARIANCE_CSV_HEADER = ("n", "L", "init", "observable", "variance", "samples")


@dataclass(frozen=True)
class VarianceSweepSpec:
    """Grid of (qubit count, depth) cells; ``layer_list=None`` ties L = n."""

    qubit_list: tuple[int, ...]
    layer_list: tuple[int, ...] | None = None
    init: InitScheme = field(default_factory=lambda: InitScheme("random_normal", sigma=np.pi))
    observable: str = "global_z"  # or "local_z"
    samples: int = 100
    seed: int = 0
    # only used when init.kind == "warm_start": a short convex pull toward
    # local Z targets starting from a random_normal(sigma) draw
    warm_start_iters: int = 25
    warm_start_eta: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "qubit_list", tuple(int(n) for n in self.qubit_list))
        if self.layer_list is not None:
            object.__setattr__(self, "layer_list", tuple(int(x) for x in self.layer_list))
        if not self.qubit_list or (self.layer_list is not None and not self.layer_list):
            raise SimulationError("qubit_list and layer_list must be non-empty")
        if min(self.qubit_list) < 1:
            raise SimulationError("qubit counts must be >= 1")
        if self.samples < 30:
            raise SimulationError("variance estimates need samples >= 30")
        if self.observable not in ("global_z", "local_z"):
            raise SimulationError(f"unknown observable {self.observable!r}")

    def cells(self) -> list[tuple[int, int]]:
        if self.layer_list is None:
            return [(n, n) for n in self.qubit_list]
        return [(n, layers) for n in self.qubit_list for layers in self.layer_list]


@dataclass(frozen=True)
class CellVariance:
    n_qubits: int
    n_layers: int
    variance: float
    samples: int


@dataclass(frozen=True)
class GradientVarianceReport:
    init_kind: str
    observable: str
    cells: tuple[CellVariance, ...]
    gradient_samples: dict
    slope: float  # least-squares slope of log2(variance) vs n

    def csv_rows(self):
        for c in self.cells:
            yield (c.n_qubits, c.n_layers, self.init_kind, self.observable, c.variance, c.samples)

    def to_csv(self, path):
        write_csv(path, VARIANCE_CSV_SCHEMA, VARIANCE_CSV_HEADER, self.csv_rows())


def _observable_for(kind: str, n: int) -> ObservableSpec:
    return ObservableSpec.global_z(n) if kind == "global_z" else ObservableSpec.single_z(n, 0)


def _draw_cell_params(spec: VarianceSweepSpec, n: int, layers: int) -> np.ndarray:
    """(samples, dim) parameter draws for one cell, seeded per sample."""
    dim = AnsatzSpec(n, layers).n_params
    if spec.init.kind != "warm_start":
        return np.stack(
            [
                init_params(spec.init, dim, derive_seed(spec.seed, n, layers, i))
                for i in range(spec.samples)
            ]
        )
    # warm start: random draw then a short stage-1 pull toward local targets
    circuit = build_pqc3(AnsatzSpec(n, layers))
    convex = ConvexLossSpec(
        tuple(ObservableSpec.single_z(n, q) for q in range(n)),
        tuple(1.0 for _ in range(n)),
    )
    base_scheme = InitScheme("random_normal", sigma=spec.init.sigma)
    cfg = TwoStageConfig(
        eta_c=spec.warm_start_eta,
        tau_g=1e-12,
        max_epochs_stage1=spec.warm_start_iters,
    )
    from .optimizer import LossHandle  # local to avoid import noise at top

    handle = LossHandle(
        value=lambda t: convex_loss_value_and_grad(t, convex, circuit)[0],
        gradient=lambda t: convex_loss_value_and_grad(t, convex, circuit)[1],
        value_and_grad=lambda t: convex_loss_value_and_grad(t, convex, circuit),
    )
    rows = []
    for i in range(spec.samples):
        theta0 = init_params(base_scheme, dim, derive_seed(spec.seed, n, layers, i))
        warm, _ = stage1_convex(theta0, handle, cfg)
        rows.append(warm)
    return np.stack(rows)


def _first_param_gradients(spec: VarianceSweepSpec, n: int, layers: int) -> np.ndarray:
    """dC/dtheta_1 for every sampled parameter vector in one cell."""
    circuit = build_pqc3(AnsatzSpec(n, layers))
    obs = _observable_for(spec.observable, n)
    thetas = _draw_cell_params(spec, n, layers)
    # slot 0 is an RX rotation: the two-term rule applies
    shift = np.zeros_like(thetas[0])
    shift[0] = np.pi / 2
    rows = np.concatenate([thetas + shift, thetas - shift])
    vals = obs.expectation_batch(run_circuit_raw(circuit, rows))
    plus, minus = vals[: len(thetas)], vals[len(thetas):]
    return (plus - minus) / 2.0


def gradient_variance_sweep(spec: VarianceSweepSpec) -> GradientVarianceReport:
    """Sample variance of the first-parameter gradient per (n, L) cell, plus
    the fitted log2-variance slope against qubit count."""
    if len(set(spec.qubit_list)) < 3:
        raise SimulationError("slope fitting needs at least 3 distinct qubit counts")
    cells = []
    samples = {}
    for n, layers in spec.cells():
        grads = _first_param_gradients(spec, n, layers)
        samples[(n, layers)] = grads
        cells.append(
            CellVariance(n, layers, float(np.var(grads, ddof=1)), spec.samples)
        )
    slope = _fit_slope(
        np.array([c.n_qubits for c in cells], dtype=float),
        np.array([c.variance for c in cells]),
    )
    return GradientVarianceReport(
        init_kind=spec.init.kind,
        observable=spec.observable,
        cells=tuple(cells),
        gradient_samples=samples,
        slope=slope,
    )


def _fit_slope(ns: np.ndarray, variances: np.ndarray) -> float:
    logs = np.log2(np.maximum(variances, 1e-300))
    return float(np.polyfit(ns, logs, 1)[0])


def bootstrap_slope_ci(
    report: GradientVarianceReport,
    n_boot: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the log2-variance slope."""
    rng = np.random.default_rng(derive_seed(seed, 404))
    keys = sorted(report.gradient_samples.keys())
    ns = np.array([k[0] for k in keys], dtype=float)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        variances = []
        for k in keys:
            g = report.gradient_samples[k]
            resampled = g[rng.integers(0, len(g), size=len(g))]
            variances.append(np.var(resampled, ddof=1))
        slopes[b] = _fit_slope(ns, np.asarray(variances))
    lo, hi = np.quantile(slopes, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


@dataclass(frozen=True)
class WarmStartAudit:
    """Gradient magnitude at the stage-2 entry point vs matched random inits."""

    warm_norms: tuple[float, ...]
    random_norms: tuple[float, ...]
    median_warm: float
    median_random: float
    ratio: float
    degenerate: bool  # warm start landed on a stage-2 stationary point


def warm_start_gradient_audit(
    problem: ProblemHandle, cfg: TwoStageConfig, seeds: int
) -> WarmStartAudit:
    """Compare ||grad L_refine|| at warm starts against matched random inits."""
    if seeds < 10:
        raise ValueError("the audit needs seeds >= 10")
    warm_norms, random_norms = [], []
    for i in range(seeds):
        theta0 = np.asarray(problem.init(derive_seed(cfg.seed, 505, i)), dtype=float)
        random_norms.append(float(np.linalg.norm(problem.stage2.gradient(theta0))))
        warm, _ = stage1_convex(theta0, problem.stage1, cfg)
        warm_norms.append(float(np.linalg.norm(problem.stage2.gradient(warm))))
    med_w = float(np.median(warm_norms))
    med_r = float(np.median(random_norms))
    ratio = med_w / med_r if med_r > 0 else np.inf
    return WarmStartAudit(
        warm_norms=tuple(warm_norms),
        random_norms=tuple(random_norms),
        median_warm=med_w,
        median_random=med_r,
        ratio=float(ratio),
        degenerate=ratio < 1.0,
    )
