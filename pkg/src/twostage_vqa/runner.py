"""Experiment orchestration: dispatch a validated config, fan jobs out over
workers, and write the result artifacts (schema-versioned CSVs, a machine-
readable convergence report, a plot-generation script, and the resolved
config for reproducibility).

Outputs are byte-identical across reruns of the same config and seed: all
randomness is seed-derived, job results are written in a fixed order, and
nothing time-dependent lands in the files.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .cloning import (
    REPORT_CSV_HEADER,
    REPORT_CSV_SCHEMA,
    CloningSetup,
    report_rows,
)
from .config import ExperimentConfig, save_config
from .diagnostics import VarianceSweepSpec, gradient_variance_sweep
from .experiments import _run_sweep_job, iteration_curve
from .ansatz import InitScheme
from .optimizer import TwoStageConfig, check_descent_inequality, logistic_problem, quadratic_problem, run_two_stage
from .sim import ChannelMode
from .util import write_csv

WORKERS_ENV = "TWOSTAGE_VQA_WORKERS"

CURVE_CSV_SCHEMA = "iteration_curve.v1"
CURVE_CSV_HEADER = ("baseline", "seed", "iter", "stage", "avg_fidelity")
LEMMA_CSV_SCHEMA = "lemma_suite.v1"
LEMMA_CSV_HEADER = ("problem", "check", "value", "passed")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _parallel_map(fn, jobs):
    workers = worker_count()
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _channel_from(cfg: ExperimentConfig) -> ChannelMode:
    c = cfg.cloning
    if c.channel == "shots":
        return ChannelMode.with_shots(c.shots)
    if c.channel == "noisy":
        return ChannelMode.noisy(c.noise_probability)
    return ChannelMode.ideal()


def _cloning_setup(cfg: ExperimentConfig, n_layers: int) -> CloningSetup:
    return CloningSetup.make(
        n_layers=n_layers,
        channel=_channel_from(cfg),
        n_ancilla=cfg.cloning.n_ancilla,
        noise_scope=cfg.cloning.noise_scope,
    )


def _opt_cfg(cfg: ExperimentConfig) -> TwoStageConfig:
    return replace(cfg.optimizer, seed=cfg.seed)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one configured experiment; returns the process exit status."""
    outdir = Path(cfg.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        save_config(cfg, outdir / "resolved_config.txt")
        if cfg.experiment == "cloning_layer_sweep":
            _run_layer_sweep(cfg, outdir)
        elif cfg.experiment == "cloning_iteration_curve":
            _run_iteration_curve(cfg, outdir)
        elif cfg.experiment == "variance_sweep":
            _run_variance_sweep(cfg, outdir)
        elif cfg.experiment == "lemma_suite":
            return run_lemma_suite(outdir)
        else:  # pragma: no cover - config validation rejects this earlier
            raise ValueError(f"unknown experiment {cfg.experiment!r}")
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 1
    return 0


def _write_convergence(path, entries) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_layer_sweep(cfg: ExperimentConfig, outdir: Path) -> None:
    base_setup = _cloning_setup(cfg, n_layers=max(cfg.cloning.layer_list))
    opt = _opt_cfg(cfg)
    jobs = [
        (layer, seed, baseline)
        for layer in cfg.cloning.layer_list
        for seed in range(cfg.cloning.n_seeds)
        for baseline in cfg.cloning.baselines
    ]
    fn = functools.partial(_run_sweep_job, base_setup, opt, cfg.cloning.init_sigma)
    runs = _parallel_map(fn, jobs)
    rows = [row for run in runs for row in report_rows(run.report)]
    write_csv(outdir / "cloning_reports.csv", REPORT_CSV_SCHEMA, REPORT_CSV_HEADER, rows)
    _write_convergence(
        outdir / "convergence.json",
        [
            {"layers": run.layers, "seed": run.seed, "baseline": run.baseline,
             **run.convergence.as_dict()}
            for run in runs
        ],
    )
    _write_plot_script(outdir, "cloning_layer_sweep")


def _curve_job(setup, opt, init_sigma, job):
    baseline, seed = job
    return iteration_curve(setup, opt, seed=seed, baseline=baseline, init_sigma=init_sigma)


def _run_iteration_curve(cfg: ExperimentConfig, outdir: Path) -> None:
    setup = _cloning_setup(cfg, n_layers=cfg.cloning.n_layers)
    opt = _opt_cfg(cfg)
    baselines = [b for b in cfg.cloning.baselines if b != "convex_only"]
    jobs = [(baseline, seed) for baseline in baselines for seed in range(cfg.cloning.n_seeds)]
    curves = _parallel_map(functools.partial(_curve_job, setup, opt, cfg.cloning.init_sigma), jobs)
    rows = []
    for curve in curves:
        for it, stage, fid in zip(curve.iterations, curve.stages, curve.fidelities):
            rows.append((curve.baseline, curve.seed, int(it), int(stage), float(fid)))
    write_csv(outdir / "iteration_curve.csv", CURVE_CSV_SCHEMA, CURVE_CSV_HEADER, rows)
    _write_convergence(
        outdir / "convergence.json",
        [
            {"baseline": c.baseline, "seed": c.seed, "switch_index": c.switch_index,
             "final_fidelity": float(c.fidelities[-1]), **c.convergence.as_dict()}
            for c in curves
        ],
    )
    _write_plot_script(outdir, "cloning_iteration_curve")


def _run_variance_sweep(cfg: ExperimentConfig, outdir: Path) -> None:
    v = cfg.variance
    scheme = InitScheme(v.init, sigma=v.sigma, epsilon=v.epsilon)
    spec = VarianceSweepSpec(
        qubit_list=v.qubit_list,
        layer_list=v.layer_list,
        init=scheme,
        observable=v.observable,
        samples=v.samples,
        seed=cfg.seed,
    )
    report = gradient_variance_sweep(spec)
    report.to_csv(outdir / "variance.csv")
    _write_convergence(
        outdir / "convergence.json",
        [{"slope_log2_variance_vs_n": report.slope, "init": report.init_kind,
          "observable": report.observable}],
    )
    _write_plot_script(outdir, "variance_sweep")


def run_lemma_suite(outdir: Path | None = None) -> int:
    """Toy-problem checks of the convergence lemmas; exit 0 iff all pass.

    Quadratic and logistic problems run both stages with A4-compliant steps;
    checked: zero descent violations, finite stage-1 termination by the
    gradient rule, and a stationarity gap below 1e-6. A deliberately
    oversized step must register violations (the checker works).
    """
    rows = []
    ok = True

    for problem in (quadratic_problem(dim=4), logistic_problem()):
        eta = 0.9 / problem.smoothness  # < 2/L with margin
        cfg = TwoStageConfig(
            eta_c=eta, eta_n=eta, tau_g=1e-6,
            max_epochs_stage1=5000, max_epochs_stage2=200000,
            stage2_grad_floor=1e-9, seed=1,
        )
        _, report, trace = run_two_stage(problem, cfg)
        checks = [
            ("descent_violations", report.descent_violations, report.descent_violations == 0),
            ("stage1_gradient_rule_fired", report.stage1_terminated_by,
             report.stage1_terminated_by == "gradient_rule"),
            ("stationarity_gap", report.stationarity_gap, report.stationarity_gap <= 1e-6),
        ]
        for name, value, passed in checks:
            rows.append((problem.name, name, value, passed))
            ok = ok and passed

    # checker self-test: an A4-violating step must be flagged
    problem = quadratic_problem(dim=2, start=(1.0, 1.0))
    cfg = TwoStageConfig(eta_c=2.0, tau_g=1e-16, max_epochs_stage1=40)
    from .optimizer import stage1_convex

    _, trace = stage1_convex(problem.init(0), problem.stage1, cfg)
    flagged = check_descent_inequality(trace, problem.smoothness, cfg.eta_c, stage=1)
    rows.append(("quadratic_oversized_step", "checker_flags_violations", flagged, flagged >= 1))
    ok = ok and flagged >= 1

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        write_csv(outdir / "lemma_suite.csv", LEMMA_CSV_SCHEMA, LEMMA_CSV_HEADER, rows)
    for problem_name, check, value, passed in rows:
        print(f"{'PASS' if passed else 'FAIL'} {problem_name}.{check} = {value}")
    return 0 if ok else 1


_PLOT_SCRIPT = '''"""Render the figures for this experiment from its CSV files.

Generated alongside the data; needs matplotlib. Usage: python make_plots.py
"""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).parent
EXPERIMENT = {experiment!r}
PCCM = 0.8535533905932737


def read_rows(name):
    with open(HERE / name) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[1].split(",")
    return [dict(zip(header, row)) for row in csv.reader(lines[2:])]


def median(xs):
    xs = sorted(xs)
    mid = len(xs) // 2
    return xs[mid] if len(xs) % 2 else 0.5 * (xs[mid - 1] + xs[mid])


def plot_layer_sweep():
    rows = read_rows("cloning_reports.csv")
    per = defaultdict(list)
    for r in rows:
        per[(r["baseline"], int(r["layers"]), int(r["seed"]))] = float(r["avg"])
    by_baseline = defaultdict(lambda: defaultdict(list))
    for (baseline, layers, _seed), avg in per.items():
        by_baseline[baseline][layers].append(avg)
    fig, ax = plt.subplots(figsize=(6, 4))
    for baseline, data in sorted(by_baseline.items()):
        layers = sorted(data)
        ax.plot(layers, [median(data[L]) for L in layers], marker="o", label=baseline)
    ax.axhline(PCCM, color="k", ls="--", lw=1, label="PCCM bound")
    ax.set_xlabel("number of layers")
    ax.set_ylabel("median average cloning fidelity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(HERE / "fidelity_vs_layers.png", dpi=150)


def plot_iteration_curve():
    rows = read_rows("iteration_curve.csv")
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        series[r["baseline"]][int(r["iter"])].append(float(r["avg_fidelity"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for baseline, data in sorted(series.items()):
        iters = sorted(data)
        ax.plot(iters, [median(data[i]) for i in iters], label=baseline)
    ax.axhline(PCCM, color="k", ls="--", lw=1, label="PCCM bound")
    ax.set_xlabel("iteration")
    ax.set_ylabel("median average fidelity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(HERE / "fidelity_vs_iteration.png", dpi=150)


def plot_variance():
    rows = read_rows("variance.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [int(r["n"]) for r in rows]
    ys = [float(r["variance"]) for r in rows]
    label = rows[0]["init"] + " / " + rows[0]["observable"] if rows else ""
    ax.semilogy(xs, ys, marker="o", label=label)
    ax.set_xlabel("qubit count n")
    ax.set_ylabel("Var[dC/dtheta_1]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(HERE / "variance_vs_qubits.png", dpi=150)


if __name__ == "__main__":
    if EXPERIMENT == "cloning_layer_sweep":
        plot_layer_sweep()
    elif EXPERIMENT == "cloning_iteration_curve":
        plot_iteration_curve()
    elif EXPERIMENT == "variance_sweep":
        plot_variance()
    print("figures written next to the CSVs")
'''


def _write_plot_script(outdir: Path, experiment: str) -> None:
    with open(outdir / "make_plots.py", "w", newline="\n") as fh:
        fh.write(_PLOT_SCRIPT.format(experiment=experiment))
