import json
import os

import pytest

from twostage_vqa import __version__
from twostage_vqa.cli import main
from twostage_vqa.util import read_csv


TINY_SWEEP = """
experiment = cloning_layer_sweep
seed = 3
output_dir = {out}

[optimizer]
eta_n = 0.3
max_epochs_stage1 = 6
max_epochs_stage2 = 12

[cloning]
layer_list = 1,2
n_seeds = 2
"""

TINY_CURVE = """
experiment = cloning_iteration_curve
seed = 5
output_dir = {out}

[optimizer]
eta_n = 0.3
max_epochs_stage1 = 5
max_epochs_stage2 = 10

[cloning]
n_layers = 2
n_seeds = 2
baselines = two_stage,random_init_nonconvex
"""

TINY_VARIANCE = """
experiment = variance_sweep
seed = 1
output_dir = {out}

[variance]
qubit_list = 2,3,4
samples = 30
"""


def write_config(tmp_path, template, name="cfg.txt", out="out"):
    path = tmp_path / name
    path.write_text(template.format(out=tmp_path / out))
    return path


def test_version_verb(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_validate_echoes_resolved_config(tmp_path, capsys):
    path = write_config(tmp_path, TINY_SWEEP)
    assert main(["validate", str(path)]) == 0
    echoed = capsys.readouterr().out
    assert "eta_n = 0.3" in echoed
    assert "eta_c = 0.05" in echoed  # defaults filled in


def test_validate_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("experiment = lemma_suite\n[optimizer]\neta_c = -3\n")
    assert main(["validate", str(path)]) == 2
    assert "eta_c" in capsys.readouterr().err


def test_run_layer_sweep_writes_artifacts(tmp_path):
    path = write_config(tmp_path, TINY_SWEEP)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    schema, header, rows = read_csv(out / "cloning_reports.csv")
    assert schema == "cloning_report.v1"
    assert header == ["state", "F_B", "F_E", "avg", "L_nc", "L_cx", "channel", "layers", "seed", "baseline"]
    # 2 layers x 2 seeds x 3 baselines x 4 states
    assert len(rows) == 2 * 2 * 3 * 4
    conv = json.loads((out / "convergence.json").read_text())
    assert len(conv) == 12
    assert (out / "make_plots.py").exists()
    assert (out / "resolved_config.txt").exists()


def test_run_iteration_curve_writes_series(tmp_path):
    path = write_config(tmp_path, TINY_CURVE)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    schema, header, rows = read_csv(out / "iteration_curve.csv")
    assert schema == "iteration_curve.v1"
    assert header == ["baseline", "seed", "iter", "stage", "avg_fidelity"]
    baselines = {r[0] for r in rows}
    assert baselines == {"two_stage", "random_init_nonconvex"}
    fid = [float(r[4]) for r in rows]
    assert all(0.0 <= f <= 1.0 for f in fid)


def test_run_variance_sweep_writes_matrix(tmp_path):
    path = write_config(tmp_path, TINY_VARIANCE)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    schema, header, rows = read_csv(out / "variance.csv")
    assert schema == "gradient_variance.v1"
    assert len(rows) == 3  # one per qubit count at L = n


def test_lemma_suite_verb_passes(tmp_path, capsys):
    assert main(["lemma-suite", "--output", str(tmp_path / "lemma")]) == 0
    printed = capsys.readouterr().out
    assert "PASS quadratic.descent_violations" in printed
    assert "FAIL" not in printed
    schema, header, rows = read_csv(tmp_path / "lemma" / "lemma_suite.csv")
    assert schema == "lemma_suite.v1"
    assert all(r[3] == "True" for r in rows)


def test_reruns_are_byte_identical(tmp_path):
    cfg_a = write_config(tmp_path, TINY_SWEEP, name="a.txt", out="out_a")
    cfg_b = write_config(tmp_path, TINY_SWEEP, name="b.txt", out="out_b")
    assert main(["run", str(cfg_a)]) == 0
    assert main(["run", str(cfg_b)]) == 0
    for name in ("cloning_reports.csv", "convergence.json", "make_plots.py"):
        a = (tmp_path / "out_a" / name).read_bytes()
        b = (tmp_path / "out_b" / name).read_bytes()
        assert a == b, name


def test_worker_pool_matches_serial(tmp_path):
    cfg_serial = write_config(tmp_path, TINY_SWEEP, name="s.txt", out="out_s")
    cfg_pool = write_config(tmp_path, TINY_SWEEP, name="p.txt", out="out_p")
    assert main(["run", str(cfg_serial)]) == 0
    os.environ["TWOSTAGE_VQA_WORKERS"] = "2"
    try:
        assert main(["run", str(cfg_pool)]) == 0
    finally:
        del os.environ["TWOSTAGE_VQA_WORKERS"]
    a = (tmp_path / "out_s" / "cloning_reports.csv").read_bytes()
    b = (tmp_path / "out_p" / "cloning_reports.csv").read_bytes()
    assert a == b


def test_generated_plot_script_renders(tmp_path):
    pytest.importorskip("matplotlib")
    import subprocess
    import sys

    path = write_config(tmp_path, TINY_SWEEP)
    assert main(["run", str(path)]) == 0
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, str(out / "make_plots.py")], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "fidelity_vs_layers.png").exists()
