"""Experiment configuration: a flat key/value text format with nested
sections, strict (unknown keys are errors), and byte-exact on round-trip.

Example::

    experiment = cloning_layer_sweep
    output_dir = results
    seed = 7

    [optimizer]
    eta_n = 0.3

    [cloning]
    layer_list = 1,2,3,4,5,6
    n_seeds = 10

Every key has a default, so a minimal config names only the experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .experiments import BASELINES
from .optimizer import TwoStageConfig
from .util import fmt_value

EXPERIMENTS = (
    "cloning_layer_sweep",
    "cloning_iteration_curve",
    "variance_sweep",
    "lemma_suite",
)


class ConfigError(ValueError):
    """Parse or validation failure, naming the offending key."""


@dataclass
class CloningRunConfig:
    """Cloning-experiment knobs shared by the layer sweep and the curve."""

    layer_list: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    n_layers: int = 5  # iteration-curve depth
    n_ancilla: int = 0
    channel: str = "ideal"  # ideal | shots | noisy
    shots: int = 1000
    noise_probability: float = 0.01
    noise_scope: str = "all"  # all | input
    baselines: tuple[str, ...] = BASELINES
    n_seeds: int = 10
    init_sigma: float = 0.1

    def __post_init__(self):
        if not self.layer_list or min(self.layer_list) < 1:
            raise ConfigError("cloning.layer_list must be positive and non-empty")
        if self.n_layers < 1:
            raise ConfigError("cloning.n_layers must be >= 1")
        if self.n_ancilla < 0:
            raise ConfigError("cloning.n_ancilla must be >= 0")
        if self.channel not in ("ideal", "shots", "noisy"):
            raise ConfigError(f"cloning.channel {self.channel!r} unknown")
        if self.shots < 1:
            raise ConfigError("cloning.shots must be >= 1")
        if not 0 <= self.noise_probability <= 1:
            raise ConfigError("cloning.noise_probability must be in [0, 1]")
        if self.noise_scope not in ("all", "input"):
            raise ConfigError(f"cloning.noise_scope {self.noise_scope!r} unknown")
        bad = [b for b in self.baselines if b not in BASELINES]
        if bad or not self.baselines:
            raise ConfigError(f"cloning.baselines invalid: {bad or 'empty'}")
        if self.n_seeds < 1:
            raise ConfigError("cloning.n_seeds must be >= 1")
        if self.init_sigma <= 0:
            raise ConfigError("cloning.init_sigma must be > 0")


@dataclass
class VarianceRunConfig:
    """Gradient-variance sweep knobs; layer_list 'n' ties depth to width."""

    qubit_list: tuple[int, ...] = (2, 4, 6, 8)
    layer_list: tuple[int, ...] | None = None
    init: str = "random_normal"  # random_normal | identity_near_zero | warm_start
    sigma: float = float(np.pi)
    epsilon: float = 0.1
    observable: str = "global_z"  # global_z | local_z
    samples: int = 100

    def __post_init__(self):
        if not self.qubit_list or min(self.qubit_list) < 1:
            raise ConfigError("variance.qubit_list must be positive and non-empty")
        if self.layer_list is not None and (not self.layer_list or min(self.layer_list) < 1):
            raise ConfigError("variance.layer_list must be positive, non-empty, or 'n'")
        if self.init not in ("random_normal", "identity_near_zero", "warm_start"):
            raise ConfigError(f"variance.init {self.init!r} unknown")
        if self.sigma <= 0 or self.epsilon <= 0:
            raise ConfigError("variance.sigma and variance.epsilon must be > 0")
        if self.observable not in ("global_z", "local_z"):
            raise ConfigError(f"variance.observable {self.observable!r} unknown")
        if self.samples < 30:
            raise ConfigError("variance.samples must be >= 30")


@dataclass
class ExperimentConfig:
    experiment: str = "cloning_layer_sweep"
    output_dir: str = "results"
    seed: int = 0
    optimizer: TwoStageConfig = field(
        default_factory=lambda: TwoStageConfig(stage1_mode="gauss_newton_ridge")
    )
    cloning: CloningRunConfig = field(default_factory=CloningRunConfig)
    variance: VarianceRunConfig = field(default_factory=VarianceRunConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment {self.experiment!r} not one of {EXPERIMENTS}")
        if not self.output_dir:
            raise ConfigError("output_dir must be non-empty")


# ---------------------------------------------------------------------------
# schema: (section, key) -> (parse, render)
# ---------------------------------------------------------------------------

def _p_int(text):
    return int(text)


def _p_float(text):
    return float(text)


def _p_str(text):
    return text


def _p_int_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(int(t) for t in items)


def _p_str_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _p_layers_or_n(text):
    if text.strip() == "n":
        return None
    return _p_int_list(text)


def _r_list(value):
    return ",".join(str(v) for v in value)


def _r_layers_or_n(value):
    return "n" if value is None else _r_list(value)


# (section, key): (parser, renderer)
_SCHEMA = {
    ("", "experiment"): (_p_str, fmt_value),
    ("", "output_dir"): (_p_str, fmt_value),
    ("", "seed"): (_p_int, fmt_value),
    ("optimizer", "eta_c"): (_p_float, fmt_value),
    ("optimizer", "eta_n"): (_p_float, fmt_value),
    ("optimizer", "tau_g"): (_p_float, fmt_value),
    ("optimizer", "max_epochs_stage1"): (_p_int, fmt_value),
    ("optimizer", "max_epochs_stage2"): (_p_int, fmt_value),
    ("optimizer", "stage1_mode"): (_p_str, fmt_value),
    ("optimizer", "ridge_lambda"): (_p_float, fmt_value),
    ("cloning", "layer_list"): (_p_int_list, _r_list),
    ("cloning", "n_layers"): (_p_int, fmt_value),
    ("cloning", "n_ancilla"): (_p_int, fmt_value),
    ("cloning", "channel"): (_p_str, fmt_value),
    ("cloning", "shots"): (_p_int, fmt_value),
    ("cloning", "noise_probability"): (_p_float, fmt_value),
    ("cloning", "noise_scope"): (_p_str, fmt_value),
    ("cloning", "baselines"): (_p_str_list, _r_list),
    ("cloning", "n_seeds"): (_p_int, fmt_value),
    ("cloning", "init_sigma"): (_p_float, fmt_value),
    ("variance", "qubit_list"): (_p_int_list, _r_list),
    ("variance", "layer_list"): (_p_layers_or_n, _r_layers_or_n),
    ("variance", "init"): (_p_str, fmt_value),
    ("variance", "sigma"): (_p_float, fmt_value),
    ("variance", "epsilon"): (_p_float, fmt_value),
    ("variance", "observable"): (_p_str, fmt_value),
    ("variance", "samples"): (_p_int, fmt_value),
}

_SECTION_ORDER = ("", "optimizer", "cloning", "variance")


def _parse_text(text: str) -> dict:
    values = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTION_ORDER[1:]:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if (section, key) not in _SCHEMA:
            path = f"{section}.{key}" if section else key
            raise ConfigError(f"line {lineno}: unknown key {path}")
        parser, _ = _SCHEMA[(section, key)]
        try:
            values[(section, key)] = parser(value)
        except ValueError as exc:
            path = f"{section}.{key}" if section else key
            raise ConfigError(f"line {lineno}: bad value for {path}: {exc}") from exc
    return values


def config_from_text(text: str) -> ExperimentConfig:
    values = _parse_text(text)

    def section_kwargs(section):
        return {key: v for (sec, key), v in values.items() if sec == section}

    try:
        optimizer = TwoStageConfig(**section_kwargs("optimizer"))
    except ValueError as exc:
        raise ConfigError(f"[optimizer] {exc}") from exc
    cloning = CloningRunConfig(**section_kwargs("cloning"))
    variance = VarianceRunConfig(**section_kwargs("variance"))
    return ExperimentConfig(
        **section_kwargs(""), optimizer=optimizer, cloning=cloning, variance=variance
    )


def load_config(path) -> ExperimentConfig:
    """Parse and fully validate a config file; defaults fill absent keys."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_text(text)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical text form; load(config_to_text(cfg)) == cfg, byte-stable."""
    sources = {
        "": cfg,
        "optimizer": cfg.optimizer,
        "cloning": cfg.cloning,
        "variance": cfg.variance,
    }
    lines = []
    for section in _SECTION_ORDER:
        ordered = [k for (sec, k) in _SCHEMA.keys() if sec == section]
        if section:
            lines.append("")
            lines.append(f"[{section}]")
        for key in ordered:
            _, render = _SCHEMA[(section, key)]
            lines.append(f"{key} = {render(getattr(sources[section], key))}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(config_to_text(cfg))
