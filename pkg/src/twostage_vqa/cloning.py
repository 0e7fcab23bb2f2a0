"""The BB84 variational-cloning experiment.

Alice's signal state (one of |0>, |1>, |+>, |->) is prepared on the input
qubit, the other register qubits start blank in |0>, the full register goes
through the PQC-3 ansatz U(theta), and the clones are read off the designated
Bob and Eve qubits as reduced states. The clone fidelity against signal psi
is F_X = <psi| rho_X |psi> = (1 + <Z_X>)/2 for the rotated +-1 observable
2|psi><psi| - I on clone X.

Channel modes:
  ideal  - exact statevector fidelities
  shots  - each fidelity estimated from ``shots`` basis-rotated Z samples
  noisy  - density-matrix pipeline with per-layer depolarizing noise

All randomness is derived from explicit seeds, so a run is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .ansatz import AnsatzSpec, build_pqc3
from .sim import (
    ChannelMode,
    Circuit,
    Gate,
    SimulationError,
    _apply_gate_raw,
    _bit_split,
    fidelity_with_pure_raw,
    fidelity_with_pure_rho_raw,
    run_circuit_raw,
    run_circuit_rho_raw,
)
from .util import derive_rng

SIGNAL_LABELS = ("0", "1", "+", "-")
# RY(angle)|0> prepares each signal state; RY(-angle) rotates it back to |0>
_PREP_ANGLES = np.array([0.0, np.pi, np.pi / 2, -np.pi / 2])
_SQ2 = 1 / np.sqrt(2)
_TARGETS = (
    np.array([1.0, 0.0], dtype=complex),
    np.array([0.0, 1.0], dtype=complex),
    np.array([_SQ2, _SQ2], dtype=complex),
    np.array([_SQ2, -_SQ2], dtype=complex),
)

REPORT_CSV_SCHEMA = "cloning_report.v1"
REPORT_CSV_HEADER = (
    "state", "F_B", "F_E", "avg", "L_nc", "L_cx", "channel", "layers", "seed", "baseline",
)


def pccm_bound() -> float:
    """Optimal symmetric phase-covariant cloning fidelity, 1/2 + 1/sqrt(8)."""
    return 0.5 + 1.0 / np.sqrt(8.0)


@dataclass(frozen=True)
class CloningSetup:
    """Register layout, ansatz and channel for one cloning experiment."""

    ansatz: AnsatzSpec
    channel: ChannelMode = field(default_factory=ChannelMode.ideal)
    input_qubit: int = 0
    bob_qubit: int = 1
    eve_qubit: int = 2
    n_ancilla: int = 0
    bob_weight: float = 1.0
    eve_weight: float = 1.0
    noise_scope: str = "all"  # or "input": depolarize only Alice's wire

    def __post_init__(self):
        n = 3 + self.n_ancilla
        if self.ansatz.n_qubits != n:
            raise SimulationError(
                f"ansatz spans {self.ansatz.n_qubits} qubits but the register has {n}"
            )
        trio = (self.input_qubit, self.bob_qubit, self.eve_qubit)
        if len(set(trio)) != 3 or any(q < 0 or q >= n for q in trio):
            raise SimulationError(f"register qubits {trio} must be distinct and < {n}")
        if self.bob_weight != 1.0 or self.eve_weight != 1.0:
            raise SimulationError("only the symmetric cloner (both weights 1) is supported")
        if self.noise_scope not in ("all", "input"):
            raise SimulationError(f"unknown noise scope {self.noise_scope!r}")

    @classmethod
    def make(
        cls,
        n_layers: int = 5,
        channel: ChannelMode | None = None,
        n_ancilla: int = 0,
        **kwargs,
    ) -> "CloningSetup":
        spec = AnsatzSpec(3 + n_ancilla, n_layers)
        return cls(ansatz=spec, channel=channel or ChannelMode.ideal(), n_ancilla=n_ancilla, **kwargs)

    @property
    def n_qubits(self) -> int:
        return self.ansatz.n_qubits

    @property
    def dim(self) -> int:
        return self.ansatz.n_params

    def signal_states(self) -> tuple[Circuit, ...]:
        """The four BB84 preparation circuits on the input qubit."""
        return tuple(
            Circuit(self.n_qubits, (Gate("RY", (self.input_qubit,), fixed_angle=float(a)),))
            for a in _PREP_ANGLES
        )

    def evaluation_circuit(self) -> Circuit:
        """Ansatz with a leading signal-prep RY whose angle is an extra
        parameter column (slot = dim), so states batch like parameters."""
        return build_pqc3(self.ansatz).prepend(
            (Gate("RY", (self.input_qubit,), param_slot=self.dim),)
        )


@dataclass(frozen=True)
class FidelityReport:
    """Per-state clone fidelities plus the derived aggregate quantities."""

    fidelities: tuple[tuple[float, float], ...]  # (F_B, F_E) per SIGNAL_LABELS
    average_fidelity: float
    l_nc: float
    l_cx: float
    channel: ChannelMode
    layers: int
    seed: int = 0
    baseline: str = ""

    def __post_init__(self):
        fid = np.asarray(self.fidelities, dtype=float)
        if fid.shape != (4, 2):
            raise SimulationError("need (F_B, F_E) for each of the four signal states")
        if np.any(fid < -1e-9) or np.any(fid > 1 + 1e-9):
            raise SimulationError("fidelities must lie in [0, 1]")
        if abs(self.average_fidelity - fid.mean()) > 1e-12:
            raise SimulationError("average_fidelity inconsistent with per-state values")
        object.__setattr__(
            self, "fidelities", tuple((float(b), float(e)) for b, e in self.fidelities)
        )


def loss_values(fid: np.ndarray) -> tuple[float, float]:
    """(L_nc, L_cx) from a (4, 2) fidelity matrix; L_cx uses Z = 2F - 1."""
    fid = np.asarray(fid, dtype=float)
    l_nc = float(np.mean(np.sum((1.0 - fid) ** 2, axis=-1)))
    z = 2.0 * fid - 1.0
    l_cx = float(np.mean(np.sum((1.0 - z) ** 2, axis=-1)))
    return l_nc, l_cx


def clone_fidelity_batch(
    params: np.ndarray, setup: CloningSetup, seed: int = 0, tag: int = 0
) -> np.ndarray:
    """Fidelity tensor (batch, 4 states, 2 parties) for a parameter batch.

    One simulator pass covers all rows and all four signal states (the prep
    angle rides along as a synthetic parameter column). ``tag`` salts the
    shot-noise stream so repeated estimator calls stay independent while the
    whole run remains seed-deterministic.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    b, d = params.shape
    if d != setup.dim:
        raise SimulationError(f"expected {setup.dim} parameters, got {d}")
    circ = setup.evaluation_circuit()
    n = setup.n_qubits
    # rows grouped state-major: row s*b + r evolves params[r] with prep angle s
    aug = np.empty((4 * b, d + 1))
    aug[:, :d] = np.tile(params, (4, 1))
    aug[:, d] = np.repeat(_PREP_ANGLES, b)
    parties = (setup.bob_qubit, setup.eve_qubit)
    out = np.empty((b, 4, 2))

    if setup.channel.kind == "noisy":
        noise_qubits = None if setup.noise_scope == "all" else (setup.input_qubit,)
        rho = run_circuit_rho_raw(circ, aug, noise=setup.channel.noise, noise_qubits=noise_qubits)
        rho = rho.reshape(4, b, 2**n, 2**n)
        for s in range(4):
            for p, q in enumerate(parties):
                out[:, s, p] = fidelity_with_pure_rho_raw(rho[s], n, q, _TARGETS[s])
        return out

    amps = run_circuit_raw(circ, aug).reshape(4, b, 2**n)
    if setup.channel.kind == "ideal":
        for s in range(4):
            for p, q in enumerate(parties):
                out[:, s, p] = fidelity_with_pure_raw(amps[s], n, q, _TARGETS[s])
        return out

    # shots: rotate the measured clone back to the computational basis and
    # draw the exact binomial count for P(outcome 0) = F
    rng = derive_rng(seed, tag)
    shots = setup.channel.shots
    for s in range(4):
        for p, q in enumerate(parties):
            unprep = Gate("RY", (q,), fixed_angle=float(-_PREP_ANGLES[s]))
            rotated = _apply_gate_raw(amps[s], n, unprep, -_PREP_ANGLES[s])
            i0, _ = _bit_split(n, q)
            p0 = np.clip(np.sum(np.abs(rotated[..., i0]) ** 2, axis=-1), 0.0, 1.0)
            out[:, s, p] = rng.binomial(shots, p0) / shots
    return out


def clone_fidelities(
    params: np.ndarray, setup: CloningSetup, state_index: int, seed: int = 0
) -> tuple[float, float]:
    """(F_B, F_E) for one signal state."""
    if not 0 <= state_index < 4:
        raise SimulationError(f"state index {state_index} not in 0..3")
    fid = clone_fidelity_batch(np.asarray(params, dtype=float)[None, :], setup, seed=seed)
    return float(fid[0, state_index, 0]), float(fid[0, state_index, 1])


def average_fidelity(
    params: np.ndarray, setup: CloningSetup, seed: int = 0, baseline: str = ""
) -> FidelityReport:
    """Full report over the four signal states (Eq. average, both losses)."""
    fid = clone_fidelity_batch(np.asarray(params, dtype=float)[None, :], setup, seed=seed)[0]
    l_nc, l_cx = loss_values(fid)
    return FidelityReport(
        fidelities=tuple((float(bq), float(eq)) for bq, eq in fid),
        average_fidelity=float(fid.mean()),
        l_nc=l_nc,
        l_cx=l_cx,
        channel=setup.channel,
        layers=setup.ansatz.n_layers,
        seed=seed,
        baseline=baseline,
    )


def report_rows(report: FidelityReport) -> Iterable[tuple]:
    """CSV rows (one per signal state) in the fixed report schema."""
    for label, (f_b, f_e) in zip(SIGNAL_LABELS, report.fidelities):
        yield (
            label,
            f_b,
            f_e,
            report.average_fidelity,
            report.l_nc,
            report.l_cx,
            report.channel.kind,
            report.layers,
            report.seed,
            report.baseline,
        )


def with_layers(setup: CloningSetup, n_layers: int) -> CloningSetup:
    """Same experiment with a different ansatz depth."""
    return replace(setup, ansatz=AnsatzSpec(setup.ansatz.n_qubits, n_layers))
