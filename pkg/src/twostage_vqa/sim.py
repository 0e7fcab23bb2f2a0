"""Dense statevector / density-matrix simulation of small qubit registers.

Conventions (fixed so tests can be bit-exact):
  * qubit 0 is the most significant bit of the amplitude index, i.e. the
    basis state |q0 q1 ... q_{n-1}> lives at index q0*2^(n-1) + ... + q_{n-1}.
  * RX(t) = exp(-i t X / 2), RY(t) = exp(-i t Y / 2), RZ(t) = exp(-i t Z / 2).
  * CRZ applies RZ(t) on the target conditioned on the control qubit.

All operations are pure functions; states are treated as immutable values,
so concurrent use needs no locking. The ``*_raw`` kernels accept a batch of
states stacked along leading axes (and per-row gate angles), which is what
makes parameter-shift gradients cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Union

import numpy as np

GATE_KINDS = ("RX", "RY", "RZ", "CNOT", "CZ", "CRZ")
PARAMETERIZED_KINDS = ("RX", "RY", "RZ", "CRZ")

_ATOL_NORM = 1e-10
_ATOL_HERMITIAN = 1e-10
_ATOL_TRACE = 1e-10
_MIN_EIGENVALUE = -1e-9


class SimulationError(ValueError):
    """Raised on malformed states, gates or operation arguments."""


@dataclass(frozen=True)
class Gate:
    """One gate of a circuit. Parameterized kinds carry exactly one of
    ``param_slot`` (index into a parameter vector) or ``fixed_angle``."""

    kind: str
    targets: tuple[int, ...]
    param_slot: int | None = None
    fixed_angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        arity = 1 if self.kind in ("RX", "RY", "RZ") else 2
        if len(self.targets) != arity:
            raise SimulationError(f"{self.kind} expects {arity} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise SimulationError(f"duplicate target indices in {self.targets}")
        if any(t < 0 for t in self.targets):
            raise SimulationError(f"negative target index in {self.targets}")
        if self.kind in PARAMETERIZED_KINDS:
            if (self.param_slot is None) == (self.fixed_angle is None):
                raise SimulationError(
                    f"{self.kind} needs exactly one of param_slot / fixed_angle"
                )
        elif self.param_slot is not None or self.fixed_angle is not None:
            raise SimulationError(f"{self.kind} takes no angle")

    @property
    def is_parameterized(self) -> bool:
        return self.param_slot is not None


@dataclass(frozen=True)
class Circuit:
    """A gate program over ``n_qubits``. ``layer_splits`` marks cumulative gate
    counts at the end of each ansatz layer (used to interleave channel noise)."""

    n_qubits: int
    gates: tuple[Gate, ...]
    layer_splits: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise SimulationError("circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "layer_splits", tuple(self.layer_splits))
        for g in self.gates:
            if max(g.targets) >= self.n_qubits:
                raise SimulationError(f"gate {g} out of range for {self.n_qubits} qubits")
        if any(s < 0 or s > len(self.gates) for s in self.layer_splits):
            raise SimulationError("layer_splits out of range")
        if list(self.layer_splits) != sorted(self.layer_splits):
            raise SimulationError("layer_splits must be non-decreasing")

    @property
    def n_params(self) -> int:
        slots = [g.param_slot for g in self.gates if g.param_slot is not None]
        return max(slots) + 1 if slots else 0

    def prepend(self, gates: Iterable[Gate]) -> "Circuit":
        """New circuit with extra gates up front; layer splits shift along."""
        gates = tuple(gates)
        return Circuit(
            self.n_qubits,
            gates + self.gates,
            tuple(s + len(gates) for s in self.layer_splits),
        )

    def layer_slices(self) -> list[tuple[Gate, ...]]:
        """Gate runs, one per layer split, plus a final run for any trailing
        gates; without splits the whole circuit is a single run."""
        splits = list(self.layer_splits) or [len(self.gates)]
        if splits[-1] != len(self.gates):
            splits.append(len(self.gates))
        out, start = [], 0
        for s in splits:
            out.append(self.gates[start:s])
            start = s
        return out


@dataclass(frozen=True)
class StateVector:
    """Normalized complex amplitudes over an n-qubit register."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise SimulationError(
                f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > _ATOL_NORM:
            raise SimulationError(f"state not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls.computational(n_qubits, 0)

    @classmethod
    def computational(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator on n qubits."""

    n_qubits: int
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        d = 2**self.n_qubits
        if rho.shape != (d, d):
            raise SimulationError(f"expected {d}x{d} matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > _ATOL_HERMITIAN:
            raise SimulationError("density matrix not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > _ATOL_TRACE:
            raise SimulationError(f"density matrix trace {tr} != 1")
        if np.linalg.eigvalsh(rho)[0] < _MIN_EIGENVALUE:
            raise SimulationError("density matrix not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_statevector(cls, state: StateVector) -> "DensityMatrix":
        a = state.amplitudes
        return cls(state.n_qubits, np.outer(a, a.conj()))

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-qubit, per-layer depolarizing error rate (or no noise at all)."""

    model: str = "none"
    probability: float = 0.0

    def __post_init__(self):
        if self.model not in ("none", "depolarizing"):
            raise SimulationError(f"unknown noise model {self.model!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise SimulationError("noise probability must be in [0, 1]")
        if self.model == "none" and self.probability != 0.0:
            raise SimulationError("model 'none' forces probability 0")


@dataclass(frozen=True)
class ChannelMode:
    """How expectation values reach the classical optimizer: exactly (ideal),
    through finite sampling (shots), or through a depolarizing channel."""

    kind: str = "ideal"
    shots: int = 1000
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.kind not in ("ideal", "shots", "noisy"):
            raise SimulationError(f"unknown channel kind {self.kind!r}")
        if self.kind == "shots" and self.shots < 1:
            raise SimulationError("shots mode needs shots >= 1")
        if self.kind != "noisy" and self.noise.probability > 0:
            raise SimulationError("noise probability > 0 only allowed in noisy mode")
        if self.kind == "noisy" and self.noise.model == "none":
            raise SimulationError("noisy mode needs a noise model")

    @classmethod
    def ideal(cls) -> "ChannelMode":
        return cls("ideal")

    @classmethod
    def with_shots(cls, shots: int = 1000) -> "ChannelMode":
        return cls("shots", shots=shots)

    @classmethod
    def noisy(cls, probability: float = 0.01) -> "ChannelMode":
        return cls("noisy", noise=NoiseSpec("depolarizing", probability))


# ---------------------------------------------------------------------------
# index helpers and raw kernels (batch-friendly; last axis = amplitude index)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bit_split(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices with qubit q equal to 0 resp. 1 (qubit 0 = MSB)."""
    idx = np.arange(2**n)
    bit = (idx >> (n - 1 - q)) & 1
    i0, i1 = idx[bit == 0], idx[bit == 1]
    i0.setflags(write=False)
    i1.setflags(write=False)
    return i0, i1


@lru_cache(maxsize=None)
def _ctrl_split(n: int, c: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices with control c = 1, split by target t = 0 resp. 1."""
    idx = np.arange(2**n)
    cbit = (idx >> (n - 1 - c)) & 1
    tbit = (idx >> (n - 1 - t)) & 1
    j0 = idx[(cbit == 1) & (tbit == 0)]
    j1 = idx[(cbit == 1) & (tbit == 1)]
    j0.setflags(write=False)
    j1.setflags(write=False)
    return j0, j1


def _bc(values, out_ndim: int):
    """Reshape a per-batch angle vector so it broadcasts against (..., index)."""
    arr = np.asarray(values)
    if arr.ndim == 0:
        return arr
    return arr.reshape(arr.shape + (1,) * (out_ndim - 1))


def _apply_gate_raw(amps: np.ndarray, n: int, gate: Gate, theta=None) -> np.ndarray:
    """Apply one gate to raw amplitudes along the last axis.

    ``theta`` is the resolved angle: a scalar, or a vector matching the first
    axis of ``amps`` (per-batch angles). Ignored for CNOT/CZ.
    """
    kind = gate.kind
    if kind in ("RX", "RY", "RZ"):
        q = gate.targets[0]
        half = _bc(np.asarray(theta) / 2.0, amps.ndim)
        c, s = np.cos(half), np.sin(half)
        i0, i1 = _bit_split(n, q)
        a0, a1 = amps[..., i0], amps[..., i1]
        out = np.empty_like(amps)
        if kind == "RX":
            out[..., i0] = c * a0 - 1j * s * a1
            out[..., i1] = -1j * s * a0 + c * a1
        elif kind == "RY":
            out[..., i0] = c * a0 - s * a1
            out[..., i1] = s * a0 + c * a1
        else:  # RZ
            out[..., i0] = np.exp(-1j * half) * a0
            out[..., i1] = np.exp(1j * half) * a1
        return out
    c_q, t_q = gate.targets
    if kind == "CNOT":
        j0, j1 = _ctrl_split(n, c_q, t_q)
        out = amps.copy()
        out[..., j0] = amps[..., j1]
        out[..., j1] = amps[..., j0]
        return out
    if kind == "CZ":
        _, j1 = _ctrl_split(n, c_q, t_q)
        out = amps.copy()
        out[..., j1] = -amps[..., j1]
        return out
    if kind == "CRZ":
        j0, j1 = _ctrl_split(n, c_q, t_q)
        half = _bc(np.asarray(theta) / 2.0, amps.ndim)
        out = amps.copy()
        out[..., j0] = amps[..., j0] * np.exp(-1j * half)
        out[..., j1] = amps[..., j1] * np.exp(1j * half)
        return out
    raise SimulationError(f"unhandled gate kind {kind}")


def _resolve_angle(gate: Gate, params: np.ndarray | None):
    """Angle for a gate: fixed value, or the gate's column of the parameter
    vector/matrix (a per-batch vector when params is 2-D)."""
    if gate.kind in ("CNOT", "CZ"):
        return None
    if gate.fixed_angle is not None:
        return gate.fixed_angle
    if params is None:
        raise SimulationError(f"gate {gate} needs parameters")
    if gate.param_slot >= params.shape[-1]:
        raise SimulationError(
            f"param_slot {gate.param_slot} beyond parameter vector of length {params.shape[-1]}"
        )
    return params[..., gate.param_slot]


def run_circuit_raw(
    circuit: Circuit,
    params: np.ndarray | None = None,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Evolve raw amplitudes through a circuit.

    ``params`` may be a (dim,) vector or a (batch, dim) matrix; in the latter
    case the result is a (batch, 2^n) array where row b was evolved with
    parameter row b. ``initial`` defaults to |0...0> (broadcast over batch).
    """
    n = circuit.n_qubits
    if params is not None:
        params = np.asarray(params, dtype=float)
    if initial is None:
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1.0
    else:
        amps = np.asarray(initial, dtype=complex)
    if params is not None and params.ndim == 2 and amps.ndim == 1:
        amps = np.broadcast_to(amps, (params.shape[0], 2**n)).copy()
    for gate in circuit.gates:
        amps = _apply_gate_raw(amps, n, gate, _resolve_angle(gate, params))
    return amps


# --- density-matrix kernels -------------------------------------------------

def _conj_theta(gate: Gate, theta):
    # conj(U(t)) = U(-t) for RX/RZ/CRZ; RY's matrix is real, CNOT/CZ too.
    if theta is None or gate.kind in ("RY", "CNOT", "CZ"):
        return theta
    return -np.asarray(theta)


def _apply_gate_rho_raw(rho: np.ndarray, n: int, gate: Gate, theta=None) -> np.ndarray:
    """rho -> U rho U^dagger on raw (..., 2^n, 2^n) arrays."""
    # rows: U rho (apply U to the row index, exposed by transposing)
    a = np.swapaxes(_apply_gate_raw(np.swapaxes(rho, -1, -2), n, gate, theta), -1, -2)
    # columns: (U rho) U^dagger == kernel with conj(U) on the column index
    return _apply_gate_raw(a, n, gate, _conj_theta(gate, theta))


def _depolarize_raw(rho: np.ndarray, n: int, q: int, p: float) -> np.ndarray:
    """(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z) on one qubit."""
    i0, i1 = _bit_split(n, q)
    # Pauli conjugations expressed block-wise: with rho partitioned by qubit q
    # into [[r00, r01], [r10, r11]]:
    #   X rho X = [[r11, r10], [r01, r00]]
    #   Y rho Y = [[r11, -r10], [-r01, r00]]
    #   Z rho Z = [[r00, -r01], [-r10, r11]]
    # so the channel maps r00 -> (1-2p/3) r00 + (2p/3) r11, r01 -> (1-4p/3) r01
    # (and symmetrically), which we apply directly.
    r00 = rho[..., i0[:, None], i0[None, :]]
    r01 = rho[..., i0[:, None], i1[None, :]]
    r10 = rho[..., i1[:, None], i0[None, :]]
    r11 = rho[..., i1[:, None], i1[None, :]]
    out = np.empty_like(rho)
    a, b = 1.0 - 2.0 * p / 3.0, 2.0 * p / 3.0
    c = 1.0 - 4.0 * p / 3.0
    out[..., i0[:, None], i0[None, :]] = a * r00 + b * r11
    out[..., i1[:, None], i1[None, :]] = b * r00 + a * r11
    out[..., i0[:, None], i1[None, :]] = c * r01
    out[..., i1[:, None], i0[None, :]] = c * r10
    return out


def run_circuit_rho_raw(
    circuit: Circuit,
    params: np.ndarray | None = None,
    initial: np.ndarray | None = None,
    noise: NoiseSpec | None = None,
    noise_qubits: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Density-matrix evolution with optional depolarizing noise after every
    layer (per ``circuit.layer_splits``; the whole circuit counts as one layer
    when no splits are present).
    """
    n = circuit.n_qubits
    d = 2**n
    if params is not None:
        params = np.asarray(params, dtype=float)
    if initial is None:
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.asarray(initial, dtype=complex)
    if params is not None and params.ndim == 2 and rho.ndim == 2:
        rho = np.broadcast_to(rho, (params.shape[0], d, d)).copy()
    noisy = noise is not None and noise.model == "depolarizing" and noise.probability > 0
    targets = tuple(range(n)) if noise_qubits is None else tuple(noise_qubits)
    for chunk in circuit.layer_slices():
        for gate in chunk:
            rho = _apply_gate_rho_raw(rho, n, gate, _resolve_angle(gate, params))
        if noisy:
            for q in targets:
                rho = _depolarize_raw(rho, n, q, noise.probability)
    return rho


def _partial_trace_vector_raw(amps: np.ndarray, n: int, keep: tuple[int, ...]) -> np.ndarray:
    tensor = amps.reshape((2,) * n)
    order = list(keep) + [q for q in range(n) if q not in keep]
    mat = np.transpose(tensor, order).reshape(2 ** len(keep), -1)
    return mat @ mat.conj().T


def _partial_trace_rho_raw(rho: np.ndarray, n: int, keep: tuple[int, ...]) -> np.ndarray:
    k = len(keep)
    drop = [q for q in range(n) if q not in keep]
    tensor = rho.reshape((2,) * (2 * n))
    order = list(keep) + drop
    full_order = order + [q + n for q in order]
    moved = np.transpose(tensor, full_order).reshape(2**k, 2 ** (n - k), 2**k, 2 ** (n - k))
    return np.trace(moved, axis1=1, axis2=3)


def fidelity_with_pure_raw(amps: np.ndarray, n: int, qubit: int, target: np.ndarray) -> np.ndarray:
    """<target| rho_q |target> for each batch row of a pure joint state, where
    rho_q is the reduced state of one qubit. ``target`` is a 2-vector."""
    i0, i1 = _bit_split(n, qubit)
    # contract the kept qubit with conj(target); the norm^2 of the remainder
    # is exactly <t|rho|t> because the env indices are orthonormal
    proj = target[0].conjugate() * amps[..., i0] + target[1].conjugate() * amps[..., i1]
    return np.sum(np.abs(proj) ** 2, axis=-1)


def expectation_z_raw(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    i0, i1 = _bit_split(n, qubit)
    p0 = np.sum(np.abs(amps[..., i0]) ** 2, axis=-1)
    p1 = np.sum(np.abs(amps[..., i1]) ** 2, axis=-1)
    return p0 - p1


def _reduced_1q_blocks(rho: np.ndarray, n: int, qubit: int):
    """The four entries of Tr_env(rho) for one kept qubit, batch-wise.

    Works because _bit_split returns index pairs aligned on the environment
    configuration (i1 == i0 + stride elementwise).
    """
    i0, i1 = _bit_split(n, qubit)
    r00 = np.sum(rho[..., i0, i0], axis=-1)
    r01 = np.sum(rho[..., i0, i1], axis=-1)
    r10 = np.sum(rho[..., i1, i0], axis=-1)
    r11 = np.sum(rho[..., i1, i1], axis=-1)
    return r00, r01, r10, r11


def fidelity_with_pure_rho_raw(rho: np.ndarray, n: int, qubit: int, target: np.ndarray) -> np.ndarray:
    """<target| rho_q |target> per batch row of a joint density matrix."""
    r00, r01, r10, r11 = _reduced_1q_blocks(rho, n, qubit)
    t0, t1 = target[0], target[1]
    val = (
        np.conj(t0) * t0 * r00
        + np.conj(t0) * t1 * r01
        + np.conj(t1) * t0 * r10
        + np.conj(t1) * t1 * r11
    )
    return np.real(val)


def expectation_z_rho_raw(rho: np.ndarray, n: int, qubit: int) -> np.ndarray:
    r00, _, _, r11 = _reduced_1q_blocks(rho, n, qubit)
    return np.real(r00 - r11)


# ---------------------------------------------------------------------------
# public operations on typed states
# ---------------------------------------------------------------------------

def apply_gate(state: StateVector, gate: Gate, params: np.ndarray | None = None) -> StateVector:
    """Apply one gate (resolving its angle from ``params`` if needed)."""
    if max(gate.targets) >= state.n_qubits:
        raise SimulationError(f"gate target out of range for {state.n_qubits} qubits")
    p = None if params is None else np.asarray(params, dtype=float)
    amps = _apply_gate_raw(state.amplitudes, state.n_qubits, gate, _resolve_angle(gate, p))
    return StateVector(state.n_qubits, amps)


def apply_circuit(state: StateVector, circuit: Circuit, params: np.ndarray | None = None) -> StateVector:
    if circuit.n_qubits != state.n_qubits:
        raise SimulationError("circuit register does not match state")
    return StateVector(state.n_qubits, run_circuit_raw(circuit, params, state.amplitudes))


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> on one qubit; in [-1, 1]."""
    if not 0 <= qubit < state.n_qubits:
        raise SimulationError(f"qubit {qubit} out of range")
    return float(expectation_z_raw(state.amplitudes, state.n_qubits, qubit))


def partial_trace(state: Union[StateVector, DensityMatrix], keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix over the kept qubits (ascending index order)."""
    keep = tuple(sorted(set(int(q) for q in keep)))
    if not keep:
        raise SimulationError("keep set must be non-empty")
    if keep[0] < 0 or keep[-1] >= state.n_qubits:
        raise SimulationError(f"keep set {keep} out of range")
    if isinstance(state, StateVector):
        rho = _partial_trace_vector_raw(state.amplitudes, state.n_qubits, keep)
    else:
        rho = _partial_trace_rho_raw(state.entries, state.n_qubits, keep)
    return DensityMatrix(len(keep), rho)


def state_fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """<target| rho |target>, the overlap of a mixed state with a pure target."""
    if rho.n_qubits != target.n_qubits:
        raise SimulationError("dimension mismatch between rho and target")
    v = target.amplitudes
    return float(np.real(v.conj() @ rho.entries @ v))


def sample_z(state: StateVector, qubit: int, shots: int, seed: int) -> float:
    """Mean of ``shots`` single-qubit Z measurements (+1/-1 draws with
    P(+1) = (1 + <Z>)/2). Deterministic for a given seed."""
    if shots < 1:
        raise SimulationError("shots must be >= 1")
    z = expectation_z(state, qubit)
    p_plus = min(max((1.0 + z) / 2.0, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    draws = np.where(rng.random(shots) < p_plus, 1.0, -1.0)
    return float(draws.mean())


def apply_depolarizing(rho: DensityMatrix, qubit: int, p: float) -> DensityMatrix:
    """(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z) on the given qubit."""
    if not 0.0 <= p <= 1.0:
        raise SimulationError("depolarizing probability must be in [0, 1]")
    if not 0 <= qubit < rho.n_qubits:
        raise SimulationError(f"qubit {qubit} out of range")
    return DensityMatrix(rho.n_qubits, _depolarize_raw(rho.entries, rho.n_qubits, qubit, p))
