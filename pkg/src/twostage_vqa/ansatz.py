"""Layered PQC-3 circuits, parameter initialization, and parameter-shift
gradients.

PQC-3 here means: per layer, an RX rotation on every qubit, an RZ rotation
on every qubit, then a CRZ chain i -> i+1 down the register, one fresh
parameter per gate. Parameter count is n_layers * (2*n_qubits + n_qubits - 1).

The shift rule is exact per gate kind: the usual two-term +-pi/2 rule for
RX/RY/RZ, and the four-term controlled-rotation rule for CRZ (its generator
has eigenvalues {0, +-1/2}, so two terms would be biased on the
half-frequency component).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sim import (
    ChannelMode,
    Circuit,
    Gate,
    SimulationError,
    run_circuit_raw,
    run_circuit_rho_raw,
)
from .observables import ObservableSpec
from .util import derive_rng, derive_seed

_SQRT2 = np.sqrt(2.0)
# two-term rule for involutory-generator rotations
_ROTATION_SHIFTS = (np.pi / 2, -np.pi / 2)
_ROTATION_COEFFS = (0.5, -0.5)
# four-term rule for controlled rotations
_CRZ_SHIFTS = (np.pi / 2, -np.pi / 2, 3 * np.pi / 2, -3 * np.pi / 2)
_C1 = (_SQRT2 + 1) / (4 * _SQRT2)
_C2 = (_SQRT2 - 1) / (4 * _SQRT2)
_CRZ_COEFFS = (_C1, -_C1, -_C2, _C2)


@dataclass(frozen=True)
class AnsatzSpec:
    """Shape of a PQC-3 instance."""

    n_qubits: int
    n_layers: int
    family: str = "PQC3"
    entangler: str = "CRZ-chain"

    def __post_init__(self):
        if self.family != "PQC3":
            raise SimulationError(f"unsupported ansatz family {self.family!r}")
        if self.entangler != "CRZ-chain":
            raise SimulationError(f"unsupported entangler {self.entangler!r}")
        if self.n_qubits < 1 or self.n_layers < 1:
            raise SimulationError("need n_qubits >= 1 and n_layers >= 1")

    @property
    def n_params(self) -> int:
        return self.n_layers * (2 * self.n_qubits + self.n_qubits - 1)


@dataclass(frozen=True)
class InitScheme:
    """How the starting parameter vector is drawn."""

    kind: str = "random_normal"
    sigma: float = 0.1
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("random_normal", "identity_near_zero", "warm_start"):
            raise SimulationError(f"unknown init scheme {self.kind!r}")
        if self.kind == "random_normal" and self.sigma <= 0:
            raise SimulationError("random_normal needs sigma > 0")
        if self.kind == "identity_near_zero" and self.epsilon <= 0:
            raise SimulationError("identity_near_zero needs epsilon > 0")


def build_pqc3(spec: AnsatzSpec) -> Circuit:
    """PQC-3 circuit with one layer split per block."""
    gates: list[Gate] = []
    splits: list[int] = []
    slot = 0
    n = spec.n_qubits
    for _ in range(spec.n_layers):
        for q in range(n):
            gates.append(Gate("RX", (q,), param_slot=slot))
            slot += 1
        for q in range(n):
            gates.append(Gate("RZ", (q,), param_slot=slot))
            slot += 1
        for q in range(n - 1):
            gates.append(Gate("CRZ", (q, q + 1), param_slot=slot))
            slot += 1
        splits.append(len(gates))
    assert slot == spec.n_params
    return Circuit(n, tuple(gates), tuple(splits))


def angle_encode(features: Sequence[float], n_qubits: int) -> Circuit:
    """Fixed-angle RY(x_i) on qubit i; prefix circuit for data loading."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim != 1:
        raise SimulationError("features must be a flat vector")
    if len(feats) > n_qubits:
        raise SimulationError(f"{len(feats)} features do not fit on {n_qubits} qubits")
    gates = tuple(Gate("RY", (q,), fixed_angle=float(x)) for q, x in enumerate(feats))
    return Circuit(n_qubits, gates)


def init_params(scheme: InitScheme, dim: int, seed: int) -> np.ndarray:
    """Draw a starting parameter vector; deterministic for a given seed."""
    if dim < 1:
        raise SimulationError("dim must be >= 1")
    rng = derive_rng(seed)
    if scheme.kind == "random_normal":
        return rng.normal(0.0, scheme.sigma, size=dim)
    if scheme.kind == "identity_near_zero":
        return rng.uniform(-scheme.epsilon, scheme.epsilon, size=dim)
    raise SimulationError(
        "warm_start parameters come from Stage 1, not from init_params"
    )


# ---------------------------------------------------------------------------
# parameter-shift machinery
# ---------------------------------------------------------------------------

def shift_plan(circuit: Circuit, dim: int | None = None):
    """Rows of shifted parameter offsets plus combination weights.

    Returns (offsets, slots, coeffs): evaluating f at ``params + offsets[r]``
    and summing coeffs[r] * f_r per slot yields df/d(theta_slot) exactly.
    Slots not used by any gate simply get zero gradient (no rows).
    """
    d = circuit.n_params if dim is None else dim
    slot_kinds: dict[int, list[str]] = {}
    for g in circuit.gates:
        if g.param_slot is not None:
            slot_kinds.setdefault(g.param_slot, []).append(g.kind)
    offsets, slots, coeffs = [], [], []
    for slot in range(d):
        kinds = slot_kinds.get(slot)
        if not kinds:
            continue
        if len(kinds) > 1:
            raise SimulationError(
                f"param slot {slot} is shared by {len(kinds)} gates; "
                "the shift rule needs one gate per slot"
            )
        if kinds[0] == "CRZ":
            rule = zip(_CRZ_SHIFTS, _CRZ_COEFFS)
        else:
            rule = zip(_ROTATION_SHIFTS, _ROTATION_COEFFS)
        for shift, coeff in rule:
            row = np.zeros(d)
            row[slot] = shift
            offsets.append(row)
            slots.append(slot)
            coeffs.append(coeff)
    if offsets:
        off = np.stack(offsets)
    else:
        off = np.zeros((0, d))
    return off, np.asarray(slots, dtype=int), np.asarray(coeffs)


def parameter_shift_gradient(
    circuit: Circuit,
    params: np.ndarray,
    evaluate_batch: Callable[[np.ndarray], np.ndarray],
    dim: int | None = None,
) -> np.ndarray:
    """Gradient (or Jacobian) of a batched evaluator via the shift rule.

    ``evaluate_batch`` maps a (rows, dim) parameter matrix to per-row values,
    scalar (rows,) or vector (rows, m); the result is (dim,) or (dim, m).
    """
    params = np.asarray(params, dtype=float)
    offsets, slots, coeffs = shift_plan(circuit, dim or len(params))
    d = offsets.shape[1]
    if offsets.shape[0] == 0:
        probe = np.asarray(evaluate_batch(params[None, :]))
        return np.zeros((d,) + probe.shape[1:])
    vals = np.asarray(evaluate_batch(params[None, :] + offsets))
    grad = np.zeros((d,) + vals.shape[1:])
    np.add.at(grad, slots, (coeffs.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals))
    return grad


def expectation_value(
    circuit: Circuit,
    params: np.ndarray,
    observable: ObservableSpec,
    channel: ChannelMode | None = None,
    seed: int = 0,
) -> float:
    """Observable expectation through the chosen channel."""
    res = _expectation_batch(circuit, np.asarray(params, float)[None, :], observable, channel, seed)
    return float(res[0])


def _expectation_batch(circuit, params_matrix, observable, channel, seed):
    channel = channel or ChannelMode.ideal()
    if observable.n_qubits != circuit.n_qubits:
        raise SimulationError("observable register does not match circuit")
    if channel.kind == "noisy":
        rho = run_circuit_rho_raw(circuit, params_matrix, noise=channel.noise)
        return observable.expectation_rho_batch(rho)
    amps = run_circuit_raw(circuit, params_matrix)
    if channel.kind == "shots":
        return observable.sample_expectation_batch(amps, channel.shots, derive_rng(seed))
    return observable.expectation_batch(amps)


def grad_parameter_shift(
    circuit: Circuit,
    params: np.ndarray,
    observable: ObservableSpec,
    channel: ChannelMode | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Exact (ideal/noisy) or shot-estimated gradient of the expectation."""
    counter = [0]

    def evaluate(batch):
        counter[0] += 1
        return _expectation_batch(circuit, batch, observable, channel, derive_seed(seed, counter[0]))

    return parameter_shift_gradient(circuit, params, evaluate)
