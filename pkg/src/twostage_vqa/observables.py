"""Weighted sums of Pauli strings and their expectation values.

A term is a full-register string over {I, X, Y, Z} plus a real coefficient,
e.g. ("ZIZ", 0.5) on three qubits. Expectations are exact on statevectors
and density matrices, or shot-sampled by rotating every X/Y factor into the
computational basis and drawing from the joint outcome distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sim import Gate, SimulationError, _apply_gate_raw, _bit_split

_PAULI_CHARS = frozenset("IXYZ")


@dataclass(frozen=True)
class ObservableSpec:
    """Hermitian observable as a list of (Pauli string, coefficient) terms."""

    terms: tuple[tuple[str, float], ...]

    def __post_init__(self):
        terms = tuple((str(p), float(c)) for p, c in self.terms)
        if not terms:
            raise SimulationError("observable needs at least one term")
        width = len(terms[0][0])
        for pauli, coeff in terms:
            if len(pauli) != width:
                raise SimulationError("all Pauli strings must have equal length")
            if not set(pauli) <= _PAULI_CHARS:
                raise SimulationError(f"bad Pauli string {pauli!r}")
            if not np.isfinite(coeff):
                raise SimulationError("coefficients must be finite")
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][0])

    @property
    def support(self) -> frozenset[int]:
        return frozenset(
            q for pauli, _ in self.terms for q, ch in enumerate(pauli) if ch != "I"
        )

    @property
    def locality(self) -> int:
        return max(sum(ch != "I" for ch in pauli) for pauli, _ in self.terms)

    @classmethod
    def single_z(cls, n_qubits: int, qubit: int) -> "ObservableSpec":
        s = "".join("Z" if q == qubit else "I" for q in range(n_qubits))
        return cls(((s, 1.0),))

    @classmethod
    def global_z(cls, n_qubits: int) -> "ObservableSpec":
        return cls((("Z" * n_qubits, 1.0),))

    def matrix(self) -> np.ndarray:
        """Dense matrix (test oracle; fine for the register sizes used here)."""
        out = np.zeros((2**self.n_qubits,) * 2, dtype=complex)
        for pauli, coeff in self.terms:
            m = np.eye(1)
            for ch in pauli:
                m = np.kron(m, _PAULI_MATRICES[ch])
            out += coeff * m
        return out

    # -- exact expectations ------------------------------------------------

    def expectation_batch(self, amps: np.ndarray) -> np.ndarray:
        """<psi|O|psi> along the last axis of raw amplitudes."""
        n = self.n_qubits
        total = 0.0
        for pauli, coeff in self.terms:
            acted = _apply_pauli_string_raw(amps, n, pauli)
            total = total + coeff * np.real(np.sum(np.conj(amps) * acted, axis=-1))
        return total

    def expectation(self, state) -> float:
        if state.n_qubits != self.n_qubits:
            raise SimulationError("observable register does not match state")
        return float(self.expectation_batch(state.amplitudes))

    def expectation_rho_batch(self, rho: np.ndarray) -> np.ndarray:
        """Tr(O rho) for raw density matrices stacked along leading axes."""
        n = self.n_qubits
        total = 0.0
        diag = np.arange(2**n)
        for pauli, coeff in self.terms:
            # Tr(P rho) = sum_i (P rho)_ii; P applied to the row index
            acted = np.swapaxes(
                _apply_pauli_string_raw(np.swapaxes(rho, -1, -2), n, pauli), -1, -2
            )
            total = total + coeff * np.real(acted[..., diag, diag].sum(axis=-1))
        return total

    # -- shot-based estimation ----------------------------------------------

    def sample_expectation_batch(
        self, amps: np.ndarray, shots: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Per-row estimator: each term measured in its own rotated basis with
        ``shots`` draws from the exact outcome distribution."""
        if shots < 1:
            raise SimulationError("shots must be >= 1")
        n = self.n_qubits
        flat = amps.reshape(-1, amps.shape[-1])
        total = np.zeros(flat.shape[0])
        for pauli, coeff in self.terms:
            rotated = flat
            for q, ch in enumerate(pauli):
                if ch == "X":
                    rotated = _apply_gate_raw(
                        rotated, n, Gate("RY", (q,), fixed_angle=-np.pi / 2), -np.pi / 2
                    )
                elif ch == "Y":
                    rotated = _apply_gate_raw(
                        rotated, n, Gate("RX", (q,), fixed_angle=np.pi / 2), np.pi / 2
                    )
            probs = np.abs(rotated) ** 2
            probs /= probs.sum(axis=-1, keepdims=True)
            signs = _parity_signs(n, tuple(q for q, ch in enumerate(pauli) if ch != "I"))
            for b in range(flat.shape[0]):
                counts = rng.multinomial(shots, probs[b])
                total[b] += coeff * float(counts @ signs) / shots
        return total.reshape(amps.shape[:-1])


_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _apply_pauli_string_raw(amps: np.ndarray, n: int, pauli: str) -> np.ndarray:
    out = amps
    for q, ch in enumerate(pauli):
        if ch == "I":
            continue
        i0, i1 = _bit_split(n, q)
        nxt = np.empty_like(out)
        if ch == "X":
            nxt[..., i0] = out[..., i1]
            nxt[..., i1] = out[..., i0]
        elif ch == "Y":
            nxt[..., i0] = -1j * out[..., i1]
            nxt[..., i1] = 1j * out[..., i0]
        else:  # Z
            nxt[..., i0] = out[..., i0]
            nxt[..., i1] = -out[..., i1]
        out = nxt
    return out


@lru_cache(maxsize=None)
def _parity_signs(n: int, support: tuple[int, ...]) -> np.ndarray:
    """(-1)^(number of 1-bits on the support) for every basis index."""
    signs = np.ones(2**n)
    for q in support:
        _, i1 = _bit_split(n, q)
        signs[i1] *= -1.0
    signs.setflags(write=False)
    return signs
