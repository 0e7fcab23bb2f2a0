"""Independent brute-force oracles used by the test suite.

Everything here is built from explicit Kronecker products / dense matrices
and never touches the package's fast index kernels, so agreement between the
two is a real check.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def rotation(kind, theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]])
    if kind == "RZ":
        return np.array([[np.exp(-1j * theta / 2), 0], [0, np.exp(1j * theta / 2)]])
    raise ValueError(kind)


def embed(n, ops):
    """Kronecker product with qubit 0 as the most significant factor."""
    m = np.eye(1, dtype=complex)
    for q in range(n):
        m = np.kron(m, ops.get(q, I2))
    return m


def gate_matrix(n, gate, params=None):
    """Full 2^n x 2^n unitary for one package Gate."""
    theta = None
    if gate.fixed_angle is not None:
        theta = gate.fixed_angle
    elif gate.param_slot is not None:
        theta = params[gate.param_slot]
    if gate.kind in ("RX", "RY", "RZ"):
        return embed(n, {gate.targets[0]: rotation(gate.kind, theta)})
    c, t = gate.targets
    if gate.kind == "CNOT":
        return embed(n, {c: P0}) + embed(n, {c: P1, t: X})
    if gate.kind == "CZ":
        return embed(n, {c: P0}) + embed(n, {c: P1, t: Z})
    if gate.kind == "CRZ":
        return embed(n, {c: P0}) + embed(n, {c: P1, t: rotation("RZ", theta)})
    raise ValueError(gate.kind)


def circuit_matrix(circuit, params=None):
    m = np.eye(2**circuit.n_qubits, dtype=complex)
    for g in circuit.gates:
        m = gate_matrix(circuit.n_qubits, g, params) @ m
    return m


def partial_trace_brute(rho, n, keep):
    """Sum over environment basis states, one matrix element at a time."""
    keep = sorted(keep)
    drop = [q for q in range(n) if q not in keep]
    dk, de = 2 ** len(keep), 2 ** len(drop)
    out = np.zeros((dk, dk), dtype=complex)

    def full_index(kbits, ebits):
        bits = [0] * n
        for q, b in zip(keep, kbits):
            bits[q] = b
        for q, b in zip(drop, ebits):
            bits[q] = b
        idx = 0
        for b in bits:
            idx = (idx << 1) | b
        return idx

    def to_bits(x, width):
        return [(x >> (width - 1 - i)) & 1 for i in range(width)]

    for a in range(dk):
        for b in range(dk):
            for e in range(de):
                ia = full_index(to_bits(a, len(keep)), to_bits(e, len(drop)))
                ib = full_index(to_bits(b, len(keep)), to_bits(e, len(drop)))
                out[a, b] += rho[ia, ib]
    return out


def finite_difference_gradient(f, params, h=1e-5):
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for j in range(len(params)):
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        grad[j] = (f(up) - f(down)) / (2 * h)
    return grad


def random_state(n, rng):
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return amps / np.linalg.norm(amps)


def random_density(n, rng, rank=None):
    d = 2**n
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)
