import numpy as np
import pytest

from twostage_vqa.sim import (
    ChannelMode,
    Circuit,
    DensityMatrix,
    Gate,
    NoiseSpec,
    SimulationError,
    StateVector,
    apply_circuit,
    apply_depolarizing,
    apply_gate,
    expectation_z,
    partial_trace,
    run_circuit_raw,
    sample_z,
    state_fidelity,
)

import oracles

BELL = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
GHZ3 = StateVector(3, np.array([1, 0, 0, 0, 0, 0, 0, 1]) / np.sqrt(2))
PLUS = StateVector(1, np.array([1, 1]) / np.sqrt(2))


def random_circuit(n, n_gates, rng):
    gates, params = [], []
    for _ in range(n_gates):
        kind = rng.choice(["RX", "RY", "RZ", "CNOT", "CZ", "CRZ"])
        if kind in ("RX", "RY", "RZ"):
            q = int(rng.integers(n))
            gates.append(Gate(kind, (q,), param_slot=len(params)))
            params.append(rng.uniform(-np.pi, np.pi))
        else:
            if n < 2:
                continue
            c, t = rng.choice(n, size=2, replace=False)
            if kind == "CRZ":
                gates.append(Gate(kind, (int(c), int(t)), param_slot=len(params)))
                params.append(rng.uniform(-np.pi, np.pi))
            else:
                gates.append(Gate(kind, (int(c), int(t))))
    return Circuit(n, tuple(gates)), np.array(params)


# --- types and invariants ----------------------------------------------------

def test_statevector_rejects_bad_norm():
    with pytest.raises(SimulationError):
        StateVector(1, np.array([1.0, 1.0]))


def test_statevector_rejects_bad_length():
    with pytest.raises(SimulationError):
        StateVector(2, np.array([1.0, 0.0]))


def test_density_matrix_invariants():
    with pytest.raises(SimulationError):
        DensityMatrix(1, np.array([[1.0, 0.5], [0.2, 0.0]]))  # not hermitian
    with pytest.raises(SimulationError):
        DensityMatrix(1, np.array([[0.7, 0.0], [0.0, 0.7]]))  # trace != 1
    with pytest.raises(SimulationError):
        DensityMatrix(1, np.array([[1.5, 0.0], [0.0, -0.5]]))  # not PSD


def test_gate_validation():
    with pytest.raises(SimulationError):
        Gate("RX", (0,))  # no angle at all
    with pytest.raises(SimulationError):
        Gate("RX", (0,), param_slot=0, fixed_angle=1.0)  # both
    with pytest.raises(SimulationError):
        Gate("CNOT", (1, 1))  # duplicate targets
    with pytest.raises(SimulationError):
        Gate("CNOT", (0, 1), fixed_angle=0.3)  # angle on a fixed gate
    with pytest.raises(SimulationError):
        Gate("HADAMARD", (0,))


def test_noise_spec_validation():
    NoiseSpec("depolarizing", 0.25)
    with pytest.raises(SimulationError):
        NoiseSpec("none", 0.1)
    with pytest.raises(SimulationError):
        NoiseSpec("depolarizing", 1.5)


def test_channel_mode_validation():
    ChannelMode.ideal()
    ChannelMode.with_shots(1)
    ChannelMode.noisy(0.01)
    with pytest.raises(SimulationError):
        ChannelMode("shots", shots=0)
    with pytest.raises(SimulationError):
        ChannelMode("ideal", noise=NoiseSpec("depolarizing", 0.1))


# --- apply_gate --------------------------------------------------------------

def test_ry_pi_is_bit_flip():
    out = apply_gate(StateVector.zero(1), Gate("RY", (0,), fixed_angle=np.pi))
    np.testing.assert_allclose(out.amplitudes, [0.0, 1.0], atol=1e-15)


def test_rz_leaves_zero_state_z_expectation():
    out = apply_gate(StateVector.zero(1), Gate("RZ", (0,), fixed_angle=0.731))
    assert abs(abs(out.amplitudes[0]) - 1.0) < 1e-12
    assert expectation_z(out, 0) == pytest.approx(1.0)


def test_cnot_builds_bell_state():
    plus0 = apply_gate(StateVector.zero(2), Gate("RY", (0,), fixed_angle=np.pi / 2))
    bell = apply_gate(plus0, Gate("CNOT", (0, 1)))
    np.testing.assert_allclose(bell.amplitudes, BELL.amplitudes, atol=1e-14)


def test_apply_gate_rejects_out_of_range_target():
    with pytest.raises(SimulationError):
        apply_gate(StateVector.zero(1), Gate("RX", (1,), fixed_angle=0.1))


def test_apply_gate_rejects_missing_param():
    with pytest.raises(SimulationError):
        apply_gate(StateVector.zero(1), Gate("RX", (0,), param_slot=3), np.array([0.1]))


def test_gate_application_matches_kronecker_oracle():
    rng = np.random.default_rng(11)
    for n in (1, 2, 3):
        for _ in range(25):
            circ, params = random_circuit(n, 8, rng)
            state = StateVector(n, oracles.random_state(n, rng))
            fast = apply_circuit(state, circ, params)
            brute = oracles.circuit_matrix(circ, params) @ state.amplitudes
            np.testing.assert_allclose(fast.amplitudes, brute, atol=1e-12)


def test_norm_preserved_over_random_sequences():
    rng = np.random.default_rng(5)
    for _ in range(20):
        circ, params = random_circuit(3, 30, rng)
        out = apply_circuit(StateVector.zero(3), circ, params)
        assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-10


def test_batched_evolution_matches_per_row():
    rng = np.random.default_rng(7)
    circ, params = random_circuit(3, 12, rng)
    batch = np.stack([params, params + 0.1, params - 0.2])
    out = run_circuit_raw(circ, batch)
    for b in range(3):
        single = run_circuit_raw(circ, batch[b])
        np.testing.assert_allclose(out[b], single, atol=1e-13)


# --- expectation_z / sampling ------------------------------------------------

def test_expectation_z_basis_states():
    assert expectation_z(StateVector.zero(1), 0) == pytest.approx(1.0)
    assert expectation_z(StateVector.computational(1, 1), 0) == pytest.approx(-1.0)
    assert expectation_z(BELL, 0) == pytest.approx(0.0, abs=1e-12)


def test_expectation_z_index_check():
    with pytest.raises(SimulationError):
        expectation_z(BELL, 2)


def test_sample_z_degenerate_cases():
    assert sample_z(StateVector.zero(1), 0, shots=17, seed=0) == 1.0
    assert sample_z(StateVector.computational(1, 1), 0, shots=17, seed=0) == -1.0


def test_sample_z_is_seed_deterministic():
    a = sample_z(PLUS, 0, shots=1000, seed=42)
    b = sample_z(PLUS, 0, shots=1000, seed=42)
    assert a == b
    assert abs(a) < 0.2  # ~6 standard errors of 1/sqrt(1000)


def test_sample_z_unbiased_against_expectation():
    # estimator consistency: mean over 100 seeds within 3 combined std errors
    state = apply_gate(StateVector.zero(1), Gate("RY", (0,), fixed_angle=0.9))
    z = expectation_z(state, 0)
    shots, n_seeds = 1000, 100
    means = [sample_z(state, 0, shots, seed=s) for s in range(n_seeds)]
    se = np.sqrt((1 - z**2) / (shots * n_seeds))
    assert abs(np.mean(means) - z) < 3 * se


def test_sample_z_rejects_zero_shots():
    with pytest.raises(SimulationError):
        sample_z(PLUS, 0, shots=0, seed=0)


# --- partial trace / fidelity ------------------------------------------------

def test_partial_trace_bell_is_maximally_mixed():
    rho = partial_trace(BELL, {0})
    np.testing.assert_allclose(rho.entries, np.eye(2) / 2, atol=1e-12)
    assert rho.purity() == pytest.approx(0.5, abs=1e-9)


def test_partial_trace_product_state_is_pure():
    state = apply_gate(StateVector.zero(2), Gate("RY", (1,), fixed_angle=np.pi / 2))
    rho = partial_trace(state, {1})
    np.testing.assert_allclose(rho.entries, np.full((2, 2), 0.5), atol=1e-12)
    assert rho.purity() == pytest.approx(1.0, abs=1e-9)


def test_partial_trace_ghz_pair():
    rho = partial_trace(GHZ3, {0, 1})
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[3, 3] = 0.5
    np.testing.assert_allclose(rho.entries, expected, atol=1e-12)
    # frozen value from the brute-force contraction oracle
    brute = oracles.partial_trace_brute(
        np.outer(GHZ3.amplitudes, GHZ3.amplitudes.conj()), 3, [0, 1]
    )
    np.testing.assert_allclose(rho.entries, brute, atol=1e-12)


def test_partial_trace_matches_brute_force_on_random_states():
    rng = np.random.default_rng(3)
    for n in (2, 3):
        for _ in range(10):
            amps = oracles.random_state(n, rng)
            rho_full = np.outer(amps, amps.conj())
            keep = sorted(rng.choice(n, size=int(rng.integers(1, n)), replace=False))
            ours = partial_trace(StateVector(n, amps), keep)
            brute = oracles.partial_trace_brute(rho_full, n, keep)
            np.testing.assert_allclose(ours.entries, brute, atol=1e-12)
            # and the density-matrix input path agrees with the vector path
            ours_dm = partial_trace(DensityMatrix(n, rho_full), keep)
            np.testing.assert_allclose(ours_dm.entries, ours.entries, atol=1e-12)


def test_partial_trace_rejects_bad_keep():
    with pytest.raises(SimulationError):
        partial_trace(BELL, set())
    with pytest.raises(SimulationError):
        partial_trace(BELL, {5})


def test_state_fidelity_basics():
    zero = StateVector.zero(1)
    assert state_fidelity(DensityMatrix.from_statevector(zero), zero) == pytest.approx(1.0)
    mixed = DensityMatrix(1, np.eye(2) / 2)
    assert state_fidelity(mixed, PLUS) == pytest.approx(0.5)
    assert state_fidelity(DensityMatrix.from_statevector(PLUS), zero) == pytest.approx(0.5)
    with pytest.raises(SimulationError):
        state_fidelity(mixed, BELL)


# --- depolarizing channel ----------------------------------------------------

def test_depolarizing_identity_at_p_zero():
    rho = DensityMatrix.from_statevector(PLUS)
    out = apply_depolarizing(rho, 0, 0.0)
    np.testing.assert_allclose(out.entries, rho.entries, atol=1e-15)


def test_depolarizing_fully_mixing_rate():
    rho = DensityMatrix.from_statevector(StateVector.zero(1))
    out = apply_depolarizing(rho, 0, 0.75)
    np.testing.assert_allclose(out.entries, np.eye(2) / 2, atol=1e-12)


def test_depolarizing_small_p_closed_form():
    rho = DensityMatrix.from_statevector(StateVector.zero(1))
    out = apply_depolarizing(rho, 0, 0.01)
    np.testing.assert_allclose(
        np.diag(out.entries).real, [1 - 2 * 0.01 / 3, 2 * 0.01 / 3], atol=1e-12
    )


def test_depolarizing_matches_pauli_sum_oracle():
    rng = np.random.default_rng(9)
    for n in (1, 2, 3):
        for p in (0.0, 0.01, 0.3, 1.0):
            rho = oracles.random_density(n, rng)
            q = int(rng.integers(n))
            ours = apply_depolarizing(DensityMatrix(n, rho), q, p).entries
            xq = oracles.embed(n, {q: oracles.X})
            yq = oracles.embed(n, {q: oracles.Y})
            zq = oracles.embed(n, {q: oracles.Z})
            brute = (1 - p) * rho + (p / 3) * (
                xq @ rho @ xq + yq @ rho @ yq + zq @ rho @ zq
            )
            np.testing.assert_allclose(ours, brute, atol=1e-12)


def test_depolarizing_preserves_invariants_for_all_p():
    rng = np.random.default_rng(21)
    rho = oracles.random_density(2, rng)
    for p in np.linspace(0, 1, 11):
        out = apply_depolarizing(DensityMatrix(2, rho), 1, p)
        assert abs(np.trace(out.entries).real - 1) < 1e-10  # constructor re-checked


def test_depolarizing_rejects_bad_p():
    rho = DensityMatrix.from_statevector(StateVector.zero(1))
    with pytest.raises(SimulationError):
        apply_depolarizing(rho, 0, 1.2)


# --- density-matrix circuit evolution -----------------------------------------

def test_density_evolution_matches_statevector():
    from twostage_vqa.sim import run_circuit_rho_raw

    rng = np.random.default_rng(31)
    for _ in range(10):
        circ, params = random_circuit(3, 15, rng)
        amps = run_circuit_raw(circ, params)
        rho = run_circuit_rho_raw(circ, params)
        np.testing.assert_allclose(rho, np.outer(amps, amps.conj()), atol=1e-12)


def test_density_evolution_with_layer_noise_matches_oracle():
    from twostage_vqa.sim import run_circuit_rho_raw

    rng = np.random.default_rng(33)
    n, p = 2, 0.05
    circ, params = random_circuit(n, 6, rng)
    circ = Circuit(n, circ.gates, layer_splits=(3, len(circ.gates)))
    rho = run_circuit_rho_raw(circ, params, noise=NoiseSpec("depolarizing", p))

    # oracle: dense unitaries, depolarize every qubit after each layer
    ref = np.zeros((4, 4), dtype=complex)
    ref[0, 0] = 1.0
    for chunk in (circ.gates[:3], circ.gates[3:]):
        for g in chunk:
            u = oracles.gate_matrix(n, g, params)
            ref = u @ ref @ u.conj().T
        for q in range(n):
            xq = oracles.embed(n, {q: oracles.X})
            yq = oracles.embed(n, {q: oracles.Y})
            zq = oracles.embed(n, {q: oracles.Z})
            ref = (1 - p) * ref + (p / 3) * (xq @ ref @ xq + yq @ ref @ yq + zq @ ref @ zq)
    np.testing.assert_allclose(rho, ref, atol=1e-12)


def test_batched_density_evolution_matches_per_row():
    from twostage_vqa.sim import run_circuit_rho_raw

    rng = np.random.default_rng(35)
    circ, params = random_circuit(3, 10, rng)
    batch = np.stack([params, params * 0.5])
    out = run_circuit_rho_raw(circ, batch, noise=NoiseSpec("depolarizing", 0.02))
    for b in range(2):
        single = run_circuit_rho_raw(circ, batch[b], noise=NoiseSpec("depolarizing", 0.02))
        np.testing.assert_allclose(out[b], single, atol=1e-13)
