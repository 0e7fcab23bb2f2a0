import numpy as np
import pytest

from twostage_vqa.observables import ObservableSpec
from twostage_vqa.sim import SimulationError, StateVector

import oracles


def test_validation():
    with pytest.raises(SimulationError):
        ObservableSpec(())
    with pytest.raises(SimulationError):
        ObservableSpec((("ZQ", 1.0),))
    with pytest.raises(SimulationError):
        ObservableSpec((("ZI", 1.0), ("Z", 1.0)))  # mixed widths
    with pytest.raises(SimulationError):
        ObservableSpec((("ZI", np.inf),))


def test_support_and_locality():
    obs = ObservableSpec((("ZIZ", 1.0), ("IXI", 0.5)))
    assert obs.support == {0, 1, 2}
    assert obs.locality == 2
    assert ObservableSpec.single_z(4, 2).locality == 1
    assert ObservableSpec.global_z(4).locality == 4


def test_expectation_matches_dense_oracle():
    rng = np.random.default_rng(17)
    for n in (1, 2, 3):
        for _ in range(10):
            amps = oracles.random_state(n, rng)
            strings = ["".join(rng.choice(list("IXYZ"), size=n)) for _ in range(3)]
            obs = ObservableSpec(tuple((s, float(rng.normal())) for s in strings))
            ours = obs.expectation(StateVector(n, amps))
            brute = np.real(amps.conj() @ obs.matrix() @ amps)
            assert ours == pytest.approx(brute, abs=1e-12)


def test_density_expectation_matches_dense_oracle():
    rng = np.random.default_rng(19)
    for n in (1, 2, 3):
        rho = oracles.random_density(n, rng)
        obs = ObservableSpec((("Z" * n, 0.7), ("X" + "I" * (n - 1), -0.3)))
        ours = float(obs.expectation_rho_batch(rho))
        brute = np.real(np.trace(obs.matrix() @ rho))
        assert ours == pytest.approx(brute, abs=1e-12)


def test_bell_state_zz_plus_x_energy():
    bell = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
    obs = ObservableSpec((("ZZ", 1.0), ("XI", 0.5)))
    assert obs.expectation(bell) == pytest.approx(1.0, abs=1e-12)


def test_sampled_expectation_is_consistent():
    rng = np.random.default_rng(23)
    amps = oracles.random_state(2, rng)
    obs = ObservableSpec((("ZI", 1.0), ("XZ", 0.5), ("YI", -0.25)))
    exact = obs.expectation(StateVector(2, amps))
    estimates = [
        float(obs.sample_expectation_batch(amps, 2000, np.random.default_rng(s)))
        for s in range(50)
    ]
    # crude bound: per-term variance <= coeff^2; combined standard error below
    se = np.sqrt((1.0 + 0.25 + 0.0625) / (2000 * 50))
    assert abs(np.mean(estimates) - exact) < 4 * se


def test_sampled_expectation_exact_for_definite_state():
    obs = ObservableSpec.single_z(2, 0)
    amps = StateVector.zero(2).amplitudes
    est = obs.sample_expectation_batch(amps, 50, np.random.default_rng(0))
    assert float(est) == 1.0
