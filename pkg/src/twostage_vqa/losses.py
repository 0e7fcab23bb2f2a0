"""Objective functions: the convex local-observable loss, the ridge-damped
linearized surrogate and its solver, the nonconvex cloning loss, and the
Hamiltonian energy loss.

The linearization turns the cloning surrogate into a ridge least-squares
problem in the update step: with Z_j(theta) ~ Z_j(theta0) + grad_Z_j . dtheta
and b = r = 1 - Z(theta0), the damped normal equations
(Phi^T Phi + lambda I) dtheta = Phi^T r give a Gauss-Newton style move whose
Hessian 2(Phi^T Phi + lambda I) is PSD by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import count

import numpy as np

from .ansatz import expectation_value, parameter_shift_gradient
from .cloning import CloningSetup, clone_fidelity_batch, loss_values
from .observables import ObservableSpec
from .sim import ChannelMode, Circuit, run_circuit_raw, run_circuit_rho_raw
from .util import derive_rng


class LossError(ValueError):
    """Raised on malformed loss specifications or unsolvable systems."""


@dataclass(frozen=True)
class ConvexLossSpec:
    """Local observables O_i with target expectations b_i and ridge weight."""

    observables: tuple[ObservableSpec, ...]
    targets: tuple[float, ...]
    ridge_lambda: float = 1e-2

    def __post_init__(self):
        obs = tuple(self.observables)
        targets = tuple(float(t) for t in self.targets)
        if len(obs) != len(targets) or not obs:
            raise LossError("observables and targets must pair up (non-empty)")
        if any(not np.isfinite(t) for t in targets):
            raise LossError("targets must be finite")
        for o in obs:
            if o.locality > 2:
                raise LossError("convex stage requires k-local observables with k <= 2")
        if self.ridge_lambda < 0:
            raise LossError("ridge_lambda must be >= 0")
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True)
class LinearizedSystem:
    """First-order model Phi * dtheta ~ r of the clone observables around
    theta0, with targets b = r = 1 - Z(theta0)."""

    jacobian: np.ndarray
    residual: np.ndarray
    targets: np.ndarray
    expansion_point: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.jacobian, dtype=float)
        r = np.asarray(self.residual, dtype=float)
        b = np.asarray(self.targets, dtype=float)
        theta0 = np.asarray(self.expansion_point, dtype=float)
        if phi.ndim != 2 or r.ndim != 1 or phi.shape[0] != r.shape[0]:
            raise LossError("jacobian rows must match residual length")
        if b.shape != r.shape or not np.allclose(b, r, atol=1e-12):
            raise LossError("targets must equal the residual (b = r = 1 - Z)")
        if phi.shape[1] != theta0.shape[0]:
            raise LossError("jacobian columns must match the expansion point")
        object.__setattr__(self, "jacobian", phi)
        object.__setattr__(self, "residual", r)
        object.__setattr__(self, "targets", b)
        object.__setattr__(self, "expansion_point", theta0)


# ---------------------------------------------------------------------------
# generic observable losses
# ---------------------------------------------------------------------------

def _expectations(params, spec, circuit, channel, seed):
    channel = channel or ChannelMode.ideal()
    p = np.asarray(params, dtype=float)[None, :]
    if channel.kind == "noisy":
        rho = run_circuit_rho_raw(circuit, p, noise=channel.noise)
        return np.array([float(o.expectation_rho_batch(rho)[0]) for o in spec.observables])
    amps = run_circuit_raw(circuit, p)
    if channel.kind == "shots":
        rng = derive_rng(seed)
        return np.array(
            [float(o.sample_expectation_batch(amps, channel.shots, rng)[0]) for o in spec.observables]
        )
    return np.array([float(o.expectation_batch(amps)[0]) for o in spec.observables])


def convex_loss(
    params: np.ndarray,
    spec: ConvexLossSpec,
    circuit: Circuit,
    channel: ChannelMode | None = None,
    seed: int = 0,
) -> float:
    """sum_i (<O_i> - b_i)^2; zero exactly when every expectation hits target."""
    for o in spec.observables:
        if o.n_qubits != circuit.n_qubits:
            raise LossError("observable support outside the circuit register")
    vals = _expectations(params, spec, circuit, channel, seed)
    return float(np.sum((vals - np.asarray(spec.targets)) ** 2))


def convex_loss_value_and_grad(
    params: np.ndarray,
    spec: ConvexLossSpec,
    circuit: Circuit,
    channel: ChannelMode | None = None,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Loss and exact gradient via one batched parameter-shift Jacobian."""
    channel = channel or ChannelMode.ideal()
    targets = np.asarray(spec.targets)
    calls = count()

    def evaluate(batch):
        tag = next(calls)
        if channel.kind == "noisy":
            rho = run_circuit_rho_raw(circuit, batch, noise=channel.noise)
            return np.stack([o.expectation_rho_batch(rho) for o in spec.observables], axis=-1)
        amps = run_circuit_raw(circuit, batch)
        if channel.kind == "shots":
            rng = derive_rng(seed, tag)
            return np.stack(
                [o.sample_expectation_batch(amps, channel.shots, rng) for o in spec.observables],
                axis=-1,
            )
        return np.stack([o.expectation_batch(amps) for o in spec.observables], axis=-1)

    base = evaluate(np.asarray(params, dtype=float)[None, :])[0]
    jac = parameter_shift_gradient(circuit, params, evaluate)  # (dim, n_obs)
    residual = base - targets
    return float(np.sum(residual**2)), 2.0 * (jac @ residual)


def energy_loss(
    params: np.ndarray,
    hamiltonian: ObservableSpec,
    circuit: Circuit,
    channel: ChannelMode | None = None,
    seed: int = 0,
) -> float:
    """<psi(theta)| H |psi(theta)>, bounded below by H's smallest eigenvalue."""
    return expectation_value(circuit, params, hamiltonian, channel, seed)


# ---------------------------------------------------------------------------
# ridge-regularized least squares
# ---------------------------------------------------------------------------

def ridge_objective(w: np.ndarray, phi: np.ndarray, b: np.ndarray, lam: float) -> float:
    """f(w) = ||Phi w - b||^2 + lambda ||w||^2."""
    w = np.asarray(w, dtype=float)
    phi = np.asarray(phi, dtype=float)
    b = np.asarray(b, dtype=float)
    if phi.shape[0] != b.shape[0] or phi.shape[1] != w.shape[0]:
        raise LossError("inconsistent ridge dimensions")
    if lam < 0:
        raise LossError("lambda must be >= 0")
    resid = phi @ w - b
    return float(resid @ resid + lam * (w @ w))


def ridge_solve(system: LinearizedSystem, lam: float) -> np.ndarray:
    """Solve (Phi^T Phi + lambda I) dtheta = Phi^T r."""
    phi, r = system.jacobian, system.residual
    normal = phi.T @ phi + lam * np.eye(phi.shape[1])
    rhs = phi.T @ r
    try:
        delta = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as exc:
        raise LossError("singular normal equations; use lambda > 0") from exc
    scale = max(np.linalg.norm(rhs), 1.0)
    if np.linalg.norm(normal @ delta - rhs) > 1e-10 * scale:
        raise LossError("normal equations too ill-conditioned; increase lambda")
    return delta


def hessian_psd_check(phi: np.ndarray, lam: float) -> tuple[bool, float]:
    """(is_psd, min eigenvalue) of the surrogate Hessian 2(Phi^T Phi + lam I)."""
    phi = np.asarray(phi, dtype=float)
    hess = 2.0 * (phi.T @ phi + lam * np.eye(phi.shape[1]))
    min_eig = float(np.linalg.eigvalsh(hess)[0])
    return min_eig >= -1e-10, min_eig


# ---------------------------------------------------------------------------
# cloning losses
# ---------------------------------------------------------------------------

def nonconvex_cloning_loss(params: np.ndarray, setup: CloningSetup, seed: int = 0) -> float:
    """L_nc = mean over S of [(1 - F_B)^2 + (1 - F_E)^2]; in [0, 2]."""
    fid = clone_fidelity_batch(np.asarray(params, dtype=float)[None, :], setup, seed=seed)[0]
    return loss_values(fid)[0]


def convex_cloning_surrogate(params: np.ndarray, setup: CloningSetup, seed: int = 0) -> float:
    """L_cx = mean over S of [(1 - Z_B)^2 + (1 - Z_E)^2] with Z = 2F - 1."""
    fid = clone_fidelity_batch(np.asarray(params, dtype=float)[None, :], setup, seed=seed)[0]
    return loss_values(fid)[1]


def build_linearized_system(
    params: np.ndarray, setup: CloningSetup, seed: int = 0
) -> LinearizedSystem:
    """Linearize the clone observables Z_j around ``params``.

    Rows are ordered (state, party) with parties (Bob, Eve) fastest; row j of
    the Jacobian is the parameter-shift gradient of Z_j = 2 F_j - 1.
    """
    theta0 = np.asarray(params, dtype=float)
    circ = setup.evaluation_circuit()
    calls = count()

    def evaluate(batch):
        return clone_fidelity_batch(batch, setup, seed=seed, tag=next(calls)).reshape(len(batch), 8)

    base_f = evaluate(theta0[None, :])[0]
    jac_f = parameter_shift_gradient(circ, theta0, evaluate, dim=setup.dim)  # (dim, 8)
    z = 2.0 * base_f - 1.0
    b = 1.0 - z
    phi = 2.0 * jac_f.T  # rows grad Z_j
    return LinearizedSystem(jacobian=phi, residual=b, targets=b, expansion_point=theta0)
