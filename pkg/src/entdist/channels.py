"""Parameterized noise models for the two network nodes.

Covers per-attempt memory dephasing from the stochastic communication-qubit
reset, the deterministic per-attempt phase shift, local two-qubit gate
depolarization, readout misassignment, photon distinguishability and dark
counts.  All channel builders return Kraus sets that satisfy
sum K^dag K = I within 1e-9.

The per-node ``local_gate_error`` is the node's net local-operations
depolarizing budget: the value obtained by inverting the local Bell-state
benchmark fidelity F = (1 - p) + p/4.  It is spent as one two-qubit
depolarizing channel after each of the node's three conditional gates (two
in the memory swap, one in the distillation step) with per-gate strength
1 - (1 - p)^(1/3), so the benchmark circuit composes back to exactly p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .qstate import (
    DensityMatrix,
    I2,
    X,
    Y,
    Z,
    partial_trace,
    permute_qubits,
    tensor,
)

__all__ = [
    "NodeNoiseParams",
    "PhotonicNoiseParams",
    "dephasing_channel",
    "memory_storage_decay",
    "wall_time_decay",
    "depolarizing_channel",
    "apply_depolarizing",
    "per_gate_depolarizing",
    "readout_error",
    "raw_state_coherence_factor",
]


def _check_prob(value: float, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} = {value!r} violates the [0, 1] probability range")


@dataclass(frozen=True)
class NodeNoiseParams:
    """Physical constants of one network node.

    delta_omega
        State-dependent memory precession shift during the communication
        qubit reset, in rad/s.  Carried for provenance; the per-attempt
        dephasing it causes is summarized by ``memory_one_over_e_attempts``.
    phi_per_attempt
        Deterministic memory phase shift per entangling attempt, in rad.
    memory_one_over_e_attempts
        Attempt count at which a stored superposition state has decayed to
        1/e of its initial coherence.
    decay_exponent
        Exponent of the generalized-exponential decay law, default 1
        (plain exponential; per-attempt kicks then compose Markovianly).
    t2_star
        Intrinsic free-evolution dephasing time in seconds.  Unused unless
        ``use_t2_star`` is set, since attempt-count dephasing dominates.
    local_gate_error
        Net per-node two-qubit depolarizing budget (see module docstring).
    readout_fid_0 / readout_fid_1
        Probability that a true 0 (1) readout is reported as 0 (1).
    """

    delta_omega: float
    phi_per_attempt: float
    memory_one_over_e_attempts: float
    decay_exponent: float = 1.0
    t2_star: float = 1.0
    use_t2_star: bool = False
    local_gate_error: float = 0.0
    readout_fid_0: float = 1.0
    readout_fid_1: float = 1.0

    def __post_init__(self):
        if not self.memory_one_over_e_attempts > 0:
            raise ValueError(
                f"memory_one_over_e_attempts = {self.memory_one_over_e_attempts!r} "
                "must be positive")
        if not 0.0 < self.decay_exponent <= 4.0:
            raise ValueError(
                f"decay_exponent = {self.decay_exponent!r} outside (0, 4]")
        if not self.t2_star > 0:
            raise ValueError(f"t2_star = {self.t2_star!r} must be positive")
        _check_prob(self.local_gate_error, "local_gate_error")
        _check_prob(self.readout_fid_0, "readout_fid_0")
        _check_prob(self.readout_fid_1, "readout_fid_1")


@dataclass(frozen=True)
class PhotonicNoiseParams:
    """Photonic interference imperfections shared by both nodes.

    visibility
        Two-photon interference contrast; multiplies the coherence term of
        every generated raw state (once per copy, so twice per distilled
        pair).  ``visibility_exponent`` exposes the alternative sqrt(V)
        convention for sensitivity analysis; the shipped default is linear.
    dark_count_fraction
        Incoherent admixture of the spurious-click state |11><11| per raw
        state.  Default 0 (dark counts negligible).
    phase_drift_sigma
        Standard deviation, in rad, of the optical path phase jitter
        sampled independently for each generated raw state.
    """

    visibility: float = 1.0
    dark_count_fraction: float = 0.0
    phase_drift_sigma: float = 0.0
    visibility_exponent: float = 1.0

    def __post_init__(self):
        _check_prob(self.visibility, "visibility")
        if not 0.0 <= self.dark_count_fraction < 1.0:
            raise ValueError(
                f"dark_count_fraction = {self.dark_count_fraction!r} outside [0, 1)")
        if self.phase_drift_sigma < 0:
            raise ValueError(
                f"phase_drift_sigma = {self.phase_drift_sigma!r} must be >= 0")
        if not 0.0 < self.visibility_exponent <= 2.0:
            raise ValueError(
                f"visibility_exponent = {self.visibility_exponent!r} outside (0, 2]")


def dephasing_channel(lam: float) -> List[np.ndarray]:
    """Single-qubit dephasing that multiplies off-diagonals by (1 - lam).

    Kraus form {sqrt(1-q) I, sqrt(q) Z} with q = lam/2, so lam = 0 is the
    identity channel and lam = 1 erases coherence completely.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"dephasing strength lam = {lam!r} outside [0, 1]")
    q = 0.5 * lam
    return [np.sqrt(1.0 - q) * I2, np.sqrt(q) * Z]


def memory_storage_decay(n_attempts: int, params: NodeNoiseParams) -> float:
    """Dephasing strength after n entangling attempts.

    lam(n) = 1 - exp(-(n / N0)^a) with N0 the 1/e attempt constant and a the
    decay exponent.  Monotone nondecreasing with lam(0) = 0; for a = 1 it
    equals the composition of n independent single-attempt channels.
    """
    if n_attempts < 0:
        raise ValueError(f"attempt count {n_attempts} must be >= 0")
    if n_attempts == 0:
        return 0.0
    ratio = n_attempts / params.memory_one_over_e_attempts
    return float(1.0 - np.exp(-(ratio ** params.decay_exponent)))


def wall_time_decay(elapsed: float, params: NodeNoiseParams) -> float:
    """Optional Gaussian free-evolution dephasing, 1 - exp(-(t/T2*)^2)."""
    if elapsed < 0:
        raise ValueError(f"elapsed time {elapsed!r} must be >= 0")
    return float(1.0 - np.exp(-((elapsed / params.t2_star) ** 2)))


_PAULIS_1Q = (I2, X, Y, Z)


def depolarizing_channel(p: float, n_qubits: int) -> List[np.ndarray]:
    """Kraus set for rho -> (1 - p) rho + p I / 2^n on one or two qubits."""
    _check_prob(p, "depolarizing probability")
    if n_qubits == 1:
        w = p / 4.0
        return [np.sqrt(1.0 - 3.0 * w) * I2] + [np.sqrt(w) * P for P in (X, Y, Z)]
    if n_qubits == 2:
        w = p / 16.0
        ops = [np.sqrt(1.0 - 15.0 * w) * np.kron(I2, I2)]
        for i, a in enumerate(_PAULIS_1Q):
            for j, b in enumerate(_PAULIS_1Q):
                if i == 0 and j == 0:
                    continue
                ops.append(np.sqrt(w) * np.kron(a, b))
        return ops
    raise ValueError(f"depolarizing channel supports 1 or 2 qubits, got {n_qubits}")


def apply_depolarizing(rho: DensityMatrix, p: float,
                       targets: Tuple[int, ...]) -> DensityMatrix:
    """Closed-form depolarizing on a qubit subset.

    Equivalent to applying :func:`depolarizing_channel` through the Kraus
    sum (the equivalence is tested), but evaluated as
    (1-p) rho + p (I/2^k) (x) tr_targets(rho), which is much cheaper than
    the 16-operator sum on the hot path.
    """
    _check_prob(p, "depolarizing probability")
    if p == 0.0:
        return rho
    n = rho.n_qubits
    targets = tuple(int(t) for t in targets)
    k = len(targets)
    if k == n:
        mixed = np.eye(2 ** n, dtype=complex) / 2 ** n
        return DensityMatrix((1.0 - p) * rho.mat + p * mixed, check=False)
    rest = tuple(q for q in range(n) if q not in targets)
    marginal = partial_trace(rho, rest)
    mixed = tensor(DensityMatrix.maximally_mixed(k), marginal)
    # mixed is ordered (targets..., rest...); permute back to register order
    order = targets + rest
    inverse = tuple(order.index(q) for q in range(n))
    mixed = permute_qubits(mixed, inverse)
    return DensityMatrix((1.0 - p) * rho.mat + p * mixed.mat, check=False)


def per_gate_depolarizing(p_node: float, n_gates: int = 3) -> float:
    """Split a node's net depolarizing budget evenly over its conditional gates."""
    _check_prob(p_node, "local_gate_error")
    if p_node == 0.0:
        return 0.0
    return float(1.0 - (1.0 - p_node) ** (1.0 / n_gates))


def readout_error(outcome: int, params: NodeNoiseParams, rng) -> int:
    """Report ``outcome`` through the misassignment model.

    A true 0 is reported correctly with probability readout_fid_0, a true 1
    with probability readout_fid_1.
    """
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    fid = params.readout_fid_0 if outcome == 0 else params.readout_fid_1
    if fid >= 1.0:
        return outcome
    return outcome if rng.random() < fid else 1 - outcome


def raw_state_coherence_factor(params: PhotonicNoiseParams, rng) -> Tuple[float, float]:
    """Coherence magnitude and sampled phase jitter for one raw state.

    The magnitude V^e (e the configured visibility exponent, default 1)
    multiplies the |01><10| coherence; the jitter is a zero-mean Gaussian
    draw with standard deviation ``phase_drift_sigma``.
    """
    magnitude = float(params.visibility ** params.visibility_exponent)
    jitter = float(rng.normal(0.0, params.phase_drift_sigma)) if params.phase_drift_sigma > 0 else 0.0
    return magnitude, jitter
