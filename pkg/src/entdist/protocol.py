"""Executable model of the four-step two-node distillation protocol.

Register layout is fixed as (comm A, mem A, comm B, mem B) = qubits
(0, 1, 2, 3).  One trial runs:

1. heralded generation of a raw entangled state on the communication
   qubits (truncated-geometric attempt sampling),
2. swap onto the memories with the compiled two-gate transfer, which
   leaves each memory in the Hadamard-rotated frame,
3. a second generation round while the memories store copy one, with
   per-attempt deterministic phase, phase feedback and stochastic
   dephasing,
4. the local distillation gates, communication-qubit readout and
   heralding on the (0, 0) readout pattern.

The swap maps communication energy eigenstates onto memory superposition
states (|0> -> |+X>), so the stored copy carries a Hadamard byproduct on
each memory.  The byproduct is not undone in-protocol; analysis undoes it
when computing Bell fidelities.  The distillation conditional gate flips
the communication qubit on the memory |-X> component and is followed by a
bit flip, so a (0, 0) readout keeps exactly the cross components of the
two copies.  On that branch the internal optical phases of the copies
cancel, which makes the protocol immune to correlated raw-state dephasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .channels import (
    NodeNoiseParams,
    PhotonicNoiseParams,
    apply_depolarizing,
    dephasing_channel,
    memory_storage_decay,
    per_gate_depolarizing,
    raw_state_coherence_factor,
    readout_error,
    wall_time_decay,
)
from .qstate import (
    CNOT,
    DensityMatrix,
    H,
    PureState,
    X,
    apply_gate,
    apply_kraus,
    basis_state,
    measure_qubit,
    partial_trace,
    permute_qubits,
    rz,
    tensor,
)

__all__ = [
    "ProtocolConfig",
    "PhaseEnvironment",
    "HeraldSignature",
    "TrialRecord",
    "COMM_A",
    "MEM_A",
    "COMM_B",
    "MEM_B",
    "prepare_theta",
    "raw_state_matrix",
    "generate_raw_state",
    "sample_success",
    "swap_to_memory",
    "storage_and_feedback",
    "distill_step",
    "run_trial",
    "trials_to_tsv",
    "parse_trials_tsv",
]

COMM_A, MEM_A, COMM_B, MEM_B = 0, 1, 2, 3

_SIGNATURE_POLICIES = ("plus", "minus", "both")
_PHASE_MODES = ("random", "fixed")


@dataclass(frozen=True)
class ProtocolConfig:
    """Full parameter set for one protocol configuration.

    ``theta`` controls the separable admixture of the raw states (weight
    sin^2 theta) and with it the per-attempt success probability
    p_det * sin^2 theta.  ``n1_max`` and ``n2_max`` bound the two
    generation rounds; exhausting either bound aborts the trial.
    ``signature_policy`` selects which detector-signature pairs occur:
    'both' samples each signature independently, 'plus' conditions on
    same-detector pairs, 'minus' on different-detector pairs.
    """

    theta: float
    p_det: float
    node_a: NodeNoiseParams
    node_b: NodeNoiseParams
    photonics: PhotonicNoiseParams = field(default_factory=PhotonicNoiseParams)
    n1_max: int = 1000
    n2_max: int = 50
    signature_policy: str = "both"
    attempt_duration: float = 6e-6
    local_ops_duration: float = 1e-3
    feedback_enabled: bool = True
    path_phase_mode: str = "random"
    path_phase: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5 * math.pi:
            raise ValueError(f"theta = {self.theta!r} outside the open interval (0, pi/2)")
        if not 0.0 < self.p_det <= 1.0:
            raise ValueError(f"p_det = {self.p_det!r} outside (0, 1]")
        if self.n1_max < 1 or self.n2_max < 1:
            raise ValueError("attempt caps n1_max and n2_max must be >= 1")
        if self.attempt_duration < 0 or self.local_ops_duration < 0:
            raise ValueError("durations must be >= 0")
        if self.signature_policy not in _SIGNATURE_POLICIES:
            raise ValueError(
                f"signature_policy = {self.signature_policy!r} not in {_SIGNATURE_POLICIES}")
        if self.path_phase_mode not in _PHASE_MODES:
            raise ValueError(
                f"path_phase_mode = {self.path_phase_mode!r} not in {_PHASE_MODES}")

    @property
    def p_per_attempt(self) -> float:
        return self.p_det * math.sin(self.theta) ** 2


@dataclass(frozen=True)
class PhaseEnvironment:
    """Optical path phase of the current run, wrapped to [0, 2 pi)."""

    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))


@dataclass(frozen=True)
class HeraldSignature:
    """Detector signatures (+1 or -1) of the two heralded raw states."""

    sign1: int
    sign2: int

    def __post_init__(self):
        if self.sign1 not in (+1, -1) or self.sign2 not in (+1, -1):
            raise ValueError("signature signs must be +1 or -1")

    @property
    def pair_sign(self) -> int:
        """+1 when both photons hit the same output port, else -1."""
        return self.sign1 * self.sign2


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one protocol trial; failures are outcomes, not errors."""

    n1: int
    n2: int
    signatures: Optional[HeraldSignature]
    readout_a: Optional[int]
    readout_b: Optional[int]
    heralded: bool
    elapsed_time: float
    final_memory_state: Optional[DensityMatrix] = None
    branch_prob: Optional[float] = None

    def __post_init__(self):
        if self.heralded and (self.readout_a, self.readout_b) != (0, 0):
            raise ValueError("heralded records require the (0, 0) readout pattern")


# --- state preparation ----------------------------------------------------

def prepare_theta(theta: float) -> PureState:
    """Communication-qubit initial state sin(theta)|0> - i cos(theta)|1>."""
    if not 0.0 < theta < 0.5 * math.pi:
        raise ValueError(f"theta = {theta!r} outside the open interval (0, pi/2)")
    return PureState([math.sin(theta), -1j * math.cos(theta)])


def raw_state_matrix(theta: float, sign: int, phi: float,
                     coherence: float = 1.0,
                     dark_fraction: float = 0.0) -> np.ndarray:
    """4x4 raw-state matrix on the two communication qubits.

    (1 - sin^2 theta) |Psi^sign_phi><Psi^sign_phi| + sin^2 theta |00><00|,
    with the |01><10| coherence scaled by ``coherence`` and an optional
    incoherent dark-count admixture of |11><11|.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    s = math.sin(theta) ** 2
    w = 1.0 - s
    mat = np.zeros((4, 4), dtype=complex)
    mat[0, 0] = s
    mat[1, 1] = 0.5 * w
    mat[2, 2] = 0.5 * w
    coh = 0.5 * w * coherence * sign * np.exp(-1j * phi)
    mat[1, 2] = coh
    mat[2, 1] = np.conj(coh)
    if dark_fraction:
        mat *= 1.0 - dark_fraction
        mat[3, 3] += dark_fraction
    return mat


def generate_raw_state(cfg: ProtocolConfig, env: PhaseEnvironment, sign: int,
                       rng) -> DensityMatrix:
    """One heralded raw state with visibility, phase jitter and dark counts."""
    magnitude, jitter = raw_state_coherence_factor(cfg.photonics, rng)
    mat = raw_state_matrix(cfg.theta, sign, env.phi + jitter,
                           coherence=magnitude,
                           dark_fraction=cfg.photonics.dark_count_fraction)
    return DensityMatrix(mat, check=False)


def sample_success(p_per_attempt: float, cap: int, rng) -> Optional[int]:
    """Attempt index of the first success, or None when the cap is exhausted."""
    if not 0.0 < p_per_attempt <= 1.0:
        raise ValueError(f"per-attempt probability {p_per_attempt!r} outside (0, 1]")
    if cap < 1:
        raise ValueError(f"cap {cap} must be >= 1")
    n = int(rng.geometric(p_per_attempt))
    return n if n <= cap else None


# --- protocol steps -------------------------------------------------------

_MEM_PAIR_ZERO = basis_state("00").to_density()


def _interleave(comm_pair: DensityMatrix, mem_pair: DensityMatrix) -> DensityMatrix:
    """Compose (comm A, comm B) x (mem A, mem B) into register order."""
    return permute_qubits(tensor(comm_pair, mem_pair), (0, 2, 1, 3))


def _node_qubits(rho: DensityMatrix, node: str) -> Tuple[int, int]:
    node = node.lower()
    if node not in ("a", "b"):
        raise ValueError(f"node must be 'a' or 'b', got {node!r}")
    if rho.n_qubits == 2:
        return 0, 1
    if rho.n_qubits == 4:
        return (COMM_A, MEM_A) if node == "a" else (COMM_B, MEM_B)
    raise ValueError("swap expects a 2-qubit pair or the 4-qubit register")


def swap_to_memory(rho: DensityMatrix, node: str, noise: NodeNoiseParams) -> DensityMatrix:
    """Two-gate state transfer from communication onto memory qubit.

    Requires the memory in |0>; leaves the communication qubit reusable in
    |0> and the memory holding the Hadamard-rotated communication state
    (|0> -> |+X>, |1> -> |-X>).  Each conditional gate is followed by its
    share of the node's calibrated depolarizing budget.
    """
    comm, mem = _node_qubits(rho, node)
    mem_marginal = partial_trace(rho, (mem,))
    if abs(mem_marginal.mat[0, 0].real - 1.0) > 1e-9:
        raise ValueError(f"memory qubit of node {node!r} is not initialized to |0>")
    pg = per_gate_depolarizing(noise.local_gate_error)
    rho = apply_gate(rho, CNOT, (comm, mem))
    rho = apply_depolarizing(rho, pg, (comm, mem))
    rho = apply_gate(rho, CNOT, (mem, comm))
    rho = apply_depolarizing(rho, pg, (comm, mem))
    return apply_gate(rho, H, (mem,))


def storage_and_feedback(rho: DensityMatrix, n_attempts: int,
                         params: NodeNoiseParams, qubit: int, *,
                         feedback: bool = True,
                         attempt_duration: float = 0.0) -> DensityMatrix:
    """Memory evolution over ``n_attempts`` entangling attempts.

    The deterministic per-attempt rotation R_z(phi)^n and the compensating
    feedback R_z(-n phi) cancel exactly when feedback is enabled (both are
    diagonal and commute with the dephasing), so only the stochastic
    dephasing of strength lam(n) remains.  With feedback disabled the net
    rotation R_z(n phi) is left in place.
    """
    if n_attempts < 0:
        raise ValueError(f"attempt count {n_attempts} must be >= 0")
    if n_attempts == 0:
        return rho
    if not feedback:
        rho = apply_gate(rho, rz(params.phi_per_attempt * n_attempts), (qubit,))
    lam = memory_storage_decay(n_attempts, params)
    if params.use_t2_star and attempt_duration > 0:
        lam_t2 = wall_time_decay(n_attempts * attempt_duration, params)
        lam = 1.0 - (1.0 - lam) * (1.0 - lam_t2)
    if lam > 0.0:
        rho = apply_kraus(rho, dephasing_channel(lam), (qubit,))
    return rho


def distill_step(rho4: DensityMatrix, node_a: NodeNoiseParams,
                 node_b: NodeNoiseParams, rng
                 ) -> Tuple[int, int, DensityMatrix, float]:
    """Local conditional gates, communication readout, memory projection.

    Returns (reported readout A, reported readout B, renormalized memory
    state, true branch probability of the sampled readout pair).  Readout
    misassignment flips only the reported values; the projection follows
    the true outcomes.
    """
    if rho4.n_qubits != 4:
        raise ValueError("distillation expects the 4-qubit register")
    for comm, mem, noise in ((COMM_A, MEM_A, node_a), (COMM_B, MEM_B, node_b)):
        rho4 = apply_gate(rho4, H, (mem,))
        rho4 = apply_gate(rho4, CNOT, (mem, comm))
        rho4 = apply_depolarizing(rho4, per_gate_depolarizing(noise.local_gate_error),
                                  (comm, mem))
        rho4 = apply_gate(rho4, H, (mem,))
        rho4 = apply_gate(rho4, X, (comm,))
    true_a, rho4, p_a = measure_qubit(rho4, COMM_A, rng)
    true_b, rho4, p_b = measure_qubit(rho4, COMM_B, rng)
    memories = partial_trace(rho4, (MEM_A, MEM_B))
    reported_a = readout_error(true_a, node_a, rng)
    reported_b = readout_error(true_b, node_b, rng)
    return reported_a, reported_b, memories, p_a * p_b


def _draw_sign(rng) -> int:
    return +1 if rng.random() < 0.5 else -1


def _signature_pair(policy: str, rng) -> HeraldSignature:
    sign1 = _draw_sign(rng)
    if policy == "both":
        sign2 = _draw_sign(rng)
    elif policy == "plus":
        sign2 = sign1
    else:
        sign2 = -sign1
    return HeraldSignature(sign1, sign2)


def run_trial(cfg: ProtocolConfig, rng) -> TrialRecord:
    """One full protocol trial.

    Draw order (fixed for reproducibility): path phase, attempt counts for
    both rounds, signatures, one raw state per round (each consumes one
    jitter draw when phase drift is configured), the two communication
    readouts, then the two readout-error draws.  Memory initialization is
    part of the trial, so the two-gate swap precondition always holds.
    Exhausting a generation round yields a non-heralded record whose
    elapsed time counts the attempts spent; completed trials add the local
    operations overhead.
    """
    t_att = cfg.attempt_duration
    phi = rng.uniform(0.0, 2.0 * math.pi) if cfg.path_phase_mode == "random" else cfg.path_phase
    env = PhaseEnvironment(phi)
    p = cfg.p_per_attempt
    n1 = sample_success(p, cfg.n1_max, rng)
    if n1 is None:
        return TrialRecord(n1=cfg.n1_max, n2=0, signatures=None, readout_a=None,
                           readout_b=None, heralded=False,
                           elapsed_time=cfg.n1_max * t_att)
    n2 = sample_success(p, cfg.n2_max, rng)
    if n2 is None:
        return TrialRecord(n1=n1, n2=cfg.n2_max, signatures=None, readout_a=None,
                           readout_b=None, heralded=False,
                           elapsed_time=(n1 + cfg.n2_max) * t_att)
    sigs = _signature_pair(cfg.signature_policy, rng)

    raw1 = generate_raw_state(cfg, env, sigs.sign1, rng)
    rho = _interleave(raw1, _MEM_PAIR_ZERO)
    rho = swap_to_memory(rho, "a", cfg.node_a)
    rho = swap_to_memory(rho, "b", cfg.node_b)
    memories = partial_trace(rho, (MEM_A, MEM_B))
    memories = storage_and_feedback(memories, n2, cfg.node_a, 0,
                                    feedback=cfg.feedback_enabled,
                                    attempt_duration=t_att)
    memories = storage_and_feedback(memories, n2, cfg.node_b, 1,
                                    feedback=cfg.feedback_enabled,
                                    attempt_duration=t_att)
    raw2 = generate_raw_state(cfg, env, sigs.sign2, rng)
    rho = _interleave(raw2, memories)
    readout_a, readout_b, mem_final, branch_prob = distill_step(
        rho, cfg.node_a, cfg.node_b, rng)
    heralded = (readout_a, readout_b) == (0, 0)
    return TrialRecord(
        n1=n1, n2=n2, signatures=sigs, readout_a=readout_a, readout_b=readout_b,
        heralded=heralded, elapsed_time=(n1 + n2) * t_att + cfg.local_ops_duration,
        final_memory_state=mem_final if heralded else None,
        branch_prob=branch_prob)


# --- serialization --------------------------------------------------------

_TRIAL_COLUMNS = ("trial_id", "n1", "n2", "sign1", "sign2", "readout_a",
                  "readout_b", "heralded", "elapsed_time")


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def trials_to_tsv(records: List[TrialRecord], include_states: bool = False) -> str:
    """Row-oriented tab-delimited dump of trial records.

    Bit-exact for a fixed seed: floats are written at 17 significant
    digits and missing values as ``NA``.  With ``include_states`` the
    heralded rows append the 16 final-state entries as re/im pairs.
    """
    columns = list(_TRIAL_COLUMNS)
    if include_states:
        for i in range(4):
            for j in range(4):
                columns += [f"state_re_{i}{j}", f"state_im_{i}{j}"]
    lines = ["\t".join(columns)]
    for idx, rec in enumerate(records):
        sig = rec.signatures
        row = [idx, rec.n1, rec.n2,
               sig.sign1 if sig else None, sig.sign2 if sig else None,
               rec.readout_a, rec.readout_b, rec.heralded, rec.elapsed_time]
        if include_states:
            if rec.final_memory_state is not None:
                for entry in rec.final_memory_state.mat.ravel():
                    row += [entry.real, entry.imag]
            else:
                row += [None] * 32
        lines.append("\t".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_trials_tsv(text: str) -> List[TrialRecord]:
    """Inverse of :func:`trials_to_tsv` (states, when present, included)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    include_states = len(header) > len(_TRIAL_COLUMNS)
    records = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        vals = dict(zip(header, parts))
        sig = None
        if vals["sign1"] != "NA":
            sig = HeraldSignature(int(vals["sign1"]), int(vals["sign2"]))
        heralded = vals["heralded"] == "1"
        state = None
        if include_states and heralded:
            flat = np.array([complex(float(parts[9 + 2 * k]), float(parts[10 + 2 * k]))
                             for k in range(16)])
            state = DensityMatrix(flat.reshape(4, 4))
        records.append(TrialRecord(
            n1=int(vals["n1"]), n2=int(vals["n2"]), signatures=sig,
            readout_a=None if vals["readout_a"] == "NA" else int(vals["readout_a"]),
            readout_b=None if vals["readout_b"] == "NA" else int(vals["readout_b"]),
            heralded=heralded, elapsed_time=float(vals["elapsed_time"]),
            final_memory_state=state))
    return records
