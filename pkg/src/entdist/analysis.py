"""State and rate metrics for protocol output.

Bell fidelity from Pauli correlators, logarithmic negativity, ebit rates
with bootstrap uncertainties, the analytic two-photon-coincidence
comparator, tomographic correlator sampling, attempt-binned decay curves
and the raw-state model lines used as the distillation baseline.

Reporting convention: the heralded memory state carries a Hadamard on each
qubit (swap byproduct) and a detector-signature-dependent Bell sign.
``corrected_state`` undoes both, mapping every heralded state into the
frame where the ideal output is (|01> + |10>)/sqrt(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .protocol import (
    MEM_A,
    MEM_B,
    ProtocolConfig,
    TrialRecord,
    _interleave,
    raw_state_matrix,
    storage_and_feedback,
    swap_to_memory,
)
from .qstate import (
    DensityMatrix,
    H,
    PureState,
    Z,
    apply_gate,
    bell_psi,
    fidelity_with_pure,
    partial_trace,
    pauli_expectation,
)

__all__ = [
    "RateEstimate",
    "BinnedCurve",
    "TomographyEstimate",
    "bell_fidelity_from_paulis",
    "partial_transpose",
    "log_negativity",
    "corrected_state",
    "bell_target",
    "trial_fidelity",
    "mean_corrected_state",
    "ebit_rate",
    "expected_trial_time",
    "event_probability",
    "event_rate_closed_form",
    "barrett_kok_rate",
    "tomography_sample",
    "bin_by_attempts",
    "model_raw_comm_state",
    "model_raw_memory_state",
    "fit_exponential_decay",
    "fit_oscillation",
    "loglog_slope",
]

BOOTSTRAP_RESAMPLES = 1000


@dataclass(frozen=True)
class RateEstimate:
    """Success rate nu, logarithmic negativity E_N and ebit rate r = nu * E_N."""

    nu: float
    e_n: float
    r: float
    nu_err: float = 0.0
    e_n_err: float = 0.0
    r_err: float = 0.0
    n_heralded: int = 0

    def __post_init__(self):
        if self.nu < 0 or self.e_n < 0:
            raise ValueError("rates and negativity must be >= 0")
        if abs(self.r - self.nu * self.e_n) > 1e-12:
            raise ValueError("r must equal nu * E_N within 1e-12")


@dataclass(frozen=True)
class TomographyEstimate:
    xx: float
    yy: float
    zz: float
    xx_err: float
    yy_err: float
    zz_err: float


@dataclass(frozen=True)
class BinnedCurve:
    """Per-attempt-bin correlators and fidelity; empty bins are omitted."""

    bin_edges: Tuple[Tuple[int, int], ...]
    counts: Tuple[int, ...]
    fidelity: Tuple[float, ...]
    fidelity_err: Tuple[float, ...]
    xx: Tuple[float, ...]
    yy: Tuple[float, ...]
    zz: Tuple[float, ...]
    xx_err: Tuple[float, ...]
    yy_err: Tuple[float, ...]
    zz_err: Tuple[float, ...]

    def __post_init__(self):
        prev_hi = None
        for lo, hi in self.bin_edges:
            if hi <= lo or (prev_hi is not None and lo < prev_hi):
                raise ValueError("bins must be disjoint and ordered")
            prev_hi = hi


# --- fidelity and negativity -----------------------------------------------

def bell_fidelity_from_paulis(xx: float, yy: float, zz: float,
                              target: str = "psi_plus") -> float:
    """Bell fidelity from the three two-qubit correlators.

    F(Psi+) = (1 + <XX> + <YY> - <ZZ>) / 4 and F(Psi-) with both signs
    flipped; exact for every two-qubit state because the Bell projector
    expands into exactly these Pauli terms.  The raw value is returned
    unclamped.
    """
    for name, value in (("xx", xx), ("yy", yy), ("zz", zz)):
        if not -1.0 - 1e-9 <= value <= 1.0 + 1e-9:
            raise ValueError(f"correlator {name} = {value!r} outside [-1, 1]")
    if target == "psi_plus":
        return 0.25 * (1.0 + xx + yy - zz)
    if target == "psi_minus":
        return 0.25 * (1.0 - xx - yy - zz)
    raise ValueError(f"target must be 'psi_plus' or 'psi_minus', got {target!r}")


def partial_transpose(rho: DensityMatrix, qubit: int = 1) -> np.ndarray:
    """Partial transpose of a two-qubit state over one qubit."""
    if rho.n_qubits != 2:
        raise ValueError("partial transpose is defined here for two-qubit states")
    if qubit not in (0, 1):
        raise ValueError("qubit must be 0 or 1")
    t = rho.mat.reshape(2, 2, 2, 2)
    if qubit == 1:
        t = t.transpose(0, 3, 2, 1)
    else:
        t = t.transpose(2, 1, 0, 3)
    return t.reshape(4, 4)


def log_negativity(rho: DensityMatrix) -> float:
    """log2 of the trace norm of the partial transpose; 1 for a Bell state.

    The partial transpose of a Hermitian matrix is Hermitian, so the trace
    norm is the sum of absolute eigenvalues; clamped at zero for
    positive-partial-transpose states.
    """
    pt = partial_transpose(rho)
    trace_norm = float(np.sum(np.abs(np.linalg.eigvalsh(pt))))
    return float(np.log2(max(trace_norm, 1.0)))


_BELL_PLUS = bell_psi(+1)
_BELL_MINUS = bell_psi(-1)


def bell_target(pair_sign: int) -> PureState:
    """Ideal output Bell state for a detector-signature pair."""
    if pair_sign == +1:
        return _BELL_PLUS
    if pair_sign == -1:
        return _BELL_MINUS
    raise ValueError("pair_sign must be +1 or -1")


def corrected_state(rho: DensityMatrix, pair_sign: int) -> DensityMatrix:
    """Undo the swap byproduct and the signature sign on a memory state.

    Applies H on each qubit, then Z on qubit 1 for different-detector
    signatures, so the ideal heralded output always maps to
    (|01> + |10>)/sqrt(2).
    """
    if rho.n_qubits != 2:
        raise ValueError("expected a two-qubit memory state")
    rho = apply_gate(rho, H, (0,))
    rho = apply_gate(rho, H, (1,))
    if pair_sign == -1:
        rho = apply_gate(rho, Z, (1,))
    elif pair_sign != +1:
        raise ValueError("pair_sign must be +1 or -1")
    return rho


def trial_fidelity(record: TrialRecord) -> float:
    """Fidelity of one heralded trial with its signature-dependent target."""
    if not record.heralded or record.final_memory_state is None:
        raise ValueError("fidelity is defined for heralded records only")
    rho = corrected_state(record.final_memory_state, record.signatures.pair_sign)
    return fidelity_with_pure(rho, _BELL_PLUS)


def mean_corrected_state(records: Sequence[TrialRecord]) -> DensityMatrix:
    """Average heralded memory state in the corrected frame."""
    mats = [corrected_state(r.final_memory_state, r.signatures.pair_sign).mat
            for r in records if r.heralded]
    if not mats:
        raise ValueError("no heralded records")
    return DensityMatrix(np.mean(mats, axis=0), check=False)


# --- rates ------------------------------------------------------------------

def ebit_rate(records: Sequence[TrialRecord], rng=None) -> RateEstimate:
    """Ebit rate from a trial ensemble.

    nu is the heralded count over the total elapsed time, E_N the
    logarithmic negativity of the average corrected memory state and
    r = nu * E_N.  Uncertainties come from a bootstrap over trials
    (1000 resamples); pass a generator for reproducible errors.
    """
    records = list(records)
    if not records:
        raise ValueError("empty trial set")
    total_time = sum(r.elapsed_time for r in records)
    heralded = [r for r in records if r.heralded]
    if not heralded:
        raise ValueError("zero heralded events: rate undefined")
    nu = len(heralded) / total_time
    e_n = log_negativity(mean_corrected_state(heralded))
    nu_err = e_n_err = r_err = 0.0
    if rng is not None:
        mats = np.array([corrected_state(r.final_memory_state,
                                         r.signatures.pair_sign).mat
                         for r in heralded])
        times = np.array([r.elapsed_time for r in records])
        flags = np.array([r.heralded for r in records])
        herald_index = np.cumsum(flags) - 1  # maps trial -> row in mats
        nus, ens, rs = [], [], []
        n = len(records)
        for _ in range(BOOTSTRAP_RESAMPLES):
            pick = rng.integers(0, n, size=n)
            k = int(flags[pick].sum())
            t = float(times[pick].sum())
            if k == 0 or t <= 0:
                continue
            mean_mat = mats[herald_index[pick[flags[pick]]]].mean(axis=0)
            nu_b = k / t
            en_b = log_negativity(DensityMatrix(mean_mat, check=False))
            nus.append(nu_b)
            ens.append(en_b)
            rs.append(nu_b * en_b)
        if len(nus) > 1:
            nu_err = float(np.std(nus, ddof=1))
            e_n_err = float(np.std(ens, ddof=1))
            r_err = float(np.std(rs, ddof=1))
    return RateEstimate(nu=nu, e_n=e_n, r=nu * e_n, nu_err=nu_err,
                        e_n_err=e_n_err, r_err=r_err, n_heralded=len(heralded))


def expected_trial_time(p: float, n1_max: int, n2_max: int,
                        attempt_duration: float, local_ops_duration: float) -> float:
    """Mean trial duration under truncated-geometric sampling.

    Attempts consumed by a round capped at N average (1 - q^N)/p with
    q = 1 - p; the second round runs only after first-round success and
    the local-operations overhead only when both rounds succeed.
    """
    q1 = (1.0 - p) ** n1_max
    q2 = (1.0 - p) ** n2_max
    consumed1 = (1.0 - q1) / p
    consumed2 = (1.0 - q1) * (1.0 - q2) / p
    return (consumed1 + consumed2) * attempt_duration + \
        (1.0 - q1) * (1.0 - q2) * local_ops_duration


def event_probability(p: float, n1_max: int, n2_max: int) -> float:
    """Probability that both generation rounds succeed within their caps."""
    return (1.0 - (1.0 - p) ** n1_max) * (1.0 - (1.0 - p) ** n2_max)


def event_rate_closed_form(p: float, n1_max: int, n2_max: int,
                           attempt_duration: float,
                           local_ops_duration: float) -> float:
    """Both-copies-generated events per second, analytic."""
    return event_probability(p, n1_max, n2_max) / expected_trial_time(
        p, n1_max, n2_max, attempt_duration, local_ops_duration)


def barrett_kok_rate(p_det: float, attempt_duration: float,
                     visibility: float = 1.0,
                     variant: str = "ideal") -> RateEstimate:
    """Analytic ebit rate of the two-photon-coincidence baseline.

    Per-attempt success probability p_det^2 / 2 (both rounds must detect a
    photon in the same attempt window).  The 'ideal' variant assumes
    perfect photon indistinguishability (E_N = 1); the 'measured' variant
    applies the interference visibility to the output state, giving
    E_N = log2(1 + V).
    """
    if not 0.0 < p_det <= 1.0:
        raise ValueError(f"p_det = {p_det!r} outside (0, 1]")
    if attempt_duration <= 0:
        raise ValueError("attempt_duration must be positive")
    nu = 0.5 * p_det ** 2 / attempt_duration
    if variant == "ideal":
        e_n = 1.0
    elif variant == "measured":
        e_n = float(np.log2(1.0 + visibility))
    else:
        raise ValueError(f"variant must be 'ideal' or 'measured', got {variant!r}")
    return RateEstimate(nu=nu, e_n=e_n, r=nu * e_n)


# --- tomography --------------------------------------------------------------

def tomography_sample(rho: DensityMatrix, shots_per_basis: int, rng=None,
                      analytic: bool = False) -> TomographyEstimate:
    """Sampled XX, YY, ZZ correlators with standard errors.

    Each correlator is estimated from ``shots_per_basis`` two-valued
    outcomes with P(+1) = (1 + E)/2, an unbiased estimator with standard
    error sqrt((1 - E^2)/shots).  With ``analytic`` the exact expectation
    values are returned together with the same error formula (the
    infinite-data error bar at the stated shot count).
    """
    if shots_per_basis < 1:
        raise ValueError("shots_per_basis must be >= 1")
    out = {}
    for label in ("XX", "YY", "ZZ"):
        exact = pauli_expectation(rho, label)
        if analytic:
            est = exact
        else:
            if rng is None:
                raise ValueError("sampling requires a random generator")
            k = rng.binomial(shots_per_basis, 0.5 * (1.0 + exact))
            est = 2.0 * k / shots_per_basis - 1.0
        err = math.sqrt(max(0.0, 1.0 - est * est) / shots_per_basis)
        out[label] = (est, err)
    return TomographyEstimate(xx=out["XX"][0], yy=out["YY"][0], zz=out["ZZ"][0],
                              xx_err=out["XX"][1], yy_err=out["YY"][1],
                              zz_err=out["ZZ"][1])


# --- binning ------------------------------------------------------------------

def _sem(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def bin_by_attempts(records: Sequence[TrialRecord], bin_width: int) -> BinnedCurve:
    """Bin heralded trials by second-round attempt count.

    Correlators and fidelity are evaluated per trial in the corrected
    frame and averaged per bin with their standard errors.  Bins with no
    heralded trials are omitted (gaps, not zeros).
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    heralded = [r for r in records if r.heralded]
    if not heralded:
        raise ValueError("no heralded trials to bin")
    per_trial = []
    for rec in heralded:
        rho = corrected_state(rec.final_memory_state, rec.signatures.pair_sign)
        per_trial.append((rec.n2,
                          fidelity_with_pure(rho, _BELL_PLUS),
                          pauli_expectation(rho, "XX"),
                          pauli_expectation(rho, "YY"),
                          pauli_expectation(rho, "ZZ")))
    max_n2 = max(t[0] for t in per_trial)
    edges, counts = [], []
    fid, fid_e, xx, yy, zz, xx_e, yy_e, zz_e = ([] for _ in range(8))
    lo = 1
    while lo <= max_n2:
        hi = lo + bin_width
        rows = np.array([t[1:] for t in per_trial if lo <= t[0] < hi])
        if rows.size:
            edges.append((lo, hi))
            counts.append(rows.shape[0])
            for store, err_store, col in ((fid, fid_e, 0), (xx, xx_e, 1),
                                          (yy, yy_e, 2), (zz, zz_e, 3)):
                store.append(float(rows[:, col].mean()))
                err_store.append(_sem(rows[:, col]))
        lo = hi
    return BinnedCurve(bin_edges=tuple(edges), counts=tuple(counts),
                       fidelity=tuple(fid), fidelity_err=tuple(fid_e),
                       xx=tuple(xx), yy=tuple(yy), zz=tuple(zz),
                       xx_err=tuple(xx_e), yy_err=tuple(yy_e), zz_err=tuple(zz_e))


# --- raw-state model lines ----------------------------------------------------

def model_raw_comm_state(cfg: ProtocolConfig, sign: int = +1) -> DensityMatrix:
    """Raw state on the communication qubits with a known internal phase."""
    mat = raw_state_matrix(cfg.theta, sign, 0.0,
                           coherence=cfg.photonics.visibility ** cfg.photonics.visibility_exponent,
                           dark_fraction=cfg.photonics.dark_count_fraction)
    return DensityMatrix(mat, check=False)


def model_raw_memory_state(cfg: ProtocolConfig, n_attempts: int,
                           sign: int = +1) -> DensityMatrix:
    """Raw state held by the memories after swap and n attempts of storage.

    Deterministic model at known internal phase: swap both nodes with
    their calibrated gate noise, then dephase for ``n_attempts``.  This is
    the baseline the distilled state is compared against.
    """
    from .protocol import _MEM_PAIR_ZERO  # local import avoids a cycle at module load

    rho = _interleave(model_raw_comm_state(cfg, sign), _MEM_PAIR_ZERO)
    rho = swap_to_memory(rho, "a", cfg.node_a)
    rho = swap_to_memory(rho, "b", cfg.node_b)
    mems = partial_trace(rho, (MEM_A, MEM_B))
    mems = storage_and_feedback(mems, n_attempts, cfg.node_a, 0,
                                attempt_duration=cfg.attempt_duration)
    mems = storage_and_feedback(mems, n_attempts, cfg.node_b, 1,
                                attempt_duration=cfg.attempt_duration)
    return mems


# --- fits ----------------------------------------------------------------------

def fit_exponential_decay(n_values: Sequence[float], fidelities: Sequence[float],
                          floor: float = 0.5) -> float:
    """1/e attempt constant of F(n) = floor + a * exp(-n / N0)."""
    n_values = np.asarray(n_values, dtype=float)
    fidelities = np.asarray(fidelities, dtype=float)

    def model(n, amplitude, n0):
        return floor + amplitude * np.exp(-n / n0)

    popt, _ = optimize.curve_fit(model, n_values, fidelities,
                                 p0=(0.5, max(float(n_values.max()), 1.0) / 2.0),
                                 maxfev=20000)
    return float(popt[1])


def fit_oscillation(n_values: Sequence[float], x_values: Sequence[float],
                    decay_attempts: Optional[float] = None) -> Tuple[float, float]:
    """Frequency (rad per attempt) and amplitude of a decaying cosine.

    Fits x(n) = a * cos(w n + d) * exp(-n / N0) + c with the frequency
    seeded from the discrete Fourier spectrum, so the fit does not need a
    prior estimate of the oscillation rate.
    """
    n_values = np.asarray(n_values, dtype=float)
    x_values = np.asarray(x_values, dtype=float)
    detrended = x_values - x_values.mean()
    spectrum = np.abs(np.fft.rfft(detrended))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(n_values.size,
                                            d=float(n_values[1] - n_values[0]))
    w0 = float(freqs[np.argmax(spectrum[1:]) + 1]) if spectrum.size > 1 else 0.1

    def model(n, amplitude, w, phase, offset):
        env = np.exp(-n / decay_attempts) if decay_attempts else 1.0
        return amplitude * np.cos(w * n + phase) * env + offset

    popt, _ = optimize.curve_fit(model, n_values, x_values,
                                 p0=(np.ptp(x_values) / 2.0, w0, 0.0, 0.0),
                                 maxfev=20000)
    return abs(float(popt[1])), abs(float(popt[0]))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log10(y) against log10(x)."""
    lx = np.log10(np.asarray(x, dtype=float))
    ly = np.log10(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
