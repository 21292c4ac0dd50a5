"""Dense density-matrix core for registers of one to four qubits.

Basis convention (fixed globally): qubit 0 is the most significant bit of
the computational index.  A two-qubit register is therefore ordered
|00>, |01>, |10>, |11> with qubit 0 the left bit, and ``targets[0]`` of a
two-qubit gate binds to the most significant factor of the gate matrix.

All values are immutable after construction and every operation returns a
new value, so states can be shared freely between concurrent workers.

Tolerances are two-tier: 1e-9 for physicality checks (trace, Hermiticity,
positivity) and 1e-12 for exact algebraic identities.  Register dimension
is at most 16x16, which leaves ample double-precision headroom.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import numpy as np

MAX_QUBITS = 4

TRACE_TOL = 1e-9
HERM_TOL = 1e-9
PSD_TOL = 1e-8
NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
PROB_UNDERFLOW = 1e-12

__all__ = [
    "DensityMatrix",
    "PureState",
    "MeasurementUnderflow",
    "I2",
    "X",
    "Y",
    "Z",
    "H",
    "CNOT",
    "rz",
    "basis_state",
    "cardinal_state",
    "CARDINAL_LABELS",
    "bell_psi",
    "tensor",
    "tensor_pure",
    "permute_qubits",
    "apply_gate",
    "apply_kraus",
    "partial_trace",
    "project_qubit",
    "measurement_probabilities",
    "measure_qubit",
    "pauli_expectation",
    "fidelity_with_pure",
    "dump_density_matrix",
    "parse_density_matrix",
]


class MeasurementUnderflow(ValueError):
    """Sampled measurement branch has probability below 1e-12.

    Renormalizing such a branch is numerically meaningless; resampling is
    forbidden, so the condition is reported to the caller.
    """


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _n_qubits_from_dim(dim: int, what: str) -> int:
    n = dim.bit_length() - 1
    if dim <= 0 or 2 ** n != dim:
        raise ValueError(f"{what} dimension {dim} is not a power of two")
    return n


class PureState:
    """Normalized state vector on an n-qubit register."""

    __slots__ = ("vec", "n_qubits")

    def __init__(self, amplitudes: Iterable[complex]):
        vec = np.asarray(list(amplitudes) if not isinstance(amplitudes, np.ndarray) else amplitudes,
                         dtype=complex).ravel()
        n = _n_qubits_from_dim(vec.size, "state vector")
        if not np.all(np.isfinite(vec.view(float))):
            raise ValueError("state vector contains non-finite amplitudes")
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector norm {norm!r} deviates from 1 by more than {NORM_TOL}")
        self.vec = _freeze(vec.copy())
        self.n_qubits = n

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.vec, self.vec.conj()), check=False)

    def __repr__(self) -> str:
        return f"PureState(n_qubits={self.n_qubits}, vec={self.vec!r})"


class DensityMatrix:
    """Trace-one Hermitian positive operator on an n-qubit register.

    Construction checks trace and Hermiticity at 1e-9 plus a cheap
    necessary positivity condition (real, non-negative diagonal).  The full
    eigenvalue positivity check is available as :meth:`check_physical` and
    is exercised by the invariant test suite rather than on every hot-path
    construction.
    """

    __slots__ = ("mat", "n_qubits")

    def __init__(self, mat: np.ndarray, *, check: bool = True):
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        n = _n_qubits_from_dim(mat.shape[0], "density matrix")
        if n > MAX_QUBITS:
            raise ValueError(f"register of {n} qubits exceeds the {MAX_QUBITS}-qubit limit")
        if check:
            tr = np.trace(mat)
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr!r} deviates from 1 by more than {TRACE_TOL}")
            if np.max(np.abs(mat - mat.conj().T)) > HERM_TOL:
                raise ValueError("matrix is not Hermitian within 1e-9")
            diag = np.diag(mat)
            if np.min(diag.real) < -PSD_TOL or np.max(np.abs(diag.imag)) > HERM_TOL:
                raise ValueError("diagonal violates positivity")
        self.mat = _freeze(mat.copy()) if mat.flags.writeable else mat
        self.n_qubits = n

    @classmethod
    def _wrap(cls, mat: np.ndarray, n_qubits: int) -> "DensityMatrix":
        # internal fast path: caller owns a fresh array of known valid shape
        self = object.__new__(cls)
        mat.setflags(write=False)
        self.mat = mat
        self.n_qubits = n_qubits
        return self

    @classmethod
    def from_pure(cls, psi: PureState) -> "DensityMatrix":
        return psi.to_density()

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2 ** n_qubits
        return cls(np.eye(d, dtype=complex) / d, check=False)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def check_physical(self) -> None:
        """Full physicality check: trace, Hermiticity and eigenvalue positivity."""
        tr = np.trace(self.mat)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr!r} deviates from 1 by more than {TRACE_TOL}")
        if np.max(np.abs(self.mat - self.mat.conj().T)) > HERM_TOL:
            raise ValueError("matrix is not Hermitian within 1e-9")
        evals = np.linalg.eigvalsh(self.mat)
        if evals.min() < -PSD_TOL:
            raise ValueError(f"minimum eigenvalue {evals.min()!r} below -{PSD_TOL}")

    def __repr__(self) -> str:
        return f"DensityMatrix(n_qubits={self.n_qubits})"


# --- standard gates -----------------------------------------------------

I2 = _freeze(np.eye(2, dtype=complex))
X = _freeze(np.array([[0, 1], [1, 0]], dtype=complex))
Y = _freeze(np.array([[0, -1j], [1j, 0]], dtype=complex))
Z = _freeze(np.array([[1, 0], [0, -1]], dtype=complex))
H = _freeze(np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0))
CNOT = _freeze(np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]], dtype=complex))

_PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def rz(phi: float) -> np.ndarray:
    """Rotation about Z: diag(e^{-i phi/2}, e^{i phi/2})."""
    return _freeze(np.array([[np.exp(-0.5j * phi), 0], [0, np.exp(0.5j * phi)]], dtype=complex))


# --- named states -------------------------------------------------------

def basis_state(bits: str) -> PureState:
    """Computational basis state from a bit string, e.g. ``"01"`` for |01>."""
    if not bits or any(b not in "01" for b in bits):
        raise ValueError(f"invalid bit string {bits!r}")
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return PureState(vec)


_SQ2 = 1.0 / np.sqrt(2.0)
_CARDINALS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+x": np.array([_SQ2, _SQ2], dtype=complex),
    "-x": np.array([_SQ2, -_SQ2], dtype=complex),
    "+y": np.array([_SQ2, 1j * _SQ2], dtype=complex),
    "-y": np.array([_SQ2, -1j * _SQ2], dtype=complex),
}
CARDINAL_LABELS = tuple(_CARDINALS)


def cardinal_state(label: str) -> PureState:
    """One of the six cardinal single-qubit states: 0, 1, +x, -x, +y, -y."""
    try:
        return PureState(_CARDINALS[label])
    except KeyError:
        raise ValueError(f"unknown cardinal state {label!r}") from None


def bell_psi(sign: int = +1, phi: float = 0.0) -> PureState:
    """(|01> + sign * e^{i phi} |10>) / sqrt(2) with sign = +1 or -1."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    vec = np.zeros(4, dtype=complex)
    vec[1] = _SQ2
    vec[2] = sign * np.exp(1j * phi) * _SQ2
    return PureState(vec)


# --- index machinery ----------------------------------------------------

@lru_cache(maxsize=256)
def _source_index_map(order: Tuple[int, ...], n: int) -> np.ndarray:
    """Register index -> index in the basis ordered by ``order`` (qubit list)."""
    d = 2 ** n
    s = np.zeros(d, dtype=np.intp)
    for i in range(d):
        acc = 0
        for pos, q in enumerate(order):
            acc |= ((i >> (n - 1 - q)) & 1) << (n - 1 - pos)
        s[i] = acc
    s.setflags(write=False)
    return s


@lru_cache(maxsize=8192)
def _embedded_op(op_bytes: bytes, k: int, targets: Tuple[int, ...], n: int) -> np.ndarray:
    """Embed a k-qubit operator on ``targets`` into the full n-qubit space."""
    op = np.frombuffer(op_bytes, dtype=complex).reshape(2 ** k, 2 ** k)
    rest = tuple(q for q in range(n) if q not in targets)
    full = np.kron(op, np.eye(2 ** (n - k), dtype=complex))
    s = _source_index_map(targets + rest, n)
    return _freeze(full[np.ix_(s, s)])


def _check_targets(targets: Sequence[int], n: int, k: int) -> Tuple[int, ...]:
    targets = targets if type(targets) is tuple else tuple(int(t) for t in targets)
    if len(targets) != k:
        raise ValueError(f"operator acts on {k} qubit(s) but {len(targets)} target(s) given")
    if len(set(targets)) != len(targets):
        raise ValueError(f"target indices must be distinct, got {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise ValueError(f"target index {t} outside register of {n} qubits")
    return targets


def _embed(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    op = np.ascontiguousarray(op, dtype=complex)
    k = _n_qubits_from_dim(op.shape[0], "operator")
    targets = _check_targets(targets, n, k)
    if k == n and targets == tuple(range(n)):
        return op
    return _embedded_op(op.tobytes(), k, targets, n)


@lru_cache(maxsize=64)
def _bit_mask(n: int, q: int, outcome: int) -> np.ndarray:
    idx = np.arange(2 ** n)
    mask = ((idx >> (n - 1 - q)) & 1) == outcome
    mask.setflags(write=False)
    return mask


# --- operations ---------------------------------------------------------

def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker composition; qubits of ``a`` become the high-order block."""
    if a.n_qubits + b.n_qubits > MAX_QUBITS:
        raise ValueError(
            f"combined register of {a.n_qubits + b.n_qubits} qubits exceeds the "
            f"{MAX_QUBITS}-qubit limit")
    return DensityMatrix(np.kron(a.mat, b.mat), check=False)


def tensor_pure(a: PureState, b: PureState) -> PureState:
    return PureState(np.kron(a.vec, b.vec))


@lru_cache(maxsize=256)
def _permute_map(order: Tuple[int, ...], n: int) -> np.ndarray:
    # output index j maps to the input index carrying the same bits
    m = np.zeros(2 ** n, dtype=np.intp)
    for j in range(2 ** n):
        acc = 0
        for p in range(n):
            acc |= ((j >> (n - 1 - p)) & 1) << (n - 1 - order[p])
        m[j] = acc
    m.setflags(write=False)
    return m


def permute_qubits(rho: DensityMatrix, new_order: Sequence[int]) -> DensityMatrix:
    """Reorder register qubits; output position p holds old qubit new_order[p]."""
    n = rho.n_qubits
    order = _check_targets(new_order, n, n)
    if order == tuple(range(n)):
        return rho
    m = _permute_map(order, n)
    return DensityMatrix(rho.mat[np.ix_(m, m)], check=False)


@lru_cache(maxsize=4096)
def _unitary_ok(gate_bytes: bytes, d: int) -> bool:
    gate = np.frombuffer(gate_bytes, dtype=complex).reshape(d, d)
    return bool(np.max(np.abs(gate.conj().T @ gate - np.eye(d))) <= UNITARY_TOL)


def apply_gate(rho: DensityMatrix, gate: np.ndarray, targets: Sequence[int]) -> DensityMatrix:
    """Unitary conjugation rho -> U rho U^dag on the embedded subspace."""
    gate = np.ascontiguousarray(gate, dtype=complex)
    if gate.ndim != 2 or gate.shape[0] != gate.shape[1]:
        raise ValueError(f"gate must be square, got shape {gate.shape}")
    if not _unitary_ok(gate.tobytes(), gate.shape[0]):
        raise ValueError("gate is not unitary within 1e-10")
    u = _embed(gate, targets, rho.n_qubits)
    return DensityMatrix(u @ rho.mat @ u.conj().T, check=False)


def apply_kraus(rho: DensityMatrix, kraus_ops: Sequence[np.ndarray],
                targets: Sequence[int]) -> DensityMatrix:
    """Channel rho -> sum_k K rho K^dag; the set must be trace preserving."""
    if not kraus_ops:
        raise ValueError("empty Kraus set")
    ops = [np.asarray(k, dtype=complex) for k in kraus_ops]
    d = ops[0].shape[0]
    acc = np.zeros((d, d), dtype=complex)
    for k in ops:
        if k.shape != (d, d):
            raise ValueError("Kraus operators must share one square shape")
        acc += k.conj().T @ k
    if np.max(np.abs(acc - np.eye(d))) > TRACE_TOL:
        raise ValueError("Kraus set is not trace preserving within 1e-9")
    out = np.zeros_like(rho.mat)
    for k in ops:
        ku = _embed(k, targets, rho.n_qubits)
        out += ku @ rho.mat @ ku.conj().T
    return DensityMatrix(out, check=False)


@lru_cache(maxsize=256)
def _ptrace_subscript(keep: Tuple[int, ...], n: int) -> str:
    # traced qubits share a letter between row and column axes
    row_sub = []
    col_sub = []
    out_sub = []
    pool = iter("abcdefghijklmnop")
    for q in range(n):
        if q in keep:
            r = next(pool)
            c = next(pool)
            row_sub.append(r)
            col_sub.append(c)
            out_sub.append((r, c))
        else:
            t = next(pool)
            row_sub.append(t)
            col_sub.append(t)
    return "".join(row_sub) + "".join(col_sub) + "->" + \
        "".join(r for r, _ in out_sub) + "".join(c for _, c in out_sub)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Trace out every qubit not in ``keep`` (kept qubits stay in register order)."""
    n = rho.n_qubits
    keep = tuple(sorted(set(int(q) for q in keep)))
    if not keep:
        raise ValueError("keep set must be nonempty")
    for q in keep:
        if not 0 <= q < n:
            raise ValueError(f"keep index {q} outside register of {n} qubits")
    if keep == tuple(range(n)):
        return rho
    tens = rho.mat.reshape((2,) * (2 * n))
    reduced = np.einsum(_ptrace_subscript(keep, n), tens)
    dk = 2 ** len(keep)
    return DensityMatrix(reduced.reshape(dk, dk), check=False)


def measurement_probabilities(rho: DensityMatrix, qubit: int) -> Tuple[float, float]:
    """Born probabilities (p0, p1) of a computational-basis measurement."""
    _check_targets((qubit,), rho.n_qubits, 1)
    diag = np.diag(rho.mat).real
    p0 = float(diag[_bit_mask(rho.n_qubits, qubit, 0)].sum())
    return p0, float(diag.sum() - p0)


def project_qubit(rho: DensityMatrix, qubit: int, outcome: int) -> Tuple[DensityMatrix, float]:
    """Project ``qubit`` onto ``outcome`` and renormalize; returns (state, probability)."""
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    _check_targets((qubit,), rho.n_qubits, 1)
    mask = _bit_mask(rho.n_qubits, qubit, outcome)
    prob = float(np.diag(rho.mat).real[mask].sum())
    if prob < PROB_UNDERFLOW:
        raise MeasurementUnderflow(
            f"branch probability {prob!r} for qubit {qubit} outcome {outcome} "
            f"is below {PROB_UNDERFLOW}")
    post = rho.mat.copy()
    post[~mask, :] = 0.0
    post[:, ~mask] = 0.0
    return DensityMatrix(post / prob, check=False), prob


def measure_qubit(rho: DensityMatrix, qubit: int, rng) -> Tuple[int, DensityMatrix, float]:
    """Sample a computational-basis measurement of ``qubit``.

    The outcome is drawn with its Born probability (outcome 0 when the
    uniform draw falls below p0), the post state is the renormalized
    projection, and the sampled branch probability is returned.
    """
    p0, _ = measurement_probabilities(rho, qubit)
    outcome = 0 if rng.random() < p0 else 1
    post, prob = project_qubit(rho, qubit, outcome)
    return outcome, post, prob


@lru_cache(maxsize=256)
def _pauli_string(labels: str) -> np.ndarray:
    op = _PAULI[labels[0]]
    for ch in labels[1:]:
        op = np.kron(op, _PAULI[ch])
    return _freeze(op)


def pauli_expectation(rho: DensityMatrix, labels: str) -> float:
    """Expectation value of a Pauli string such as ``"XX"`` or ``"IZ"``."""
    labels = labels.upper()
    if len(labels) != rho.n_qubits:
        raise ValueError(f"expected {rho.n_qubits} Pauli labels, got {labels!r}")
    if any(ch not in _PAULI for ch in labels):
        raise ValueError(f"invalid Pauli labels {labels!r}")
    return float(np.einsum("ij,ji->", rho.mat, _pauli_string(labels)).real)


def fidelity_with_pure(rho: DensityMatrix, target: PureState) -> float:
    """<target| rho |target>, real, in [0, 1]."""
    if target.n_qubits != rho.n_qubits:
        raise ValueError(
            f"dimension mismatch: state on {rho.n_qubits} qubits, target on "
            f"{target.n_qubits}")
    return float((target.vec.conj() @ rho.mat @ target.vec).real)


# --- debug dump ----------------------------------------------------------

def dump_density_matrix(rho: DensityMatrix) -> str:
    """Row-major dump, one ``re im`` pair per line at 17 significant digits."""
    lines = [f"n_qubits {rho.n_qubits}"]
    for entry in rho.mat.ravel():
        lines.append(f"{entry.real:.17g} {entry.imag:.17g}")
    return "\n".join(lines) + "\n"


def parse_density_matrix(text: str) -> DensityMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "n_qubits":
        raise ValueError("dump must start with an 'n_qubits' line")
    n = int(head[1])
    d = 2 ** n
    if len(lines) - 1 != d * d:
        raise ValueError(f"expected {d * d} entries, found {len(lines) - 1}")
    vals = np.array([complex(float(a), float(b))
                     for a, b in (ln.split() for ln in lines[1:])])
    return DensityMatrix(vals.reshape(d, d))
