"""Dense statevector core: pure states, gate kernels, measurement, reduced
density matrices and entropy/overlap primitives.

Conventions
-----------
Little-endian qubit ordering everywhere: qubit 0 is the least significant bit
of an amplitude index, so the basis state ``|b_{n-1} ... b_1 b_0>`` lives at
index ``sum_q b_q 2^q``.  Two-qubit gate matrices follow the same rule: in
``apply_2q(state, q1, q2, u)`` the 4x4 matrix acts on ``|b(q2) b(q1)>`` with
``q1`` the low bit of the 2-bit gate index.  Entropies are in bits (log2).

States are immutable from the caller's point of view: every operation returns
a fresh ``StateVector``.  RNG streams are passed in explicitly and never
shared between trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_ATOL = 1e-10
HERMITIAN_ATOL = 1e-10
ENTROPY_EIG_CLAMP = 1e-12
MIN_BRANCH_PROB = 1e-12

_LN2 = float(np.log(2.0))


class ImpossibleBranchError(ValueError):
    """A measurement branch with (numerically) zero Born probability was forced."""


class StateVector:
    """Normalized pure state over ``n_qubits`` qubits, little-endian indexed."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        if n_qubits < 1:
            raise ValueError(f"need at least one qubit, got {n_qubits}")
        amps = np.array(amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if amps.shape != (2**n_qubits,):
            raise ValueError(
                f"amplitude vector has length {amps.shape[0]}, expected {2**n_qubits}"
            )
        nrm = float(np.linalg.norm(amps))
        if abs(nrm - 1.0) > NORM_ATOL:
            raise ValueError(f"state norm {nrm!r} deviates from 1 beyond {NORM_ATOL}")
        self.n_qubits = n_qubits
        self.amplitudes = amps

    @classmethod
    def _from_trusted(cls, n_qubits: int, amps: np.ndarray) -> "StateVector":
        # Internal fast path: caller guarantees dtype, length and normalization.
        obj = object.__new__(cls)
        obj.n_qubits = n_qubits
        obj.amplitudes = amps
        return obj

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector._from_trusted(self.n_qubits, self.amplitudes.copy())

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits})"


class DensityMatrix:
    """Hermitian, trace-one, positive-semidefinite matrix.

    Positivity is verified eagerly only for dim <= 512 (an O(dim^3)
    eigendecomposition); larger matrices are checked for Hermiticity and
    trace only.
    """

    __slots__ = ("dim", "entries")

    def __init__(self, entries: np.ndarray):
        m = np.array(entries, dtype=np.complex128, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_ATOL:
            raise ValueError("density matrix is not Hermitian within 1e-10")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > NORM_ATOL:
            raise ValueError(f"density matrix trace {tr!r} deviates from 1")
        if m.shape[0] <= 512:
            lo = float(np.linalg.eigvalsh(m)[0])
            if lo < -1e-10:
                raise ValueError(f"density matrix has eigenvalue {lo} < -1e-10")
        self.dim = m.shape[0]
        self.entries = m

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


_PAULI_CHARS = frozenset("IXYZ")


@dataclass(frozen=True)
class PauliString:
    """Weighted tensor product of Pauli operators.

    ``ops[q]`` is the label acting on qubit ``q``; the leftmost character is
    qubit 0.  The coefficient must be real so that sums of strings stay
    Hermitian.
    """

    ops: str
    coefficient: float = 1.0

    def __post_init__(self):
        if not self.ops or not set(self.ops) <= _PAULI_CHARS:
            raise ValueError(f"invalid Pauli word {self.ops!r}")
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def n_qubits(self) -> int:
        return len(self.ops)

    def masks(self) -> tuple[int, int, int]:
        """(x-flip mask, yz-phase mask, number of Y factors)."""
        xmask = yzmask = ny = 0
        for q, ch in enumerate(self.ops):
            if ch in "XY":
                xmask |= 1 << q
            if ch in "YZ":
                yzmask |= 1 << q
            if ch == "Y":
                ny += 1
        return xmask, yzmask, ny


# ---------------------------------------------------------------------------
# raw kernels (operate on the last axis; leading axes are batch dimensions)

def _apply_1q_raw(amps: np.ndarray, n: int, q: int, u: np.ndarray) -> np.ndarray:
    lead = amps.shape[:-1]
    view = amps.reshape(lead + (2 ** (n - 1 - q), 2, 2**q))
    out = np.einsum("ab,...bl->...al", u, view)
    return out.reshape(amps.shape)


def _apply_2q_raw(
    amps: np.ndarray, n: int, q1: int, q2: int, u: np.ndarray
) -> np.ndarray:
    lead = amps.shape[:-1]
    t = amps.reshape(lead + (2,) * n)
    a1 = len(lead) + n - 1 - q1
    a2 = len(lead) + n - 1 - q2
    u4 = u.reshape(2, 2, 2, 2)  # indices: b2', b1', b2, b1
    out = np.tensordot(u4, t, axes=([2, 3], [a2, a1]))
    # tensordot moved the two output axes to the front followed by the
    # remaining axes in order; restore the original layout.
    out = np.moveaxis(out, [0, 1], [a2, a1])
    return np.ascontiguousarray(out).reshape(amps.shape)


def pauli_apply_raw(amps: np.ndarray, n: int, string: PauliString) -> np.ndarray:
    """Return ``coefficient * P |amps>`` using index arithmetic (no matrices)."""
    if string.n_qubits != n:
        raise ValueError(f"Pauli word length {string.n_qubits} != register size {n}")
    xmask, yzmask, ny = string.masks()
    dim = amps.shape[-1]
    idx = np.arange(dim, dtype=np.int64)
    src = idx ^ xmask
    parity = (np.bitwise_count(src & yzmask) & 1).astype(np.float64)
    phase = (1j**ny) * (1.0 - 2.0 * parity) * string.coefficient
    return amps[..., src] * phase


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise ValueError(f"gate matrix must be {dim}x{dim}, got {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > NORM_ATOL:
        raise ValueError("gate matrix is not unitary within 1e-10")
    return u


# ---------------------------------------------------------------------------
# public operations

def basis_state(n_qubits: int, index: int) -> StateVector:
    """Computational basis state ``|index>``."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    if not 0 <= index < 2**n_qubits:
        raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector._from_trusted(n_qubits, amps)


def apply_1q(state: StateVector, q: int, u: np.ndarray) -> StateVector:
    """Apply a single-qubit unitary to qubit ``q``."""
    if not 0 <= q < state.n_qubits:
        raise ValueError(f"qubit {q} out of range")
    u = _check_unitary(u, 2)
    out = _apply_1q_raw(state.amplitudes, state.n_qubits, q, u)
    return StateVector._from_trusted(state.n_qubits, out)


def apply_2q(state: StateVector, q1: int, q2: int, u: np.ndarray) -> StateVector:
    """Apply a two-qubit unitary to qubits ``(q1, q2)``; ``q1`` is the low bit."""
    n = state.n_qubits
    if q1 == q2:
        raise ValueError("two-qubit gate needs distinct qubits")
    if not (0 <= q1 < n and 0 <= q2 < n):
        raise ValueError(f"qubits ({q1}, {q2}) out of range")
    u = _check_unitary(u, 4)
    out = _apply_2q_raw(state.amplitudes, n, q1, q2, u)
    return StateVector._from_trusted(n, out)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("states live on different registers")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def _prob_one(amps: np.ndarray, n: int, q: int) -> float:
    view = np.abs(amps.reshape(2 ** (n - 1 - q), 2, 2**q)) ** 2
    return float(view[:, 1, :].sum())


def _project_raw(amps: np.ndarray, n: int, q: int, outcome: int) -> tuple[float, np.ndarray]:
    view = amps.reshape(2 ** (n - 1 - q), 2, 2**q).copy()
    keep = view[:, outcome, :]
    prob = float(np.sum(np.abs(keep) ** 2))
    view[:, 1 - outcome, :] = 0.0
    return prob, view.reshape(-1)


def measure_qubit(
    state: StateVector, q: int, rng: np.random.Generator
) -> tuple[int, StateVector, float]:
    """Born-rule measurement of qubit ``q`` in the Z basis.

    Returns ``(outcome, post_state, prob)`` where ``prob`` is the Born
    probability of the sampled outcome and ``post_state`` the renormalized
    projection.
    """
    n = state.n_qubits
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} out of range")
    p1 = _prob_one(state.amplitudes, n, q)
    outcome = 1 if rng.random() < p1 else 0
    prob, post = _project_raw(state.amplitudes, n, q, outcome)
    if prob <= MIN_BRANCH_PROB:
        raise ImpossibleBranchError(
            f"sampled outcome {outcome} on qubit {q} with probability {prob}"
        )
    post /= np.sqrt(prob)
    return outcome, StateVector._from_trusted(n, post), prob


def project_qubit(
    state: StateVector, q: int, outcome: int
) -> tuple[float, StateVector]:
    """Deterministically project qubit ``q`` onto ``outcome`` and renormalize."""
    n = state.n_qubits
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} out of range")
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome}")
    prob, post = _project_raw(state.amplitudes, n, q, outcome)
    if prob <= MIN_BRANCH_PROB:
        raise ImpossibleBranchError(
            f"branch (qubit {q}, outcome {outcome}) has probability {prob}"
        )
    post /= np.sqrt(prob)
    return prob, StateVector._from_trusted(n, post)


def _split_axes(n: int, keep: tuple[int, ...]) -> tuple[list[int], list[int]]:
    # Axis of qubit q in the [2]*n tensor view is n-1-q.  Ordering the kept
    # axes by descending qubit keeps the flattened kept index little-endian.
    kept_axes = [n - 1 - q for q in sorted(keep, reverse=True)]
    other_axes = [a for a in range(n) if a not in kept_axes]
    return kept_axes, other_axes


def _validate_subset(n: int, subset) -> tuple[int, ...]:
    keep = tuple(sorted(set(int(q) for q in subset)))
    if not keep:
        raise ValueError("qubit subset must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"qubit subset {keep} out of range for {n} qubits")
    return keep


def reduced_density(state: StateVector, keep) -> DensityMatrix:
    """Partial trace over the complement of ``keep``.

    Row/column ordering of the result is little-endian over the kept qubits
    in ascending qubit order.
    """
    n = state.n_qubits
    keep = _validate_subset(n, keep)
    kept_axes, other_axes = _split_axes(n, keep)
    psi = state.amplitudes.reshape((2,) * n)
    mat = np.transpose(psi, kept_axes + other_axes).reshape(2 ** len(keep), -1)
    rho = mat @ mat.conj().T
    return DensityMatrix(rho)


def entanglement_entropy(state: StateVector, cut) -> float:
    """Von Neumann entropy in bits across the bipartition (cut, complement).

    Computed from the Schmidt spectrum; eigenvalues below 1e-12 contribute
    zero.
    """
    n = state.n_qubits
    keep = _validate_subset(n, cut)
    kept_axes, other_axes = _split_axes(n, keep)
    psi = state.amplitudes.reshape((2,) * n)
    mat = np.transpose(psi, kept_axes + other_axes).reshape(2 ** len(keep), -1)
    s = np.linalg.svd(mat, compute_uv=False)
    lam = s**2
    lam = lam[lam > ENTROPY_EIG_CLAMP]
    return float(-np.sum(lam * np.log2(lam)))


def expectation(state: StateVector, observable) -> float:
    """Real expectation value of a weighted Pauli-string sum."""
    terms = [observable] if isinstance(observable, PauliString) else list(observable)
    amps = state.amplitudes
    acc = 0.0 + 0.0j
    for term in terms:
        if not isinstance(term, PauliString):
            raise TypeError(f"expected PauliString, got {type(term).__name__}")
        acc += np.vdot(amps, pauli_apply_raw(amps, state.n_qubits, term))
    if abs(acc.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary residual {acc.imag}")
    return float(acc.real)


def haar_random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """State drawn from the Haar measure (normalized complex Gaussian vector)."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    dim = 2**n_qubits
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return StateVector._from_trusted(n_qubits, vec.astype(np.complex128))
