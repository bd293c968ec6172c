"""Pauli-string Hamiltonians and exact oracles.

Dense forms and eigendecompositions are cached per instance, so real and
imaginary time evolution amortize to a matrix-vector product after the first
call.  Everything here is the verification side of the artifact: ground
states, thermal filters and free energies come from exact diagonalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.special import logsumexp

from .states import PauliString, StateVector, pauli_apply_raw

MAX_DENSE_QUBITS = 14

_PAULI_MATS = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class Hamiltonian:
    """Weighted sum of Pauli strings with real coefficients."""

    def __init__(self, n_qubits: int, terms):
        terms = tuple(terms)
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        for t in terms:
            if not isinstance(t, PauliString):
                raise TypeError(f"expected PauliString, got {type(t).__name__}")
            if t.n_qubits != n_qubits:
                raise ValueError(
                    f"term {t.ops!r} has {t.n_qubits} qubits, expected {n_qubits}"
                )
        self.n_qubits = n_qubits
        self.terms = terms
        self._dense: np.ndarray | None = None
        self._eig: tuple[np.ndarray, np.ndarray] | None = None
        self._compiled: list[tuple[np.ndarray, np.ndarray]] | None = None

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def dense(self) -> np.ndarray:
        if self._dense is None:
            if self.n_qubits > MAX_DENSE_QUBITS:
                raise ValueError(f"{self.n_qubits} qubits is too large for a dense form")
            acc = np.zeros((self.dim, self.dim), dtype=np.complex128)
            for t in self.terms:
                # little-endian: qubit 0 is the fast (last kron) factor
                mats = [_PAULI_MATS[t.ops[q]] for q in reversed(range(self.n_qubits))]
                acc += t.coefficient * reduce(np.kron, mats)
            self._dense = acc
        return self._dense

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            evals, evecs = np.linalg.eigh(self.dense())
            self._eig = (evals, evecs)
        return self._eig

    def _compile(self) -> list[tuple[np.ndarray, np.ndarray]]:
        if self._compiled is None:
            idx = np.arange(self.dim, dtype=np.int64)
            compiled = []
            for t in self.terms:
                xmask, yzmask, ny = t.masks()
                src = idx ^ xmask
                parity = (np.bitwise_count(src & yzmask) & 1).astype(np.float64)
                phase = (1j**ny) * (1.0 - 2.0 * parity) * t.coefficient
                compiled.append((src, phase.astype(np.complex128)))
            self._compiled = compiled
        return self._compiled

    def apply(self, amps: np.ndarray) -> np.ndarray:
        """``H |amps>`` along the last axis (batch-friendly, matrix-free)."""
        out = np.zeros_like(amps)
        for src, phase in self._compile():
            out += amps[..., src] * phase
        return out

    def apply_cols(self, cols: np.ndarray) -> np.ndarray:
        """``H`` applied to each column of a ``(dim, M)`` array."""
        out = np.zeros_like(cols)
        for src, phase in self._compile():
            out += cols[src, :] * phase[:, None]
        return out

    def expectation_amps(self, amps: np.ndarray) -> float:
        val = complex(np.vdot(amps, self.apply(amps)))
        return float(val.real)

    def expectation(self, state: StateVector) -> float:
        return self.expectation_amps(state.amplitudes)

    def __repr__(self) -> str:
        return f"Hamiltonian(n_qubits={self.n_qubits}, n_terms={len(self.terms)})"


@dataclass(frozen=True)
class BondSet:
    """Typed interaction bonds; keys are ``a``/``b``/``c`` (1D) and ``2d``."""

    bonds: dict[str, tuple[tuple[int, int], ...]]

    def __post_init__(self):
        norm = {
            str(k): tuple((int(i), int(j)) for i, j in v) for k, v in self.bonds.items()
        }
        for k, pairs in norm.items():
            for i, j in pairs:
                if i == j:
                    raise ValueError(f"bond ({i}, {j}) in type {k!r} pairs a qubit with itself")
                if i < 0 or j < 0:
                    raise ValueError(f"negative qubit index in bond ({i}, {j})")
        object.__setattr__(self, "bonds", norm)

    @property
    def n_qubits(self) -> int:
        top = 0
        for pairs in self.bonds.values():
            for i, j in pairs:
                top = max(top, i, j)
        return top + 1

    def one_d(self) -> list[tuple[int, int]]:
        out = []
        for k in sorted(self.bonds):
            if k != "2d":
                out.extend(self.bonds[k])
        return out

    def two_d(self) -> list[tuple[int, int]]:
        return list(self.bonds.get("2d", ()))


def _word(n: int, assignments: dict[int, str]) -> str:
    chars = ["I"] * n
    for q, ch in assignments.items():
        chars[q] = ch
    return "".join(chars)


def tfim(n: int, g: float, sign: str = "supplement") -> Hamiltonian:
    """Open-chain transverse-field Ising model.

    ``supplement`` sign: ``H = -sum ZZ - g sum X``; ``main_text`` sign:
    ``H = +sum ZZ + g sum X``.
    """
    if n < 2:
        raise ValueError("TFIM needs at least two qubits")
    if sign == "supplement":
        s = -1.0
    elif sign == "main_text":
        s = 1.0
    else:
        raise ValueError(f"unknown sign convention {sign!r}")
    terms = [
        PauliString(_word(n, {i: "Z", i + 1: "Z"}), s) for i in range(n - 1)
    ]
    terms += [PauliString(_word(n, {i: "X"}), s * g) for i in range(n)]
    return Hamiltonian(n, terms)


def heisenberg(bonds: BondSet, J: float, J_perp: float, lam) -> Hamiltonian:
    """Heisenberg model with isotropic 1D bonds and anisotropic 2D bonds.

    Every bond contributes ``(strength/4) * sum_k lam_k s_k^i s_k^j`` with
    ``lam = (1,1,1)`` and ``strength=J`` on 1D bonds, and the given ``lam``
    with ``strength=J_perp`` on 2D bonds.
    """
    n = bonds.n_qubits
    lx, ly, lz = (float(v) for v in lam)
    terms: list[PauliString] = []

    def add(i, j, strength, weights):
        for ch, w in zip("XYZ", weights):
            if w != 0.0:
                terms.append(PauliString(_word(n, {i: ch, j: ch}), strength * w / 4.0))

    for i, j in bonds.one_d():
        add(i, j, float(J), (1.0, 1.0, 1.0))
    for i, j in bonds.two_d():
        add(i, j, float(J_perp), (lx, ly, lz))
    return Hamiltonian(n, terms)


def to_dense(h: Hamiltonian) -> np.ndarray:
    return h.dense().copy()


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec) > 1e-8))
    ph = vec[idx] / abs(vec[idx])
    return vec / ph


def ground_state(h: Hamiltonian) -> tuple[float, StateVector]:
    """Lowest eigenpair; degenerate cases take the eigensolver's first column
    after fixed-phase normalization (first sizable amplitude real positive)."""
    evals, evecs = h.eig()
    vec = _fix_phase(evecs[:, 0].copy())
    return float(evals[0]), StateVector(h.n_qubits, vec)


def ground_multiplet(h: Hamiltonian, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors within ``tol`` of the ground energy."""
    evals, evecs = h.eig()
    mask = evals - evals[0] <= tol
    return evals[mask].copy(), evecs[:, mask].copy()


def resolve_multiplet_observable(
    h: Hamiltonian, observable, tol: float = 1e-9
) -> list[tuple[float, StateVector]]:
    """Diagonalize an observable inside the (near-)degenerate ground space.

    Returns ``(value, state)`` pairs, one per multiplet member, with the
    states chosen to be observable eigenstates within the subspace.  For a
    unique ground state this reduces to the plain expectation value.
    """
    terms = [observable] if isinstance(observable, PauliString) else list(observable)
    _, basis = ground_multiplet(h, tol)
    k = basis.shape[1]
    obs_applied = np.zeros_like(basis)
    for t in terms:
        obs_applied += pauli_apply_raw(basis.T, h.n_qubits, t).T
    block = basis.conj().T @ obs_applied
    block = (block + block.conj().T) / 2.0
    vals, rot = np.linalg.eigh(block)
    out = []
    for c in range(k):
        vec = _fix_phase(basis @ rot[:, c])
        out.append((float(vals[c]), StateVector(h.n_qubits, vec)))
    return out


def evolve_real(h: Hamiltonian, t: float, state: StateVector) -> StateVector:
    """``exp(-i H t)|state>`` through the cached eigendecomposition."""
    if state.n_qubits != h.n_qubits:
        raise ValueError("state and Hamiltonian register sizes differ")
    evals, evecs = h.eig()
    coeffs = evecs.conj().T @ state.amplitudes
    out = evecs @ (np.exp(-1j * evals * t) * coeffs)
    out /= np.linalg.norm(out)
    return StateVector._from_trusted(h.n_qubits, out)


def evolve_imaginary(h: Hamiltonian, beta_half: float, state: StateVector) -> StateVector:
    """Normalized ``exp(-beta_half * H)|state>`` (pass ``beta/2`` to apply the
    thermal filter at inverse temperature ``beta``)."""
    if state.n_qubits != h.n_qubits:
        raise ValueError("state and Hamiltonian register sizes differ")
    if beta_half < 0:
        raise ValueError("imaginary-time duration must be nonnegative")
    evals, evecs = h.eig()
    coeffs = evecs.conj().T @ state.amplitudes
    # shift by the ground energy to avoid overflow at large beta
    weights = np.exp(-beta_half * (evals - evals[0]))
    out = evecs @ (weights * coeffs)
    nrm = np.linalg.norm(out)
    if nrm == 0.0:
        raise ValueError("filtered state vanished (input orthogonal to all sectors)")
    return StateVector._from_trusted(h.n_qubits, out / nrm)


def free_energy(h: Hamiltonian, beta: float) -> float:
    """``F = -(1/beta) ln Tr exp(-beta H)`` from the exact spectrum."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    evals, _ = h.eig()
    return float(-logsumexp(-beta * evals) / beta)


def thermal_expectation(h: Hamiltonian, observable, beta: float) -> float:
    """``Tr(O exp(-beta H)) / Tr(exp(-beta H))`` for a Pauli-string sum."""
    terms = [observable] if isinstance(observable, PauliString) else list(observable)
    evals, evecs = h.eig()
    w = np.exp(-beta * (evals - evals[0]))
    w /= w.sum()
    obs_applied = np.zeros_like(evecs)
    for t in terms:
        obs_applied += pauli_apply_raw(evecs.T, h.n_qubits, t).T
    diag = np.einsum("ik,ik->k", evecs.conj(), obs_applied)
    return float(np.real(np.sum(w * diag)))


# ---------------------------------------------------------------------------
# text serialization: one line per term, "coeff pauli-word"

def hamiltonian_to_text(h: Hamiltonian) -> str:
    lines = [f"{t.coefficient!r} {t.ops}" for t in h.terms]
    return "\n".join(lines) + "\n"


def hamiltonian_from_text(text: str) -> Hamiltonian:
    terms = []
    n = None
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln:
            continue
        coeff, word = ln.split()
        if n is None:
            n = len(word)
        terms.append(PauliString(word, float(coeff)))
    if n is None:
        raise ValueError("empty Hamiltonian text")
    return Hamiltonian(n, terms)
