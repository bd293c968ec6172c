"""Gate-level circuit representation and execution.

A :class:`CircuitProgram` is an ordered list of gates over ``n_data`` data
qubits (indices ``0 .. n_data-1``) and ``n_ancilla`` ancilla qubits occupying
the highest indices.  Rotation gates are ``exp(-i * theta * G / 2)`` with
``G`` the Pauli generator (``X``, ``Y``, ``Z`` or two-qubit ``XX``/``YY``/
``ZZ``); angles come from a fixed value, a trainable parameter slot, or a
measurement-conditioned expression ``theta * (-1)^r``.

A conditioned gate may appear either after the measurement that fills its
record slot (classical feedforward) or before it.  In the latter case the
gate is resolved by z-sector splitting on the referenced ancilla, which is
exactly the deferred-measurement equivalent; validation rejects programs
where a sector-mixing gate touches that ancilla in between.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .states import (
    MIN_BRANCH_PROB,
    ImpossibleBranchError,
    StateVector,
)

MAX_QUBITS = 14
MAX_ENUM_MEASUREMENTS = 12


class GateKind(enum.Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    XX = "XX"
    YY = "YY"
    ZZ = "ZZ"
    H = "H"
    COND_RZ = "COND_RZ"
    MEASURE_Z = "MEASURE_Z"


_TWO_QUBIT = {GateKind.XX, GateKind.YY, GateKind.ZZ}
_ROTATIONS = {GateKind.RX, GateKind.RY, GateKind.RZ} | _TWO_QUBIT | {GateKind.COND_RZ}
_CONDITIONABLE = {GateKind.COND_RZ} | _TWO_QUBIT
# Gates that mix z-basis sectors of a qubit they act on.
_SECTOR_MIXING = {GateKind.RX, GateKind.RY, GateKind.H, GateKind.XX, GateKind.YY}

_KERNEL_CODE = {
    GateKind.RX: _kernels.KIND_RX,
    GateKind.RY: _kernels.KIND_RY,
    GateKind.RZ: _kernels.KIND_RZ,
    GateKind.XX: _kernels.KIND_XX,
    GateKind.YY: _kernels.KIND_YY,
    GateKind.ZZ: _kernels.KIND_ZZ,
    GateKind.H: _kernels.KIND_H,
    GateKind.COND_RZ: _kernels.KIND_RZ,
}


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None
    param: int | None = None
    cond_slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.angle is not None:
            object.__setattr__(self, "angle", float(self.angle))
        arity = 2 if self.kind in _TWO_QUBIT else 1
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind.value} takes {arity} qubit(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{self.kind.value} qubits must be distinct")
        if self.kind in (GateKind.H, GateKind.MEASURE_Z):
            if self.angle is not None or self.param is not None or self.cond_slot is not None:
                raise ValueError(f"{self.kind.value} carries no angle source")
            return
        if self.kind is GateKind.COND_RZ:
            if self.cond_slot is None or self.angle is None or self.param is not None:
                raise ValueError("COND_RZ needs a base angle and a record slot")
            return
        if self.cond_slot is not None:
            if self.kind not in _CONDITIONABLE:
                raise ValueError(f"{self.kind.value} cannot be measurement-conditioned")
            if self.angle is None or self.param is not None:
                raise ValueError("conditioned gate needs a base angle and no parameter")
            return
        if (self.angle is None) == (self.param is None):
            raise ValueError(f"{self.kind.value} needs exactly one of angle or parameter")


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcomes and Born probabilities of the measurements actually executed."""

    outcomes: tuple[int, ...]
    probabilities: tuple[float, ...]
    restricted_to_data: bool = False

    def __len__(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class CircuitProgram:
    n_data: int
    n_ancilla: int
    ops: tuple[GateOp, ...]
    n_params: int
    measured_qubits: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        n = self.n_data + self.n_ancilla
        if self.n_data < 1 or self.n_ancilla < 0:
            raise ValueError("need n_data >= 1 and n_ancilla >= 0")
        if n > MAX_QUBITS:
            raise ValueError(f"{n} qubits exceeds the dense-statevector cap of {MAX_QUBITS}")
        measured: list[int] = []
        for op in self.ops:
            if max(op.qubits) >= n:
                raise ValueError(f"gate {op} addresses qubit outside register of size {n}")
            if op.param is not None and not 0 <= op.param < self.n_params:
                raise ValueError(f"parameter index {op.param} out of range")
            if op.kind is GateKind.MEASURE_Z:
                if op.qubits[0] in measured:
                    raise ValueError(f"qubit {op.qubits[0]} measured twice")
                measured.append(op.qubits[0])
        object.__setattr__(self, "measured_qubits", tuple(measured))
        # Conditioned gates: slot must exist; if the gate precedes its
        # measurement, the referenced qubit must stay z-diagonal in between.
        slot_pos = [i for i, op in enumerate(self.ops) if op.kind is GateKind.MEASURE_Z]
        for i, op in enumerate(self.ops):
            if op.cond_slot is None:
                continue
            if not 0 <= op.cond_slot < len(measured):
                raise ValueError(f"record slot {op.cond_slot} is never filled")
            j = slot_pos[op.cond_slot]
            if j > i:
                ref = measured[op.cond_slot]
                for mid in self.ops[i + 1 : j]:
                    if mid.kind in _SECTOR_MIXING and ref in mid.qubits:
                        raise ValueError(
                            "sector-mixing gate on a conditioned ancilla before its measurement"
                        )

    @property
    def n_qubits(self) -> int:
        return self.n_data + self.n_ancilla

    @property
    def n_measurements(self) -> int:
        return len(self.measured_qubits)

    @property
    def has_measurements(self) -> bool:
        return bool(self.measured_qubits)


# ---------------------------------------------------------------------------
# gate matrices (used by oracles and tests; execution goes through kernels)

_PAULI_1Q = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)


def rotation_matrix(kind: GateKind, theta: float) -> np.ndarray:
    """Dense matrix of ``exp(-i * theta * G / 2)`` for the gate's generator."""
    if kind is GateKind.H:
        return HADAMARD.copy()
    name = {GateKind.COND_RZ: "RZ"}.get(kind, kind.value)
    if name in ("RX", "RY", "RZ"):
        gen = _PAULI_1Q[name[1]]
        dim = 2
    elif name in ("XX", "YY", "ZZ"):
        p = _PAULI_1Q[name[0]]
        gen = np.kron(p, p)
        dim = 4
    else:
        raise ValueError(f"no matrix for {kind}")
    return (
        np.cos(theta / 2) * np.eye(dim) - 1j * np.sin(theta / 2) * gen
    ).astype(np.complex128)


# ---------------------------------------------------------------------------
# execution

_IDX_CACHE: dict[int, np.ndarray] = {}


def _indices(dim: int) -> np.ndarray:
    arr = _IDX_CACHE.get(dim)
    if arr is None:
        arr = np.arange(dim, dtype=np.int64)
        _IDX_CACHE[dim] = arr
    return arr


def _apply_unitary_op(amps: np.ndarray, op: GateOp, theta: float) -> None:
    code = _KERNEL_CODE[op.kind]
    q1 = op.qubits[0]
    q2 = op.qubits[1] if len(op.qubits) == 2 else 0
    _kernels.apply_gate(amps.reshape(-1, 1), code, q1, q2, theta)


def _apply_sector_conditioned(
    amps: np.ndarray, op: GateOp, ref_qubit: int
) -> np.ndarray:
    """Apply ``exp(-i theta (-1)^b G / 2)`` controlled on the z-sector ``b``
    of ``ref_qubit`` (the deferred-measurement form of a conditioned gate)."""
    plus = amps.copy()
    minus = amps.copy()
    _apply_unitary_op(plus, op, op.angle)
    _apply_unitary_op(minus, op, -op.angle)
    bit = (_indices(amps.shape[0]) >> ref_qubit) & 1
    return np.where(bit == 0, plus, minus)


def _measure_in_place(
    amps: np.ndarray, q: int, outcome: int
) -> float:
    bit = (_indices(amps.shape[0]) >> q) & 1
    keep = bit == outcome
    prob = float(np.sum(np.abs(amps[keep]) ** 2))
    if prob <= MIN_BRANCH_PROB:
        raise ImpossibleBranchError(
            f"measurement branch (qubit {q}, outcome {outcome}) has probability {prob}"
        )
    amps[~keep] = 0.0
    amps /= np.sqrt(prob)
    return prob


def _restrict_to_data(
    prog: CircuitProgram, amps: np.ndarray, outcome_by_qubit: dict[int, int]
) -> np.ndarray | None:
    if prog.n_ancilla == 0:
        return None
    ancillas = range(prog.n_data, prog.n_qubits)
    if any(a not in outcome_by_qubit for a in ancillas):
        return None
    sector = sum(outcome_by_qubit[prog.n_data + k] << k for k in range(prog.n_ancilla))
    d = 2**prog.n_data
    data = amps[sector * d : (sector + 1) * d].copy()
    data /= np.linalg.norm(data)
    return data


def _validate_run_args(prog: CircuitProgram, params, input_state: StateVector) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (prog.n_params,):
        raise ValueError(f"expected {prog.n_params} parameters, got shape {params.shape}")
    if input_state.n_qubits != prog.n_qubits:
        raise ValueError(
            f"input register has {input_state.n_qubits} qubits, program needs {prog.n_qubits}"
        )
    return params


def run_circuit(
    prog: CircuitProgram,
    params,
    input_state: StateVector,
    rng: np.random.Generator | None = None,
) -> tuple[StateVector, MeasurementRecord]:
    """Execute the program, sampling measurements from the Born rule.

    When every ancilla qubit ends in a measured computational-basis state the
    returned state is restricted to the data qubits and the record's
    ``restricted_to_data`` flag is set; otherwise the full register is
    returned.
    """
    params = _validate_run_args(prog, params, input_state)
    if prog.has_measurements and rng is None:
        raise ValueError("program contains measurements but no rng was given")
    amps = input_state.amplitudes.copy()
    outcomes: list[int] = []
    probs: list[float] = []
    outcome_by_qubit: dict[int, int] = {}
    for op in prog.ops:
        if op.kind is GateKind.MEASURE_Z:
            q = op.qubits[0]
            bit = (_indices(amps.shape[0]) >> q) & 1
            p1 = float(np.sum(np.abs(amps[bit == 1]) ** 2))
            outcome = 1 if rng.random() < p1 else 0
            prob = _measure_in_place(amps, q, outcome)
            outcomes.append(outcome)
            probs.append(prob)
            outcome_by_qubit[q] = outcome
            continue
        theta, ref = _resolve_angle(prog, op, params, outcomes)
        if ref is not None:
            amps = _apply_sector_conditioned(amps, op, ref)
        else:
            _apply_unitary_op(amps, op, theta)
    data = _restrict_to_data(prog, amps, outcome_by_qubit)
    record = MeasurementRecord(tuple(outcomes), tuple(probs), data is not None)
    if data is not None:
        return StateVector._from_trusted(prog.n_data, data), record
    amps /= np.linalg.norm(amps)
    return StateVector._from_trusted(prog.n_qubits, amps), record


def _resolve_angle(
    prog: CircuitProgram, op: GateOp, params: np.ndarray, outcomes: list[int]
) -> tuple[float, int | None]:
    """Effective angle of a gate, or ``(base, ref_qubit)`` for a conditioned
    gate whose measurement has not happened yet."""
    if op.param is not None:
        return float(params[op.param]), None
    theta = op.angle if op.angle is not None else 0.0
    if op.cond_slot is None:
        return theta, None
    if op.cond_slot < len(outcomes):
        return theta * (1.0 if outcomes[op.cond_slot] == 0 else -1.0), None
    return theta, prog.measured_qubits[op.cond_slot]


def enumerate_branches(
    prog: CircuitProgram, params, input_state: StateVector
) -> list[tuple[MeasurementRecord, float, StateVector | None]]:
    """All measurement branches with exact Born probabilities.

    Branches with (numerically) zero probability are included with
    ``state=None``.  Probabilities sum to one.
    """
    params = _validate_run_args(prog, params, input_state)
    if prog.n_measurements > MAX_ENUM_MEASUREMENTS:
        raise ValueError(
            f"{prog.n_measurements} measurements exceed the enumeration cap of "
            f"{MAX_ENUM_MEASUREMENTS}"
        )
    # frontier entries: (amps, total_prob, outcomes, per-measurement probs, dead)
    frontier = [(input_state.amplitudes.copy(), 1.0, [], [], False)]
    for op in prog.ops:
        if op.kind is GateKind.MEASURE_Z:
            q = op.qubits[0]
            new_frontier = []
            for amps, prob, outs, ps, dead in frontier:
                if dead:
                    for outcome in (0, 1):
                        new_frontier.append(
                            (amps, 0.0, outs + [outcome], ps + [0.0], True)
                        )
                    continue
                bit = (_indices(amps.shape[0]) >> q) & 1
                for outcome in (0, 1):
                    sub = amps.copy()
                    sub[bit != outcome] = 0.0
                    p = float(np.sum(np.abs(sub) ** 2))
                    if p <= MIN_BRANCH_PROB:
                        new_frontier.append(
                            (sub, prob * p, outs + [outcome], ps + [p], True)
                        )
                    else:
                        sub /= np.sqrt(p)
                        new_frontier.append(
                            (sub, prob * p, outs + [outcome], ps + [p], False)
                        )
            frontier = new_frontier
            continue
        for i in range(len(frontier)):
            amps, prob, outs, ps, dead = frontier[i]
            if dead:
                continue
            theta, ref = _resolve_angle(prog, op, params, outs)
            if ref is not None:
                frontier[i] = (
                    _apply_sector_conditioned(amps, op, ref),
                    prob,
                    outs,
                    ps,
                    dead,
                )
            else:
                _apply_unitary_op(amps, op, theta)
    results = []
    for amps, prob, outs, ps, dead in frontier:
        if dead:
            record = MeasurementRecord(tuple(outs), tuple(ps), False)
            results.append((record, prob, None))
            continue
        outcome_by_qubit = {
            prog.measured_qubits[k]: outs[k] for k in range(len(outs))
        }
        data = _restrict_to_data(prog, amps, outcome_by_qubit)
        record = MeasurementRecord(tuple(outs), tuple(ps), data is not None)
        if data is not None:
            state = StateVector._from_trusted(prog.n_data, data)
        else:
            state = StateVector._from_trusted(prog.n_qubits, amps / np.linalg.norm(amps))
        results.append((record, prob, state))
    return results


def sample_branch_counts(
    prog: CircuitProgram,
    params,
    input_state: StateVector,
    shots: int,
    rng: np.random.Generator,
) -> dict[tuple[int, ...], int]:
    """Empirical outcome-pattern counts over ``shots`` executions.

    The per-shot outcome pattern follows the exact branch distribution, so the
    counts are drawn from a single multinomial over the enumerated branches;
    this is statistically identical to running the circuit ``shots`` times and
    recording the outcomes.
    """
    branches = enumerate_branches(prog, params, input_state)
    probs = np.array([p for _, p, _ in branches])
    probs = probs / probs.sum()
    counts = rng.multinomial(shots, probs)
    return {
        branches[i][0].outcomes: int(c) for i, c in enumerate(counts) if c > 0
    }


def program_unitary(prog: CircuitProgram, params) -> np.ndarray:
    """Dense unitary of a measurement-free program (little-endian indexing)."""
    if prog.has_measurements:
        raise ValueError("program contains measurements; no global unitary exists")
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (prog.n_params,):
        raise ValueError(f"expected {prog.n_params} parameters")
    dim = 2**prog.n_qubits
    batch = np.eye(dim, dtype=np.complex128)
    for op in prog.ops:
        if op.param is not None:
            theta = float(params[op.param])
        else:
            theta = op.angle if op.angle is not None else 0.0
        code = _KERNEL_CODE[op.kind]
        q2 = op.qubits[1] if len(op.qubits) == 2 else 0
        _kernels.apply_gate(batch, code, op.qubits[0], q2, theta)
    # column j of `batch` is U|e_j>, which is the matrix itself
    return batch


def compile_unitary_ops(prog: CircuitProgram):
    """Arrays (kinds, qa, qb, pidx, base) for the kernel-level executor.

    Only plain rotation/H gates are supported; measurements must all be
    terminal and conditioned gates are rejected (training circuits never
    contain them).
    """
    seen_measure = False
    kinds, qa, qb, pidx, base = [], [], [], [], []
    for op in prog.ops:
        if op.kind is GateKind.MEASURE_Z:
            seen_measure = True
            continue
        if seen_measure:
            raise ValueError("gate after measurement; unitary prefix is not terminal")
        if op.cond_slot is not None:
            raise ValueError("conditioned gates are not supported by the compiled path")
        kinds.append(_KERNEL_CODE[op.kind])
        qa.append(op.qubits[0])
        qb.append(op.qubits[1] if len(op.qubits) == 2 else 0)
        pidx.append(op.param if op.param is not None else -1)
        base.append(op.angle if op.angle is not None else 0.0)
    return (
        np.asarray(kinds, dtype=np.int64),
        np.asarray(qa, dtype=np.int64),
        np.asarray(qb, dtype=np.int64),
        np.asarray(pidx, dtype=np.int64),
        np.asarray(base, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# ansatz and Trotter builders

def build_eha(n_data: int, layers: int) -> CircuitProgram:
    """Layered ansatz: per-qubit RX/RY/RZ then XX/YY/ZZ on each neighbor pair.

    Open chain; every gate has its own trainable parameter, so
    ``n_params = layers * (3 n + 3 (n - 1))``.
    """
    if n_data < 1 or layers < 1:
        raise ValueError("need at least one qubit and one layer")
    ops: list[GateOp] = []
    p = 0
    for _ in range(layers):
        p = _eha_layer(ops, range(n_data), p)
    return CircuitProgram(n_data, 0, tuple(ops), p)


def _eha_layer(ops: list[GateOp], qubits, p: int) -> int:
    qubits = list(qubits)
    for q in qubits:
        for kind in (GateKind.RX, GateKind.RY, GateKind.RZ):
            ops.append(GateOp(kind, (q,), param=p))
            p += 1
    for q1, q2 in zip(qubits, qubits[1:]):
        for kind in (GateKind.XX, GateKind.YY, GateKind.ZZ):
            ops.append(GateOp(kind, (q1, q2), param=p))
            p += 1
    return p


def build_eha_with_ancilla(n_data: int, n_ancilla: int, layers: int) -> CircuitProgram:
    """Ansatz with measured ancillas chained off the boundary data qubit.

    Each layer extends the data-qubit layer with single-qubit rotations on
    every ancilla, an XX/YY/ZZ coupling from ancilla 0 to data qubit
    ``n_data - 1`` and nearest-neighbor couplings along the ancilla chain.
    Every ancilla is measured in the Z basis after the final layer.
    """
    if n_ancilla < 1:
        raise ValueError("use build_eha for circuits without ancillas")
    if n_data < 1 or layers < 1:
        raise ValueError("need at least one qubit and one layer")
    ops: list[GateOp] = []
    p = 0
    ancillas = [n_data + k for k in range(n_ancilla)]
    for _ in range(layers):
        p = _eha_layer(ops, range(n_data), p)
        for a in ancillas:
            for kind in (GateKind.RX, GateKind.RY, GateKind.RZ):
                ops.append(GateOp(kind, (a,), param=p))
                p += 1
        pairs = [(n_data - 1, ancillas[0])]
        pairs += [(ancillas[k - 1], ancillas[k]) for k in range(1, n_ancilla)]
        for q1, q2 in pairs:
            for kind in (GateKind.XX, GateKind.YY, GateKind.ZZ):
                ops.append(GateOp(kind, (q1, q2), param=p))
                p += 1
    for a in ancillas:
        ops.append(GateOp(GateKind.MEASURE_Z, (a,)))
    return CircuitProgram(n_data, n_ancilla, tuple(ops), p)


def hij_gates(i: int, j: int, coupling: float, lam, t: float) -> list[GateOp]:
    """Gate sequence for ``exp(-i h_{ij} t)`` with
    ``h_{ij} = (coupling/4) * sum_k lam_k s_k^i s_k^j`` (exact: terms commute)."""
    if i == j:
        raise ValueError("interaction needs two distinct qubits")
    lx, ly, lz = (float(v) for v in lam)
    out = []
    for kind, weight in ((GateKind.XX, lx), (GateKind.YY, ly), (GateKind.ZZ, lz)):
        out.append(GateOp(kind, (i, j), angle=coupling * weight * t / 2.0))
    return out


def build_hij_trotter(i: int, j: int, coupling: float, lam, t: float) -> CircuitProgram:
    """Standalone program for a single two-qubit interaction evolution."""
    ops = hij_gates(i, j, coupling, lam, t)
    return CircuitProgram(max(i, j) + 1, 0, tuple(ops), 0)


def inverse(prog: CircuitProgram, params) -> CircuitProgram:
    """Reversed program with bound, negated angles; measurement-free only."""
    if prog.has_measurements:
        raise ValueError("cannot invert a program containing measurements")
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (prog.n_params,):
        raise ValueError(f"expected {prog.n_params} parameters")
    ops = []
    for op in reversed(prog.ops):
        if op.kind is GateKind.H:
            ops.append(op)
            continue
        theta = float(params[op.param]) if op.param is not None else op.angle
        ops.append(GateOp(op.kind, op.qubits, angle=-theta))
    return CircuitProgram(prog.n_data, prog.n_ancilla, tuple(ops), 0)


# ---------------------------------------------------------------------------
# text serialization (one gate per line)

_HEADER_RE = re.compile(
    r"^# circuit n_data=(\d+) n_ancilla=(\d+) n_params=(\d+)$"
)
_COND_RE = re.compile(r"^c(\d+)\*(.+)$")


def circuit_to_text(prog: CircuitProgram) -> str:
    lines = [
        f"# circuit n_data={prog.n_data} n_ancilla={prog.n_ancilla} "
        f"n_params={prog.n_params}"
    ]
    for op in prog.ops:
        parts = [op.kind.value] + [str(q) for q in op.qubits]
        if op.param is not None:
            parts.append(f"p{op.param}")
        elif op.cond_slot is not None:
            parts.append(f"c{op.cond_slot}*{op.angle!r}")
        elif op.angle is not None:
            parts.append(repr(op.angle))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> CircuitProgram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty circuit text")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"bad circuit header: {lines[0]!r}")
    n_data, n_ancilla, n_params = (int(g) for g in m.groups())
    ops = []
    for ln in lines[1:]:
        tokens = ln.split()
        kind = GateKind(tokens[0])
        arity = 2 if kind in _TWO_QUBIT else 1
        qubits = tuple(int(t) for t in tokens[1 : 1 + arity])
        rest = tokens[1 + arity :]
        if kind in (GateKind.H, GateKind.MEASURE_Z):
            if rest:
                raise ValueError(f"unexpected tokens in line {ln!r}")
            ops.append(GateOp(kind, qubits))
            continue
        if len(rest) != 1:
            raise ValueError(f"expected one angle token in line {ln!r}")
        tok = rest[0]
        if tok.startswith("p") and tok[1:].isdigit():
            ops.append(GateOp(kind, qubits, param=int(tok[1:])))
            continue
        cm = _COND_RE.match(tok)
        if cm:
            ops.append(
                GateOp(kind, qubits, angle=float(cm.group(2)), cond_slot=int(cm.group(1)))
            )
            continue
        ops.append(GateOp(kind, qubits, angle=float(tok)))
    return CircuitProgram(n_data, n_ancilla, tuple(ops), n_params)
