"""Step-wise ensemble evolution: per-step training with adaptive switching
between unitary and partially-measured circuits, loss functions, gradients,
and the generation pipeline.

Training losses are deterministic: for circuits with measured ancillas the
per-sample quantity is the exact Born-weighted average over all measurement
branches, which is what trajectory sampling estimates in expectation.  For
the fidelity and energy observables this average collapses to an expectation
value of ``O (x) I_ancilla`` on the pre-measurement state, so those losses
stay smooth even through measurements.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .circuits import (
    CircuitProgram,
    GateKind,
    MeasurementRecord,
    build_eha,
    build_eha_with_ancilla,
    circuit_from_text,
    circuit_to_text,
    compile_unitary_ops,
    run_circuit,
)
from .hamiltonians import Hamiltonian
from .states import StateVector, entanglement_entropy

_LOG2E = 1.0 / math.log(2.0)

DEFAULT_FIDELITY_THRESHOLD = 0.01
DEFAULT_ENTROPY_THRESHOLD = 1e-3


class Observable(enum.Enum):
    FIDELITY = "FIDELITY"
    ENTROPY = "ENTROPY"
    ENERGY = "ENERGY"


class Aggregator(enum.Enum):
    MEAN = "MEAN"
    MSE = "MSE"


class StepKind(enum.Enum):
    UNITARY = "UNITARY"
    PARTIALLY_MEASURED = "PARTIALLY_MEASURED"


@dataclass
class Ensemble:
    """M labeled pure states approximating a density matrix at one step."""

    states: list[StateVector]
    tau: int
    seeds: tuple[int, ...]
    records: list[MeasurementRecord] | None = None

    def __post_init__(self):
        if not self.states:
            raise ValueError("ensemble needs at least one state")
        n = self.states[0].n_qubits
        if any(s.n_qubits != n for s in self.states):
            raise ValueError("ensemble states live on different registers")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(self.seeds) != len(self.states):
            raise ValueError("need one trajectory seed per state")

    @property
    def M(self) -> int:
        return len(self.states)

    @property
    def n_qubits(self) -> int:
        return self.states[0].n_qubits

    def batch(self) -> np.ndarray:
        return np.stack([s.amplitudes for s in self.states])

    @classmethod
    def from_batch(cls, batch: np.ndarray, tau: int, seeds, records=None) -> "Ensemble":
        n = int(round(math.log2(batch.shape[1])))
        states = [StateVector._from_trusted(n, row.copy()) for row in batch]
        return cls(states, tau, tuple(seeds), records)


@dataclass
class LossSpec:
    """Observable / aggregator pairing plus the per-step target payload.

    ``target`` is an :class:`Ensemble` for FIDELITY (paired by trajectory
    index), the target entropy for ENTROPY, and a data-register
    :class:`Hamiltonian` for ENERGY.
    """

    observable: Observable
    target: object
    aggregator: Aggregator | None = None
    entropy_cut: tuple[int, ...] = (0,)

    def __post_init__(self):
        expected = (
            Aggregator.MSE if self.observable is Observable.ENTROPY else Aggregator.MEAN
        )
        if self.aggregator is None:
            self.aggregator = expected
        elif self.aggregator is not expected:
            raise ValueError(
                f"{self.observable.value} pairs with {expected.value}, "
                f"got {self.aggregator.value}"
            )
        if self.observable is Observable.FIDELITY and not isinstance(self.target, Ensemble):
            raise ValueError("FIDELITY loss needs a target Ensemble")
        if self.observable is Observable.ENTROPY:
            self.target = float(self.target)
            self.entropy_cut = tuple(sorted(int(q) for q in self.entropy_cut))
        if self.observable is Observable.ENERGY and not isinstance(self.target, Hamiltonian):
            raise ValueError("ENERGY loss needs a Hamiltonian")


@dataclass
class QfmStep:
    tau: int
    kind: StepKind
    circuit: CircuitProgram
    params_opt: np.ndarray
    final_loss: float
    converged: bool = True
    n_iterations: int = 0
    # optimizer updates spent on this step across all trained candidates
    n_updates_total: int = 0

    def __post_init__(self):
        self.params_opt = np.asarray(self.params_opt, dtype=np.float64)
        has_meas = self.circuit.has_measurements
        if self.kind is StepKind.UNITARY and has_meas:
            raise ValueError("UNITARY step must not contain measurements")
        if self.kind is StepKind.PARTIALLY_MEASURED:
            ancillas = set(range(self.circuit.n_data, self.circuit.n_qubits))
            if set(self.circuit.measured_qubits) != ancillas or not ancillas:
                raise ValueError("PARTIALLY_MEASURED step must measure every ancilla once")


@dataclass
class QfmModel:
    n_data: int
    n_ancilla: int
    layers: int
    total_steps: int
    steps: list[QfmStep] = field(default_factory=list)

    def __post_init__(self):
        for i, step in enumerate(self.steps):
            if step.tau != i + 1:
                raise ValueError("steps must be indexed 1..T contiguously")

    @property
    def n_trained(self) -> int:
        return len(self.steps)


@dataclass
class TrainConfig:
    """Optimizer and acceptance settings for one training step.

    ``threshold`` is the absolute step-acceptance value (task runners supply
    oracle-informed values for energy losses).  Parameters are initialized
    uniformly in ``[-c/L, +c/L]`` with ``c = init_radius_constant``.
    """

    threshold: float
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iterations: int = 500
    convergence_window: int = 20
    convergence_delta: float = 1e-6
    init_radius_constant: float = math.pi
    gradient_method: str = "adjoint"
    target_loss: float | None = None
    force_kind: StepKind | None = None
    # independent re-initializations per candidate; the best result wins and
    # remaining restarts are skipped once target_loss is reached
    n_restarts: int = 1
    seed: int = 0


def default_threshold(observable: Observable, ground_energy: float | None = None) -> float:
    if observable is Observable.FIDELITY:
        return DEFAULT_FIDELITY_THRESHOLD
    if observable is Observable.ENTROPY:
        return DEFAULT_ENTROPY_THRESHOLD
    if ground_energy is None:
        raise ValueError("ENERGY threshold needs the oracle ground energy")
    return ground_energy + 0.02


def ancilla_prep(tau: int, total_steps: int, n_ancilla: int) -> StateVector:
    """Product state ``Ry(tau*pi/T)^(x)n_a |0...0>`` on the ancilla register."""
    if not 0 <= tau <= total_steps:
        raise ValueError(f"step {tau} outside 0..{total_steps}")
    if n_ancilla < 1:
        raise ValueError("need at least one ancilla")
    angle = math.pi * tau / total_steps
    one = np.array([math.cos(angle / 2.0), math.sin(angle / 2.0)], dtype=np.complex128)
    amps = np.array([1.0], dtype=np.complex128)
    for _ in range(n_ancilla):
        amps = np.kron(one, amps)
    return StateVector._from_trusted(n_ancilla, amps)


def prepend_ancillas(data_batch: np.ndarray, anc: StateVector) -> np.ndarray:
    """Tensor the ancilla state onto each row (ancillas take the high bits)."""
    full = np.einsum("a,md->mad", anc.amplitudes, data_batch)
    return np.ascontiguousarray(full.reshape(data_batch.shape[0], -1))


# ---------------------------------------------------------------------------
# losses on generated ensembles

def loss(spec: LossSpec, generated: Ensemble) -> float:
    """Evaluate the loss on an already-generated (data-register) ensemble."""
    if spec.observable is Observable.FIDELITY:
        target: Ensemble = spec.target
        if target.M != generated.M:
            raise ValueError("target and generated ensembles must pair 1:1")
        t = target.batch()
        g = generated.batch()
        if t.shape != g.shape:
            raise ValueError("target and generated states have different sizes")
        fid = np.abs(np.einsum("md,md->m", t.conj(), g)) ** 2
        return float(1.0 - fid.mean())
    if spec.observable is Observable.ENTROPY:
        errs = [
            spec.target - entanglement_entropy(s, spec.entropy_cut)
            for s in generated.states
        ]
        return float(np.mean(np.square(errs)))
    h: Hamiltonian = spec.target
    g = generated.batch()
    if g.shape[1] != h.dim:
        raise ValueError("ensemble and Hamiltonian register sizes differ")
    vals = np.real(np.einsum("md,md->m", g.conj(), h.apply(g)))
    return float(vals.mean())


def trace_norm_risk(target: Ensemble, generated: Ensemble) -> float:
    """``(1/4M) sum_m || |a><a| - |b><b| ||_1^2`` for paired pure states.

    For pure states the trace norm is ``2 sqrt(1 - |<a|b>|^2)``, so this
    equals ``(1/M) sum_m (1 - |<a|b>|^2)``.
    """
    if target.M != generated.M:
        raise ValueError("ensembles must pair 1:1")
    t = target.batch()
    g = generated.batch()
    if t.shape != g.shape:
        raise ValueError("paired states have different sizes")
    fid = np.abs(np.einsum("md,md->m", t.conj(), g)) ** 2
    return float(np.mean(1.0 - fid))


# ---------------------------------------------------------------------------
# deterministic training objective (branch-expected loss)

def _cut_layout(n_data: int, cut: tuple[int, ...]) -> tuple[list[int], list[int], int]:
    if not cut or any(q < 0 or q >= n_data for q in cut):
        raise ValueError(f"entropy cut {cut} invalid for {n_data} data qubits")
    kept_axes = [n_data - 1 - q for q in sorted(cut, reverse=True)]
    other_axes = [a for a in range(n_data) if a not in kept_axes]
    return kept_axes, other_axes, 2 ** len(cut)


class _TrainingObjective:
    """Branch-expected loss of one step circuit on a fixed input batch.

    States are held column-wise (``(dim, M)``) to match the kernel layout;
    measured ancillas factorize the row index into ``(sector, data)`` blocks.
    """

    def __init__(self, prog: CircuitProgram, inputs: np.ndarray, spec: LossSpec):
        if inputs.ndim != 2 or inputs.shape[1] != 2**prog.n_qubits:
            raise ValueError("input batch does not match the circuit register")
        self.prog = prog
        self.arrays = compile_unitary_ops(prog)
        self.cols = np.ascontiguousarray(inputs.T, dtype=np.complex128)
        self.spec = spec
        self.M = inputs.shape[0]
        self.n_data = prog.n_data
        self.d_data = 2**prog.n_data
        self.sectors = 2**prog.n_ancilla if prog.has_measurements else 1
        if self.sectors * self.d_data != inputs.shape[1]:
            raise ValueError("unmeasured ancillas are not supported in training")
        if spec.observable is Observable.FIDELITY:
            t = spec.target.batch()
            if t.shape != (self.M, self.d_data):
                raise ValueError("fidelity targets must pair with the data register")
            self.targets = t
        elif spec.observable is Observable.ENERGY:
            if spec.target.dim != self.d_data:
                raise ValueError("energy Hamiltonian must act on the data register")
            self.h = spec.target
        else:
            self.kept_axes, self.other_axes, self.d_cut = _cut_layout(
                self.n_data, spec.entropy_cut
            )
            self.e_target = float(spec.target)

    # -- forward -----------------------------------------------------------
    def _forward_split(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        outr = np.ascontiguousarray(self.cols.real)
        outi = np.ascontiguousarray(self.cols.imag)
        kinds, qa, qb, pidx, base = self.arrays
        _kernels.run_forward_split(outr, outi, kinds, qa, qb, pidx, base, params)
        return outr, outi

    def _forward(self, params: np.ndarray) -> np.ndarray:
        outr, outi = self._forward_split(params)
        return outr + 1j * outi

    def _branch_view(self, out: np.ndarray) -> np.ndarray:
        return out.reshape(self.sectors, self.d_data, self.M)

    def _entropy_flat(self, out: np.ndarray) -> np.ndarray:
        """Unnormalized branch vectors as rows: shape (sectors*M, d_data)."""
        view = self._branch_view(out)
        return np.ascontiguousarray(view.transpose(0, 2, 1).reshape(-1, self.d_data))

    def _entropy_mats(self, flat: np.ndarray) -> np.ndarray:
        k = flat.shape[0]
        t = flat.reshape((k,) + (2,) * self.n_data)
        t = np.transpose(t, [0] + [a + 1 for a in self.kept_axes + self.other_axes])
        return np.ascontiguousarray(t.reshape(k, self.d_cut, -1))

    def value(self, params) -> float:
        params = np.asarray(params, dtype=np.float64)
        out = self._forward(params)
        if self.spec.observable is Observable.FIDELITY:
            view = self._branch_view(out)
            ov = np.einsum("md,sdm->sm", self.targets.conj(), view)
            return float(1.0 - np.sum(np.abs(ov) ** 2) / self.M)
        if self.spec.observable is Observable.ENERGY:
            view = self._branch_view(out)
            acc = 0.0
            for s in range(self.sectors):
                block = view[s]
                acc += float(
                    np.real(np.einsum("dm,dm->", block.conj(), self.h.apply_cols(block)))
                )
            return acc / self.M
        mats = self._entropy_mats(self._entropy_flat(out))
        p = np.einsum("kab,kab->k", mats.conj(), mats).real
        total = 0.0
        valid = p > 1e-14
        if np.any(valid):
            gram = np.einsum("kab,kcb->kac", mats[valid], mats[valid].conj())
            lam = np.linalg.eigvalsh(gram / p[valid, None, None])
            ent = np.where(lam > 1e-12, -lam * np.log2(np.maximum(lam, 1e-12)), 0.0)
            errs = self.e_target - ent.sum(axis=1)
            total = float(np.sum(p[valid] * errs**2))
        return total / self.M

    # -- adjoint gradient ----------------------------------------------------
    def _cograd(self, out: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss value and d L / d conj(psi_out), both in column layout."""
        if self.spec.observable is Observable.FIDELITY:
            view = self._branch_view(out)
            ov = np.einsum("md,sdm->sm", self.targets.conj(), view)
            val = float(1.0 - np.sum(np.abs(ov) ** 2) / self.M)
            b = -np.einsum("sm,md->sdm", ov, self.targets) / self.M
            return val, b.reshape(out.shape)
        if self.spec.observable is Observable.ENERGY:
            view = self._branch_view(out)
            b = np.empty_like(view)
            acc = 0.0
            for s in range(self.sectors):
                block = view[s]
                hout = self.h.apply_cols(block)
                acc += float(np.real(np.einsum("dm,dm->", block.conj(), hout)))
                b[s] = hout / self.M
            return acc / self.M, b.reshape(out.shape)
        flat = self._entropy_flat(out)
        mats = self._entropy_mats(flat)
        k = mats.shape[0]
        p = np.einsum("kab,kab->k", mats.conj(), mats).real
        b_mats = np.zeros_like(mats)
        total = 0.0
        valid = np.flatnonzero(p > 1e-14)
        if valid.size:
            sub = mats[valid]
            psub = p[valid]
            gram = np.einsum("kab,kcb->kac", sub, sub.conj())
            lam, w = np.linalg.eigh(gram / psub[:, None, None])
            lamc = np.maximum(lam, 1e-12)
            ent = np.where(lam > 1e-12, -lam * np.log2(lamc), 0.0).sum(axis=1)
            errs = self.e_target - ent
            total = float(np.sum(psub * errs**2))
            # M_k = -W diag(log2 lam + log2 e) W^dag ;  t = Tr[M rho] = S - log2 e
            diag = -(np.log2(lamc) + _LOG2E)
            mmat = np.einsum("kij,kj,klj->kil", w, diag, w.conj())
            t_r = ent - _LOG2E
            coef = errs**2 + 2.0 * errs * t_r
            op_u = np.einsum("kij,kjb->kib", mmat, sub)
            b_mats[valid] = coef[:, None, None] * sub - 2.0 * errs[:, None, None] * op_u
        # scatter the (cut, rest) layout back to per-branch data rows ...
        perm = [0] + [a + 1 for a in self.kept_axes + self.other_axes]
        inv = np.argsort(perm)
        b_flat = np.transpose(
            b_mats.reshape((k,) + (2,) * self.n_data), inv
        ).reshape(k, self.d_data)
        # ... then back to the (sector, data, M) column layout
        b = b_flat.reshape(self.sectors, self.M, self.d_data).transpose(0, 2, 1)
        return total / self.M, np.ascontiguousarray(b).reshape(out.shape) / self.M

    def value_and_grad(self, params) -> tuple[float, np.ndarray]:
        params = np.asarray(params, dtype=np.float64)
        outr, outi = self._forward_split(params)
        val, b = self._cograd(outr + 1j * outi)
        grads = np.zeros_like(params)
        kinds, qa, qb, pidx, base = self.arrays
        br = np.ascontiguousarray(b.real)
        bi = np.ascontiguousarray(b.imag)
        _kernels.run_adjoint_split(
            outr, outi, br, bi, kinds, qa, qb, pidx, base, params, grads
        )
        return val, grads


def gradient(
    spec: LossSpec,
    step: QfmStep | CircuitProgram,
    inputs: Ensemble,
    params,
    method: str = "fd",
    fd_step: float = 1e-4,
) -> np.ndarray:
    """Gradient of the branch-expected training loss.

    ``fd`` is central finite differences with ``h = fd_step``;
    ``parameter_shift`` (FIDELITY/ENERGY only) uses shifts of +-pi/2, exact
    for the +-1/2-eigenvalue generators used here; ``adjoint`` is the
    reverse-mode analytic gradient.
    """
    prog = step.circuit if isinstance(step, QfmStep) else step
    params = np.asarray(params, dtype=np.float64)
    obj = _TrainingObjective(prog, inputs.batch(), spec)
    if method == "adjoint":
        _, g = obj.value_and_grad(params)
        return g
    if method == "parameter_shift":
        if spec.observable is Observable.ENTROPY:
            raise ValueError("parameter-shift does not apply to the entropy loss")
        shift = math.pi / 2.0
    elif method == "fd":
        shift = fd_step
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    g = np.zeros_like(params)
    for j in range(params.size):
        probe = params.copy()
        probe[j] += shift
        hi = obj.value(probe)
        probe[j] -= 2 * shift
        lo = obj.value(probe)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("loss evaluated to a non-finite value")
        g[j] = (hi - lo) / 2.0 if method == "parameter_shift" else (hi - lo) / (2 * shift)
    return g


# ---------------------------------------------------------------------------
# optimizer and per-step training

def _adam_minimize(objective: _TrainingObjective, theta0: np.ndarray, cfg: TrainConfig):
    theta = theta0.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_loss = math.inf
    best_theta = theta.copy()
    since_improvement = 0
    iters = 0
    for it in range(1, cfg.max_iterations + 1):
        if cfg.gradient_method == "adjoint":
            val, g = objective.value_and_grad(theta)
        else:
            val = objective.value(theta)
            g = gradient_from_objective(objective, theta, cfg.gradient_method)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            raise FloatingPointError("optimizer diverged: non-finite loss or gradient")
        iters = it
        if val < best_loss - cfg.convergence_delta:
            since_improvement = 0
        else:
            since_improvement += 1
        if val < best_loss:
            best_loss = val
            best_theta = theta.copy()
        if cfg.target_loss is not None and best_loss <= cfg.target_loss:
            break
        if since_improvement >= cfg.convergence_window:
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
    final = objective.value(best_theta)
    if final < best_loss:
        best_loss = final
    return best_theta, float(best_loss), iters


def gradient_from_objective(obj: _TrainingObjective, theta, method: str) -> np.ndarray:
    if method == "adjoint":
        return obj.value_and_grad(theta)[1]
    shift = math.pi / 2.0 if method == "parameter_shift" else 1e-4
    g = np.zeros_like(theta)
    for j in range(theta.size):
        probe = theta.copy()
        probe[j] += shift
        hi = obj.value(probe)
        probe[j] -= 2 * shift
        lo = obj.value(probe)
        g[j] = (hi - lo) / 2.0 if method == "parameter_shift" else (hi - lo) / (2 * shift)
    return g


def _init_params(n_params: int, layers: int, cfg: TrainConfig, salt: int) -> np.ndarray:
    radius = cfg.init_radius_constant / layers
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, salt)))
    return rng.uniform(-radius, radius, size=n_params)


def train_step(
    model: QfmModel,
    tau: int,
    spec: LossSpec,
    train_inputs: Ensemble,
    config: TrainConfig,
) -> QfmStep:
    """Train the circuit for step ``tau``.

    The unitary candidate is optimized first; if its loss stays above the
    acceptance threshold and ancillas are available, the measured candidate is
    trained on ancilla-prepended inputs.  When neither candidate meets the
    threshold the better one is emitted with ``converged=False``.
    """
    if model.n_trained != tau - 1:
        raise ValueError(f"steps 1..{tau - 1} must be trained before step {tau}")
    if train_inputs.n_qubits != model.n_data:
        raise ValueError("training inputs must live on the data register")
    data_batch = train_inputs.batch()
    candidates = []

    def train_candidate(kind: StepKind) -> QfmStep:
        if kind is StepKind.UNITARY:
            prog = build_eha(model.n_data, model.layers)
            batch = data_batch
        else:
            prog = build_eha_with_ancilla(model.n_data, model.n_ancilla, model.layers)
            anc = ancilla_prep(tau, model.total_steps, model.n_ancilla)
            batch = prepend_ancillas(data_batch, anc)
        obj = _TrainingObjective(prog, batch, spec)
        theta, best, iters = None, math.inf, 0
        goal = config.target_loss if config.target_loss is not None else config.threshold
        for restart in range(max(1, config.n_restarts)):
            salt = 2 * tau + (kind is StepKind.PARTIALLY_MEASURED) + 1000 * restart
            theta0 = _init_params(prog.n_params, model.layers, config, salt=salt)
            th, val, its = _adam_minimize(obj, theta0, config)
            iters += its
            if val < best:
                theta, best = th, val
            if best <= goal:
                break
        return QfmStep(tau, kind, prog, theta, best, converged=best <= config.threshold, n_iterations=iters)

    if config.force_kind is not None:
        kinds = [config.force_kind]
    else:
        kinds = [StepKind.UNITARY]
        if model.n_ancilla >= 1:
            kinds.append(StepKind.PARTIALLY_MEASURED)
    total_updates = 0
    for kind in kinds:
        step = train_candidate(kind)
        total_updates += step.n_iterations
        step.n_updates_total = total_updates
        candidates.append(step)
        if step.converged:
            return step
    best = min(candidates, key=lambda s: s.final_loss)
    best.n_updates_total = total_updates
    return best


# ---------------------------------------------------------------------------
# generation

def apply_step(
    model: QfmModel,
    step: QfmStep,
    ens: Ensemble,
    streams: list[np.random.Generator],
) -> Ensemble:
    """Advance every trajectory of ``ens`` through one trained step."""
    if step.kind is StepKind.UNITARY:
        cols = np.ascontiguousarray(ens.batch().T)
        kinds, qa, qb, pidx, base = compile_unitary_ops(step.circuit)
        _kernels.run_forward(cols, kinds, qa, qb, pidx, base, step.params_opt)
        return Ensemble.from_batch(cols.T, step.tau, ens.seeds)
    anc = ancilla_prep(step.tau, model.total_steps, model.n_ancilla)
    states = []
    records = []
    for m, state in enumerate(ens.states):
        full = np.kron(anc.amplitudes, state.amplitudes)
        full_state = StateVector._from_trusted(step.circuit.n_qubits, full)
        out, record = run_circuit(step.circuit, step.params_opt, full_state, streams[m])
        if not record.restricted_to_data:
            raise RuntimeError("measured step did not collapse every ancilla")
        states.append(out)
        records.append(record)
    return Ensemble(states, step.tau, ens.seeds, records)


def trajectory_streams(seeds) -> list[np.random.Generator]:
    return [np.random.default_rng(np.random.SeedSequence(s)) for s in seeds]


def generate(
    model: QfmModel,
    initial: Ensemble,
    upto: int,
    rng: np.random.Generator | None = None,
) -> list[Ensemble]:
    """Evolve every trajectory through steps ``1..upto``; returns the list of
    ensembles for steps ``0..upto`` (index 0 is the initial ensemble).

    Measurement sampling uses one independent stream per trajectory derived
    from the ensemble's per-state seeds, so repeated calls are reproducible.
    """
    if upto > model.n_trained:
        raise ValueError(f"model is trained through step {model.n_trained}, not {upto}")
    if initial.n_qubits != model.n_data:
        raise ValueError("initial ensemble must live on the data register")
    seeds = initial.seeds
    if rng is not None and not seeds:
        seeds = tuple(int(s) for s in rng.integers(0, 2**63 - 1, size=initial.M))
    streams = trajectory_streams(seeds)
    history = [initial]
    current = initial
    for tau in range(1, upto + 1):
        current = apply_step(model, model.steps[tau - 1], current, streams)
        history.append(current)
    return history


def generate_single(
    model: QfmModel, state: StateVector, upto: int, rng: np.random.Generator
) -> StateVector:
    """Evolve one trajectory through steps ``1..upto`` (used by chain samplers)."""
    if upto > model.n_trained:
        raise ValueError(f"model is trained through step {model.n_trained}, not {upto}")
    cur = state
    for tau in range(1, upto + 1):
        step = model.steps[tau - 1]
        if step.kind is StepKind.UNITARY:
            cur, _ = run_circuit(step.circuit, step.params_opt, cur)
        else:
            anc = ancilla_prep(tau, model.total_steps, model.n_ancilla)
            full = StateVector._from_trusted(
                step.circuit.n_qubits, np.kron(anc.amplitudes, cur.amplitudes)
            )
            cur, record = run_circuit(step.circuit, step.params_opt, full, rng)
            if not record.restricted_to_data:
                raise RuntimeError("measured step did not collapse every ancilla")
    return cur


# ---------------------------------------------------------------------------
# model checkpoints (text; floats round-trip exactly via repr)

def save_model(model: QfmModel, path) -> None:
    lines = [
        "qfm-model v1",
        f"n_data {model.n_data}",
        f"n_ancilla {model.n_ancilla}",
        f"layers {model.layers}",
        f"total_steps {model.total_steps}",
        f"n_trained {model.n_trained}",
    ]
    for step in model.steps:
        lines.append(
            f"step {step.tau} {step.kind.value} converged={int(step.converged)} "
            f"final_loss={step.final_loss!r} n_iterations={step.n_iterations} "
            f"n_updates_total={step.n_updates_total}"
        )
        lines.append("params " + " ".join(repr(float(x)) for x in step.params_opt))
        circuit_text = circuit_to_text(step.circuit)
        lines.append(f"circuit {len(circuit_text.splitlines())}")
        lines.append(circuit_text.rstrip("\n"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> QfmModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "qfm-model v1":
        raise ValueError("not a model checkpoint")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("step "):
        key, val = lines[i].split()
        header[key] = int(val)
        i += 1
    steps = []
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        tau = int(parts[1])
        kind = StepKind(parts[2])
        meta = dict(p.split("=", 1) for p in parts[3:])
        i += 1
        params = np.array([float(x) for x in lines[i].split()[1:]], dtype=np.float64)
        i += 1
        n_circ = int(lines[i].split()[1])
        i += 1
        circuit = circuit_from_text("\n".join(lines[i : i + n_circ]))
        i += n_circ
        steps.append(
            QfmStep(
                tau,
                kind,
                circuit,
                params,
                float(meta["final_loss"]),
                converged=bool(int(meta["converged"])),
                n_iterations=int(meta["n_iterations"]),
                n_updates_total=int(meta.get("n_updates_total", meta["n_iterations"])),
            )
        )
    return QfmModel(
        n_data=header["n_data"],
        n_ancilla=header["n_ancilla"],
        layers=header["layers"],
        total_steps=header["total_steps"],
        steps=steps,
    )
