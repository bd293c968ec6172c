"""Config-driven experiment runners: benchmark tasks, ablations, the
free-energy pipeline, the superdiffusion scan, oracle utilities and
machine-readable run reports.

Every random number in a run derives from the master seed, so a rerun with
the same config and seed reproduces the report byte for byte (timing is kept
in a separate report key that the fingerprint excludes).
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, engine, metrics, superdiffusion, thermo
from .circuits import rotation_matrix, GateKind
from .engine import (
    Ensemble,
    LossSpec,
    Observable,
    QfmModel,
    StepKind,
    TrainConfig,
)
from .hamiltonians import (
    Hamiltonian,
    free_energy,
    ground_state,
    resolve_multiplet_observable,
    tfim,
)
from .states import PauliString, StateVector, apply_1q, basis_state, haar_random_state

TASKS = ("ring", "entanglement", "tfim_phase", "jarzynski", "superdiffusion", "ablation")

KL_TARGET = 0.05


# ---------------------------------------------------------------------------
# per-task configurations (defaults reproduce the published hyperparameters)

@dataclass
class RingConfig:
    layers: int = 5
    total_steps: int = 20
    M: int = 100
    bins: int = 20
    threshold: float = engine.DEFAULT_FIDELITY_THRESHOLD
    # the <Y> distribution piles up at its support edges, so the fidelity
    # loss must be driven far below the acceptance threshold for a clean KL
    target_loss: float = 1e-8
    max_iterations: int = 2000
    convergence_window: int = 50
    convergence_delta: float = 1e-9
    seed: int = 0


@dataclass
class EntanglementConfig:
    n: int = 2
    n_ancilla: int = 1
    layers: int = 40
    total_steps: int = 10
    M: int = 100
    # a fixed circuit cannot pin the entropy of every trajectory exactly, so
    # the per-state spread floors around sigma ~ 0.02; bins of width 0.1
    # (targets at bin centers) keep that spread inside one bin
    bin_width: float = 0.1
    threshold: float = engine.DEFAULT_ENTROPY_THRESHOLD
    # drive the entropy MSE well below the acceptance threshold so the
    # per-state spread stays within one histogram bin
    target_loss: float = 2.5e-5
    max_iterations: int = 3000
    convergence_window: int = 80
    convergence_delta: float = 1e-10
    n_restarts: int = 3
    seed: int = 0
    force_kind: str | None = None  # "unitary" | "measured" for ablations


@dataclass
class TfimPhaseConfig:
    n_min: int = 2
    n_max: int = 8
    n_ancilla: int = 1
    layers: int = 20
    total_steps: int = 15
    M: int = 100
    g_max: float = 1.5
    bins: int = 20
    energy_margin: float = 0.02
    # tighter optimizer exit below the acceptance margin; keeps generated
    # states close to the reachable ground manifold
    target_margin: float = 0.004
    degeneracy_window: float = 0.04
    sign: str = "supplement"
    # near the crossover the energy gain from merging the quasi-degenerate
    # doublet is small, so those steps need a long optimizer leash
    max_iterations: int = 2000
    convergence_window: int = 100
    convergence_delta: float = 1e-9
    n_restarts: int = 3
    seed: int = 0


@dataclass
class SuperdiffusionScanConfig:
    base: superdiffusion.SuperdiffusionConfig = field(
        default_factory=superdiffusion.SuperdiffusionConfig
    )
    t_max: int = 20
    lambdas: tuple = ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    include_branch_curves: bool = True
    seed: int = 0


# ---------------------------------------------------------------------------
# report plumbing

def _new_report(task: str, config) -> dict:
    return {
        "task": task,
        "config": dataclasses.asdict(config),
        "versions": {"qfm": __version__, "numpy": np.__version__},
        "seed": getattr(config, "seed", None),
        "checks": [],
    }


def _add_check(report: dict, name: str, value: float, threshold: float, ok: bool) -> None:
    report["checks"].append(
        {"name": name, "value": value, "threshold": threshold, "pass": bool(ok)}
    )


def report_fingerprint(report: dict) -> str:
    """Canonical JSON of everything deterministic in the report."""
    clean = {k: v for k, v in report.items() if k != "timing"}
    return json.dumps(clean, sort_keys=True)


def write_report(outdir, report: dict) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _hist_rows(task_edges, hists: list[tuple[str, metrics.Histogram]]) -> list[dict]:
    rows = []
    for name, h in hists:
        for b in range(len(h.counts)):
            rows.append(
                {
                    "series": name,
                    "bin_lo": h.edges[b],
                    "bin_hi": h.edges[b + 1],
                    "count": h.counts[b],
                }
            )
    return rows


def _spawn_seeds(master: int, tag: int, count: int) -> tuple[int, ...]:
    ss = np.random.SeedSequence((master, tag))
    return tuple(int(x) for x in ss.generate_state(count, dtype=np.uint64) >> 1)


# ---------------------------------------------------------------------------
# ring-state evolution

def _ring_initial(config: RingConfig) -> tuple[Ensemble, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    angles = rng.uniform(0.0, 2.0 * np.pi, config.M)
    states = [
        StateVector(1, np.array([np.cos(g), -1j * np.sin(g)])) for g in angles
    ]
    seeds = _spawn_seeds(config.seed, 2, config.M)
    return Ensemble(states, 0, seeds), angles


def _ring_targets(initial: Ensemble, total_steps: int) -> list[Ensemble]:
    """Exact target ensembles: step tau applies exp(-i s_z pi tau / T)."""
    out = [initial]
    current = initial
    for tau in range(1, total_steps + 1):
        rz = rotation_matrix(GateKind.RZ, 2.0 * np.pi * tau / total_steps)
        states = [apply_1q(s, 0, rz) for s in current.states]
        current = Ensemble(states, tau, initial.seeds)
        out.append(current)
    return out


def _y_values(ens: Ensemble) -> list[float]:
    from .states import expectation

    return [expectation(s, PauliString("Y")) for s in ens.states]


def run_ring(config: RingConfig | None = None, outdir=None) -> dict:
    """Single-qubit ensemble rotating about the z axis, trained per step on
    the swap-test (fidelity) loss."""
    config = config or RingConfig()
    t_start = time.perf_counter()
    report = _new_report("ring", config)
    initial, angles = _ring_initial(config)
    targets = _ring_targets(initial, config.total_steps)
    model = QfmModel(1, 0, config.layers, config.total_steps)
    edges = metrics.uniform_edges(-1.0, 1.0, config.bins)
    current = initial
    streams = engine.trajectory_streams(initial.seeds)
    per_step = []
    hists = []
    kls = []
    for tau in range(1, config.total_steps + 1):
        spec = LossSpec(Observable.FIDELITY, targets[tau])
        tc = TrainConfig(
            threshold=config.threshold,
            seed=config.seed,
            target_loss=config.target_loss,
            max_iterations=config.max_iterations,
            convergence_window=config.convergence_window,
            convergence_delta=config.convergence_delta,
        )
        step = engine.train_step(model, tau, spec, current, tc)
        model.steps.append(step)
        current = engine.apply_step(model, step, current, streams)
        h_t = metrics.histogram(_y_values(targets[tau]), edges)
        h_g = metrics.histogram(_y_values(current), edges)
        kl = metrics.kl_divergence(h_t, h_g)
        kls.append(kl)
        hists.append((f"target_step{tau}", h_t))
        hists.append((f"generated_step{tau}", h_g))
        # analytic deviation of the exactly rotated ring
        acc_angle = 2.0 * np.pi * tau * (tau + 1) / (2 * config.total_steps)
        per_step.append(
            {
                "tau": tau,
                "kind": step.kind.value,
                "final_loss": step.final_loss,
                "converged": step.converged,
                "iterations": step.n_iterations,
                "kl": kl,
                "hellinger": metrics.hellinger(h_t, h_g),
                "generated_deviation": metrics.ring_deviation(current),
                "target_deviation": metrics.ring_deviation(targets[tau]),
                "analytic_deviation": float(np.mean(np.sin(2 * angles) ** 2))
                * float(np.cos(acc_angle) ** 2),
            }
        )
    mean_kl = float(np.mean(kls))
    report["per_step"] = per_step
    report["mean_kl"] = mean_kl
    report["bin_edges"] = list(edges)
    _add_check(report, "ring_mean_kl", mean_kl, KL_TARGET, mean_kl <= KL_TARGET)
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
        write_csv(Path(outdir) / "histograms.csv", _hist_rows(edges, hists))
        engine.save_model(model, Path(outdir) / "model.txt")
    return report


# ---------------------------------------------------------------------------
# entanglement growth

def _product_initial(config: EntanglementConfig) -> Ensemble:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 11)))
    states = []
    for _ in range(config.M):
        amps = np.array([1.0], dtype=np.complex128)
        for _q in range(config.n):
            amps = np.kron(haar_random_state(1, rng).amplitudes, amps)
        states.append(StateVector(config.n, amps))
    return Ensemble(states, 0, _spawn_seeds(config.seed, 12, config.M))


def _entropies(ens: Ensemble, cut=(0,)) -> list[float]:
    from .states import entanglement_entropy

    return [entanglement_entropy(s, cut) for s in ens.states]


_FORCE_KINDS = {
    None: None,
    "unitary": StepKind.UNITARY,
    "measured": StepKind.PARTIALLY_MEASURED,
}


def run_entanglement(config: EntanglementConfig | None = None, outdir=None) -> dict:
    """Grow two-qubit entanglement entropy linearly to one bit over T steps."""
    config = config or EntanglementConfig()
    t_start = time.perf_counter()
    report = _new_report("entanglement", config)
    initial = _product_initial(config)
    model = QfmModel(config.n, config.n_ancilla, config.layers, config.total_steps)
    # bin edges offset by half a width so every target entropy is a bin center
    edges = metrics.centered_edges(0.0, 1.0, config.bin_width)
    current = initial
    streams = engine.trajectory_streams(initial.seeds)
    per_step = []
    hists = []
    kls = []
    force = _FORCE_KINDS[config.force_kind]
    for tau in range(1, config.total_steps + 1):
        e_tau = tau / config.total_steps
        spec = LossSpec(Observable.ENTROPY, e_tau, entropy_cut=(0,))
        tc = TrainConfig(
            threshold=config.threshold,
            seed=config.seed,
            target_loss=config.target_loss,
            max_iterations=config.max_iterations,
            convergence_window=config.convergence_window,
            convergence_delta=config.convergence_delta,
            n_restarts=config.n_restarts,
            force_kind=force,
        )
        step = engine.train_step(model, tau, spec, current, tc)
        model.steps.append(step)
        current = engine.apply_step(model, step, current, streams)
        ents = _entropies(current)
        h_t = metrics.histogram([e_tau] * config.M, edges)
        h_g = metrics.histogram(ents, edges)
        kl = metrics.kl_divergence(h_t, h_g)
        kls.append(kl)
        hists.append((f"generated_step{tau}", h_g))
        per_step.append(
            {
                "tau": tau,
                "target_entropy": e_tau,
                "kind": step.kind.value,
                "final_loss": step.final_loss,
                "converged": step.converged,
                "iterations": step.n_iterations,
                "mean_entropy": float(np.mean(ents)),
                "entropy_variance": float(np.var(ents)),
                "kl": kl,
                "hellinger": metrics.hellinger(h_t, h_g),
            }
        )
    mean_kl = float(np.mean(kls))
    final_entropy = per_step[-1]["mean_entropy"]
    report["per_step"] = per_step
    report["mean_kl"] = mean_kl
    report["final_mean_entropy"] = final_entropy
    report["bin_edges"] = list(edges)
    _add_check(report, "entanglement_mean_kl", mean_kl, KL_TARGET, mean_kl <= KL_TARGET)
    _add_check(
        report,
        "final_entropy_gap",
        abs(final_entropy - 1.0),
        0.05,
        abs(final_entropy - 1.0) <= 0.05,
    )
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
        write_csv(Path(outdir) / "histograms.csv", _hist_rows(edges, hists))
        engine.save_model(model, Path(outdir) / "model.txt")
    return report


def run_ablation(config: EntanglementConfig | None = None, outdir=None) -> dict:
    """Hybrid vs unitary-only vs measured-only circuits on identical seeds."""
    config = config or EntanglementConfig()
    t_start = time.perf_counter()
    runs = {}
    for label, force in (("hybrid", None), ("unitary_only", "unitary"), ("measured_only", "measured")):
        sub = dataclasses.replace(config, force_kind=force)
        runs[label] = run_entanglement(sub)
    report = _new_report("ablation", config)
    report["mean_kl"] = {k: r["mean_kl"] for k, r in runs.items()}
    report["final_mean_entropy"] = {k: r["final_mean_entropy"] for k, r in runs.items()}
    report["step1_entropy_variance"] = {
        k: r["per_step"][0]["entropy_variance"] for k, r in runs.items()
    }
    report["per_run"] = {k: r["per_step"] for k, r in runs.items()}
    hybrid_best = report["mean_kl"]["hybrid"] < report["mean_kl"]["unitary_only"] and (
        report["mean_kl"]["hybrid"] < report["mean_kl"]["measured_only"]
    )
    unitary_miss = abs(report["final_mean_entropy"]["unitary_only"] - 1.0)
    _add_check(report, "hybrid_beats_both_on_kl", float(hybrid_best), 1.0, hybrid_best)
    _add_check(report, "unitary_only_final_entropy_miss", unitary_miss, 0.1, unitary_miss > 0.1)
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
    return report


# ---------------------------------------------------------------------------
# magnetic phase transition

def _magnetization_word(n: int, q: int) -> PauliString:
    return PauliString("".join("Z" if i == q else "I" for i in range(n)))


def _abs_magnetizations(ens: Ensemble) -> list[float]:
    return [abs(metrics.magnetization(s)) for s in ens.states]


def _tfim_initial(n: int, M: int, seed: int) -> Ensemble:
    """Samples of the g=0 ground manifold: the two fully polarized states."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 21, n)))
    states = [
        basis_state(n, 0) if rng.random() < 0.5 else basis_state(n, 2**n - 1)
        for _ in range(M)
    ]
    return Ensemble(states, 0, _spawn_seeds(seed, 22 + n, M))


def oracle_magnetization_cell(
    h: Hamiltonian, window: float
) -> tuple[float, list[float]]:
    """Mean |<M>| over the near-degenerate ground manifold, with the
    magnetization operator diagonalized inside it."""
    n = h.n_qubits
    obs = [
        PauliString(_magnetization_word(n, q).ops, 1.0 / n) for q in range(n)
    ]
    members = resolve_multiplet_observable(h, obs, tol=window)
    vals = [abs(v) for v, _ in members]
    return float(np.mean(vals)), vals


def run_tfim_phase(config: TfimPhaseConfig | None = None, outdir=None) -> dict:
    """Ground-ensemble tracking of the transverse-field sweep g = 0 -> g_max
    for a range of system sizes, scored against the exact-diagonalization
    magnetization surface."""
    config = config or TfimPhaseConfig()
    t_start = time.perf_counter()
    report = _new_report("tfim_phase", config)
    edges = metrics.uniform_edges(-1.0, 1.0, config.bins)
    surface = []
    all_kls = []
    per_n = {}
    hists = []
    for n in range(config.n_min, config.n_max + 1):
        initial = _tfim_initial(n, config.M, config.seed)
        model = QfmModel(n, config.n_ancilla, config.layers, config.total_steps)
        current = initial
        streams = engine.trajectory_streams(initial.seeds)
        steps_info = []
        kls = []
        # g = 0 cell from the initial ensemble
        h0 = tfim(n, 0.0, config.sign)
        oracle0, _ = oracle_magnetization_cell(h0, config.degeneracy_window)
        gen0 = float(np.mean(_abs_magnetizations(initial)))
        surface.append(
            {"n": n, "g": 0.0, "generated_abs_m": gen0, "oracle_abs_m": oracle0,
             "deviation": abs(gen0 - oracle0)}
        )
        for tau in range(1, config.total_steps + 1):
            g_tau = config.g_max * tau / config.total_steps
            h = tfim(n, g_tau, config.sign)
            e0, _ = ground_state(h)
            spec = LossSpec(Observable.ENERGY, h)
            tc = TrainConfig(
                threshold=e0 + config.energy_margin,
                seed=config.seed + tau,
                target_loss=e0 + config.target_margin,
                max_iterations=config.max_iterations,
                convergence_window=config.convergence_window,
                convergence_delta=config.convergence_delta,
                n_restarts=config.n_restarts,
            )
            step = engine.train_step(model, tau, spec, current, tc)
            model.steps.append(step)
            current = engine.apply_step(model, step, current, streams)
            gen_vals = _abs_magnetizations(current)
            oracle_val, oracle_members = oracle_magnetization_cell(
                h, config.degeneracy_window
            )
            # target histogram: equal weight on each ground-manifold member
            target_vals = [
                oracle_members[m % len(oracle_members)] for m in range(config.M)
            ]
            h_t = metrics.histogram(target_vals, edges)
            h_g = metrics.histogram(gen_vals, edges)
            kl = metrics.kl_divergence(h_t, h_g)
            kls.append(kl)
            if n == min(4, config.n_max):
                hists.append((f"n{n}_step{tau}", h_g))
            gen_mean = float(np.mean(gen_vals))
            surface.append(
                {
                    "n": n,
                    "g": g_tau,
                    "generated_abs_m": gen_mean,
                    "oracle_abs_m": oracle_val,
                    "deviation": abs(gen_mean - oracle_val),
                }
            )
            steps_info.append(
                {
                    "tau": tau,
                    "g": g_tau,
                    "kind": step.kind.value,
                    "final_loss": step.final_loss,
                    "ground_energy": e0,
                    "converged": step.converged,
                    "iterations": step.n_iterations,
                    "kl": kl,
                }
            )
        per_n[str(n)] = {"steps": steps_info, "mean_kl": float(np.mean(kls))}
        all_kls.extend(kls)
    mean_kl = float(np.mean(all_kls))
    max_dev = max(row["deviation"] for row in surface)
    g0_min = min(row["generated_abs_m"] for row in surface if row["g"] == 0.0)
    report["per_n"] = per_n
    report["surface"] = surface
    report["mean_kl"] = mean_kl
    report["max_surface_deviation"] = max_dev
    _add_check(report, "tfim_mean_kl", mean_kl, KL_TARGET, mean_kl <= KL_TARGET)
    _add_check(report, "surface_deviation", max_dev, 0.1, max_dev <= 0.1)
    _add_check(report, "g0_mean_abs_m", g0_min, 0.9, g0_min >= 0.9)
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
        write_csv(Path(outdir) / "surface.csv", surface)
        write_csv(Path(outdir) / "histograms.csv", _hist_rows(edges, hists))
    return report


# ---------------------------------------------------------------------------
# free energy and superdiffusion wrappers

def run_jarzynski(config: thermo.JarzynskiConfig | None = None, outdir=None) -> dict:
    config = config or thermo.JarzynskiConfig()
    t_start = time.perf_counter()
    result = thermo.run_metts_jarzynski(config)
    report = _new_report("jarzynski", config)
    report.update({k: v for k, v in result.items() if k != "work_samples"})
    tol_base = 0.05 if config.mode == "oracle" else 0.08
    worst = 0.0
    all_ok = True
    for pb in result["per_beta"]:
        tol = max(tol_base, 2.0 * pb["bootstrap_stderr"])
        ok = abs(pb["error"]) <= tol
        all_ok = all_ok and ok
        worst = max(worst, abs(pb["error"]))
    name = f"jarzynski_{config.mode}_max_error"
    if config.mode == "qfm" and not result["training_converged"]:
        _add_check(report, "qfm_training_converged", 0.0, 1.0, False)
    else:
        _add_check(report, name, worst, tol_base, all_ok)
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
        write_csv(Path(outdir) / "work_samples.csv", result["work_samples"])
    return report


def run_superdiffusion(config: SuperdiffusionScanConfig | None = None, outdir=None) -> dict:
    config = config or SuperdiffusionScanConfig()
    t_start = time.perf_counter()
    rows = superdiffusion.run_superdiffusion_scan(
        config.base,
        config.t_max,
        lambdas=config.lambdas,
        seed=config.seed,
        include_branch_curves=config.include_branch_curves,
    )
    report = _new_report("superdiffusion", config)
    # mixture identity: qfm curve vs equal-weight average of the direct curves
    summary = []
    for lam in config.lambdas:
        lam_str = "(%g,%g,%g)" % tuple(lam)
        qfm_rows = [r for r in rows if r["mode"] == "qfm" and r["lambda"] == lam_str]
        max_sigma = 0.0
        for t in range(config.t_max + 1):
            q = next(r for r in qfm_rows if r["t"] == t)
            direct = [
                r
                for r in rows
                if r["mode"] == "direct" and r["lambda"] == lam_str and r["t"] == t
            ]
            mix = float(np.mean([r["C22"] for r in direct]))
            mix_se = float(np.sqrt(np.sum([r["stderr"] ** 2 for r in direct])) / len(direct))
            pooled = math.hypot(q["stderr"], mix_se)
            if pooled > 0:
                max_sigma = max(max_sigma, abs(q["C22"] - mix) / pooled)
        summary.append({"lambda": lam_str, "max_sigma_deviation": max_sigma})
    report["mixture_summary"] = summary
    worst = max(s["max_sigma_deviation"] for s in summary)
    _add_check(report, "mixture_identity_max_sigma", worst, 3.0, worst <= 3.0)
    report["n_rows"] = len(rows)
    report["timing"] = {"seconds": time.perf_counter() - t_start}
    if outdir is not None:
        write_report(outdir, report)
        write_csv(Path(outdir) / "correlation.csv", rows)
    return report


# ---------------------------------------------------------------------------
# oracle utilities

def run_oracle(what: str, args: dict | None = None) -> list[str]:
    """Exact reference quantities, printed one per line."""
    args = args or {}
    lines: list[str] = []
    if what == "free-energy":
        n = int(args.get("n", 4))
        g = float(args.get("g", 1.0))
        beta = float(args.get("beta", 0.5))
        sign = args.get("sign", "main_text")
        f = free_energy(tfim(n, g, sign), beta)
        lines.append(f"free_energy n={n} g={g} sign={sign} beta={beta}: {f:.12f}")
    elif what == "ground-energy":
        g_grid = [float(x) for x in args.get("g_grid", "0.0,0.5,1.0,1.5").split(",")]
        sign = args.get("sign", "supplement")
        lines.append("n,g,energy")
        for n in range(int(args.get("n_min", 2)), int(args.get("n_max", 6)) + 1):
            for g in g_grid:
                e0, _ = ground_state(tfim(n, g, sign))
                lines.append(f"{n},{g},{e0:.12f}")
    elif what == "thermal":
        n = int(args.get("n", 2))
        g = float(args.get("g", 1.0))
        beta = float(args.get("beta", 1.0))
        sign = args.get("sign", "supplement")
        h = tfim(n, g, sign)
        from .hamiltonians import thermal_expectation

        val = thermal_expectation(h, h.terms, beta)
        lines.append(f"thermal_energy n={n} g={g} sign={sign} beta={beta}: {val:.12f}")
    elif what == "superdiffusion-branches":
        cfg = superdiffusion.SuperdiffusionConfig(
            lam=tuple(float(x) for x in args.get("lam", "0,0,1").split(","))
        )
        units = superdiffusion.qfm_branch_unitaries(cfg, int(args.get("tau", 1)))
        from .circuits import program_unitary

        for (r0, r1), u in sorted(units.items()):
            jp = cfg.branch_coupling(r0, r1)
            direct = program_unitary(
                superdiffusion.build_direct_circuit(jp, cfg, int(args.get("tau", 1))), []
            )
            err = float(np.max(np.abs(u - direct)))
            lines.append(
                f"branch r=({r0},{r1}) J_perp={jp:g}: max|U_qfm-U_direct|={err:.2e} "
                f"{'PASS' if err < 1e-10 else 'FAIL'}"
            )
    else:
        raise ValueError(f"unknown oracle {what!r}")
    return lines
