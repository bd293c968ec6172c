"""Command-line experiment harness.

    qfm run <task> [--config FILE] [--seed N] [--out DIR] [--check]
    qfm oracle <what> [key=value ...]
    qfm metrics --compare DIR_A DIR_B

Configs are flat INI files with one section per task; every field of the
task's config dataclass can be overridden.  ``--check`` exits with status 2
when any of the task's built-in acceptance checks fails.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path

from . import experiments, superdiffusion, thermo

_TASK_CONFIGS = {
    "ring": experiments.RingConfig,
    "entanglement": experiments.EntanglementConfig,
    "tfim_phase": experiments.TfimPhaseConfig,
    "ablation": experiments.EntanglementConfig,
    "jarzynski": thermo.JarzynskiConfig,
    "superdiffusion": experiments.SuperdiffusionScanConfig,
}

_TASK_RUNNERS = {
    "ring": experiments.run_ring,
    "entanglement": experiments.run_entanglement,
    "tfim_phase": experiments.run_tfim_phase,
    "ablation": experiments.run_ablation,
    "jarzynski": experiments.run_jarzynski,
    "superdiffusion": experiments.run_superdiffusion,
}


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p for p in raw.replace("(", " ").replace(")", " ").split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    if current is None or isinstance(current, str):
        return raw if raw.lower() != "none" else None
    raise ValueError(f"cannot coerce config value {raw!r}")


def load_config(task: str, path: str | None, seed: int | None):
    cls = _TASK_CONFIGS[task]
    cfg = cls()
    overrides = {}
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        if parser.has_section(task):
            for key, raw in parser.items(task):
                if key == "base" or key.startswith("base."):
                    continue
                if not hasattr(cfg, key):
                    raise KeyError(f"unknown config key {key!r} for task {task!r}")
                overrides[key] = _coerce(getattr(cfg, key), raw)
            # nested superdiffusion circuit settings: base.<field> = value
            if task == "superdiffusion":
                base = superdiffusion.SuperdiffusionConfig()
                base_overrides = {}
                for key, raw in parser.items(task):
                    if key.startswith("base."):
                        fname = key.split(".", 1)[1]
                        if not hasattr(base, fname):
                            raise KeyError(f"unknown circuit config key {fname!r}")
                        base_overrides[fname] = _coerce(getattr(base, fname), raw)
                if base_overrides:
                    overrides["base"] = dataclasses.replace(base, **base_overrides)
    if seed is not None:
        overrides["seed"] = seed
    return dataclasses.replace(cfg, **overrides)


def _cmd_run(args) -> int:
    cfg = load_config(args.task, args.config, args.seed)
    runner = _TASK_RUNNERS[args.task]
    report = runner(cfg, outdir=args.out)
    failures = [c for c in report.get("checks", []) if not c["pass"]]
    for check in report.get("checks", []):
        status = "PASS" if check["pass"] else "FAIL"
        print(f"[{status}] {check['name']}: {check['value']:.6g} (threshold {check['threshold']:.6g})")
    if args.out:
        print(f"report written to {Path(args.out) / 'report.json'}")
    if args.check and failures:
        return 2
    return 0


def _cmd_oracle(args) -> int:
    kv = dict(item.split("=", 1) for item in args.params)
    for line in experiments.run_oracle(args.what, kv):
        print(line)
    return 0


def _cmd_metrics(args) -> int:
    a, b = (json.loads((Path(d) / "report.json").read_text()) for d in args.compare)
    keys = sorted(
        k
        for k in set(a) & set(b)
        if isinstance(a[k], (int, float)) and isinstance(b[k], (int, float))
    )
    print(f"{'metric':32s} {'A':>14s} {'B':>14s}")
    for k in keys:
        print(f"{k:32s} {a[k]:14.6g} {b[k]:14.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment task")
    p_run.add_argument("task", choices=sorted(_TASK_RUNNERS))
    p_run.add_argument("--config", default=None, help="INI config file")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument(
        "--check", action="store_true", help="exit 2 if an acceptance check fails"
    )
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="print exact reference quantities")
    p_oracle.add_argument(
        "what",
        choices=["free-energy", "ground-energy", "thermal", "superdiffusion-branches"],
    )
    p_oracle.add_argument("params", nargs="*", help="key=value parameters")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_metrics = sub.add_parser("metrics", help="compare two run reports")
    p_metrics.add_argument("--compare", nargs=2, required=True, metavar=("DIR_A", "DIR_B"))
    p_metrics.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
