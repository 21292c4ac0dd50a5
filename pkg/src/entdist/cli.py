"""Command-line front end.

Subcommands map one-to-one onto the experiment sweeps:

  simulate      run trials at the configured point, write trial rows
  sweep-theta   distilled fidelity and rates against the preparation angle
  memory-decay  cardinal-state storage curves and the feedback comparison
  ebit-rate     ebit rates with the two-photon-coincidence baseline
  calibrate     invert the local Bell benchmark into gate-error budgets
  validate      run the invariant self-check suite

Every file-writing subcommand emits tab-delimited tables (one per figure
panel) with a provenance comment line and a manifest echoing the effective
configuration.  Output is assembled in memory and written at the end, so a
failing run leaves no partial files.  Exit codes: 0 success, 2
configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from typing import Dict, List, Optional

from . import __version__
from .analysis import ebit_rate, trial_fidelity
from .config import (
    ConfigError,
    config_digest,
    default_spec,
    emit_manifest,
    load_config,
)
from .montecarlo import (
    ExperimentSpec,
    benchmark_bell_fidelity,
    calibrate_gate_error,
    format_table,
    run_figure_sweep,
    run_trials,
    validate_invariants,
)
from .protocol import trials_to_tsv

_SUBCOMMAND_FIGURE = {
    "sweep-theta": "theta_sweep",
    "memory-decay": "memory_decay",
    "ebit-rate": "ebit_rate",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entdist",
        description="two-node entanglement distillation simulator")
    parser.add_argument("--version", action="version", version=f"entdist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("simulate", "run protocol trials at the configured operating point"),
            ("sweep-theta", "sweep the preparation angle"),
            ("memory-decay", "single-memory storage and feedback curves"),
            ("ebit-rate", "ebit rates and the two-photon baseline"),
            ("calibrate", "gate-error budgets from benchmark fidelities"),
            ("validate", "run the invariant self-check suite")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", metavar="PATH", default=None,
                         help="configuration file (defaults apply when omitted)")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
        cmd.add_argument("--trials", type=int, default=None, help="trials override")
        cmd.add_argument("--out", metavar="DIR", default="entdist-out",
                         help="output directory")
        cmd.add_argument("--quiet", action="store_true", help="suppress the summary")
        if name == "simulate":
            cmd.add_argument("--states", action="store_true",
                             help="append final-state entries to trial rows")
    return parser


def _load_spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else default_spec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    return spec


def _provenance(spec: ExperimentSpec) -> str:
    return f"config_digest={config_digest(spec)} seed={spec.seed} version={__version__}"


def _write_outputs(out_dir: str, files: Dict[str, str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as handle:
            handle.write(content)


def _run_sweep_command(args, figure: str) -> Dict[str, str]:
    spec = replace(_load_spec(args), figure=figure)
    started = time.time()
    result = run_figure_sweep(spec)
    files = {}
    for name, columns, rows in result.tables:
        files[f"{name}.tsv"] = format_table(columns, rows, _provenance(spec))
    files["manifest.txt"] = emit_manifest(spec, meta={
        "wall_time_s": f"{time.time() - started:.3f}",
        "version": __version__,
    })
    if not args.quiet:
        for name, _, rows in result.tables:
            print(f"{name}: {len(rows)} rows")
    return files


def _run_simulate(args) -> Dict[str, str]:
    spec = _load_spec(args)
    started = time.time()
    records = run_trials(spec.protocol, spec.trials, spec.seed, 0)
    heralded = [r for r in records if r.heralded]
    columns = ("trials", "heralded", "total_time_s", "nu_hz", "fidelity",
               "log_negativity", "ebit_rate")
    if heralded:
        import numpy as np

        from .montecarlo import _aux_rng

        rate = ebit_rate(records, rng=_aux_rng(spec.seed, 0))
        fid = float(np.mean([trial_fidelity(r) for r in heralded]))
        row = (spec.trials, len(heralded), sum(r.elapsed_time for r in records),
               rate.nu, fid, rate.e_n, rate.r)
    else:
        nan = float("nan")
        row = (spec.trials, 0, sum(r.elapsed_time for r in records),
               nan, nan, nan, nan)
    files = {
        "trials.tsv": trials_to_tsv(records, include_states=getattr(args, "states", False)),
        "summary.tsv": format_table(columns, [row], _provenance(spec)),
        "manifest.txt": emit_manifest(spec, meta={
            "wall_time_s": f"{time.time() - started:.3f}",
            "version": __version__,
        }),
    }
    if not args.quiet:
        print(f"trials: {spec.trials}, heralded: {len(heralded)}")
    return files


def _run_calibrate(args) -> Dict[str, str]:
    spec = _load_spec(args)
    rows = []
    for node, target in (("a", spec.target_fidelity_a), ("b", spec.target_fidelity_b)):
        p = calibrate_gate_error(target)
        rows.append((node, target, p, benchmark_bell_fidelity(p)))
    files = {
        "calibration.tsv": format_table(
            ("node", "target_fidelity", "gate_error_budget", "benchmark_fidelity"),
            rows, _provenance(spec)),
        "manifest.txt": emit_manifest(spec, meta={"version": __version__}),
    }
    if not args.quiet:
        for node, target, p, achieved in rows:
            print(f"node {node}: target {target} -> budget {p:.6f} "
                  f"(benchmark {achieved:.8f})")
    return files


def _run_validate(args) -> int:
    spec = _load_spec(args)
    results = validate_invariants(seed=spec.seed)
    failed = [r for r in results if not r[1]]
    for name, ok, detail in results:
        status = "ok" if ok else "FAIL"
        line = f"{status}: {name}"
        if detail:
            line += f" ({detail})"
        if not args.quiet or not ok:
            print(line)
    print(f"invariants: {len(results) - len(failed)}/{len(results)} passed")
    return 0 if not failed else 3


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return _run_validate(args)
        if args.command == "calibrate":
            files = _run_calibrate(args)
        elif args.command == "simulate":
            files = _run_simulate(args)
        else:
            files = _run_sweep_command(args, _SUBCOMMAND_FIGURE[args.command])
        _write_outputs(args.out, files)
        return 0
    except FileNotFoundError as exc:
        print(f"error: config file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
