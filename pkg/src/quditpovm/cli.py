"""Command-line interface.

Sub-commands wire the library end to end: POVM construction/validation,
pulse compilation, charge-noise simulation, the E_J/E_C sweep, detector
tomography scaling, and observable estimation.  Every run drops a
``manifest.json`` (config hash, seed, versions, output list) next to its
outputs; files are written to a temp name and atomically renamed, and
identical (config, seed) runs produce byte-identical outputs.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimation, pulse_sim, tomography
from .naimark import PulseSchedule, schedule_demo
from .povm import (
    Observable,
    Povm,
    PovmError,
    ProductPovm,
    decompose_observable,
    demo_povm,
    operational_distance,
    probabilities_to_csv,
    sic_povm,
    validate_povm,
)
from .pulse_sim import DriveConfig
from .transmon import calibrate_params, spectrum

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, payload) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


class _Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command: str, out_dir: Path, seed: int, config: dict):
        self.command = command
        self.out_dir = out_dir
        self.seed = seed
        self.config = config
        self.outputs: list = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(name)
        return p

    def write_json(self, name: str, payload) -> Path:
        p = self.path(name)
        _atomic_write_json(p, payload)
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        tmp = p.with_name(p.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, p)
        return p

    def finish(self) -> None:
        blob = json.dumps(self.config, sort_keys=True).encode()
        manifest = {
            "command": self.command,
            "config": self.config,
            "config_sha256": hashlib.sha256(blob).hexdigest(),
            "seed": self.seed,
            "versions": {
                "quditpovm": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
            "outputs": sorted(self.outputs),
        }
        _atomic_write_json(self.out_dir / "manifest.json", manifest)


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        return json.loads(Path(args.config).read_text())
    return {}


def _resolve_povm(spec: str) -> Povm:
    if spec == "sic":
        return sic_povm()
    if spec == "demo":
        return demo_povm()
    return Povm.load(spec)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def cmd_povm(args) -> int:
    if args.sic:
        povm, name = sic_povm(), "sic"
    elif args.demo:
        povm, name = demo_povm(), "demo"
    else:
        try:
            povm, name = Povm.load(args.file), Path(args.file).stem
        except (OSError, json.JSONDecodeError, KeyError, PovmError) as exc:
            print(f"error: cannot read POVM: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    report = validate_povm(povm)
    run = _Run("povm", Path(args.out), args.seed,
               {"spec": name, "tol": report.tol})
    run.write_json(f"povm_{name}.json", povm.to_json())
    run.finish()
    print(f"psd_violation {_fmt(report.psd_violation)}")
    print(f"completeness_residual {_fmt(report.completeness_residual)}")
    print(f"valid {report.valid}")
    if not report.valid:
        print("error: POVM failed validation", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_compile(args) -> int:
    povm = _resolve_povm(args.povm)
    report = validate_povm(povm)
    if not report.valid:
        print("error: POVM failed validation", file=sys.stderr)
        return EXIT_VALIDATION
    params = calibrate_params(args.freq, args.ratio)
    durations = np.asarray(args.durations, dtype=float)
    if args.povm == "demo":
        # the demo set has a known fixed five-pulse realization
        sched = pulse_sim.compile_gate_schedule(schedule_demo(), params, durations)
    else:
        sched = pulse_sim.povm_schedule(povm, params, durations)
    spec = spectrum(params)
    from .naimark import ideal_unitary_of_schedule, povm_from_unitary

    ideal = ideal_unitary_of_schedule(sched, spec.average_energies[:4])
    d_od = operational_distance(povm, povm_from_unitary(ideal))
    run = _Run("compile", Path(args.out), args.seed, {
        "povm": args.povm, "ratio": args.ratio, "freq": args.freq,
        "durations_ns": list(durations),
    })
    run.write_json("schedule.json", sched.to_json())
    run.path("schedule.txt")
    _atomic_write_text(Path(args.out) / "schedule.txt", sched.text_dump())
    run.finish()
    print(f"pulses {len(sched.pulses)}")
    print(f"total_duration_ns {_fmt(sched.total_duration)}")
    print(f"roundtrip_d_od {d_od:.3e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    povm = _resolve_povm(args.povm)
    params = calibrate_params(args.freq, args.ratio)
    drive = DriveConfig()
    cals = []
    if args.schedule:
        sched = PulseSchedule.load(args.schedule)
    else:
        if args.demo_sequence:
            durations = np.asarray(args.durations, dtype=float)
            sched = pulse_sim.compile_gate_schedule(
                schedule_demo(), params, durations, drive
            )
        else:
            if args.durations:
                durations = np.asarray(args.durations, dtype=float)
            else:
                cals = [
                    pulse_sim.calibrate_sqrtx(params, n, k=args.k, drive=drive)
                    for n in range(3)
                ]
                durations = np.array([c.t_opt for c in cals])
            sched = pulse_sim.povm_schedule(povm, params, durations, drive)
    sim = pulse_sim.simulated_povm(sched, params, k=args.k, drive=drive,
                                   labels=povm.labels)
    d_od = operational_distance(povm, sim)
    run = _Run("simulate", Path(args.out), args.seed, {
        "povm": args.povm, "ratio": args.ratio, "freq": args.freq,
        "k": args.k, "durations_ns": [p.duration for p in sched.pulses],
    })
    run.write_json("simulated_povm.json", sim.to_json())
    run.write_json("simulate_report.json", {
        "d_od": d_od, "t_total_ns": sched.total_duration,
        "n_pulses": len(sched.pulses),
    })
    for cal in cals:
        p = run.path(f"calibration_sx{cal.transition}{cal.transition + 1}.csv")
        tmp = p.with_name(p.name + ".tmp")
        cal.to_csv(tmp)
        os.replace(tmp, p)
    run.finish()
    print(f"d_od {_fmt(d_od)}")
    print(f"t_total_ns {_fmt(sched.total_duration)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    ratios = config.get("ratios", [30, 40, 50, 60, 70, 80])
    t_max_list = config.get("t_max_ns", [None])
    k = int(config.get("k", 20))
    freq = float(config.get("freq_ghz", 5.0))
    sample_dt = float(config.get("sample_dt_ns", pulse_sim.DEFAULT_SAMPLE_DT))
    povm = _resolve_povm(config.get("povm", "sic"))
    grid = config.get("duration_grid_ns")
    drive = DriveConfig(sample_dt=sample_dt)
    rows = pulse_sim.sweep_ejec(
        ratios, t_max_list, povm, k=k, target_freq=freq, duration_grid=grid,
        drive=drive, threads=args.threads,
    )
    run = _Run("sweep", Path(args.out), args.seed, {
        "ratios": list(ratios),
        "t_max_ns": [None if t is None else float(t) for t in t_max_list],
        "k": k, "freq_ghz": freq, "sample_dt_ns": sample_dt,
        "povm": config.get("povm", "sic"),
    })
    run.write_csv(
        "sweep.csv",
        ["ej_ec", "t_max_ns", "d_od", "t_total_ns", "f_sx01", "f_sx12", "f_sx23"],
        [
            [
                _fmt(r.ratio),
                "inf" if np.isinf(r.t_max_ns) else _fmt(r.t_max_ns),
                _fmt(r.d_od), _fmt(r.t_total_ns),
                *(_fmt(f) for f in r.fidelities),
            ]
            for r in rows
        ],
    )
    run.finish()
    failures = [r for r in rows if r.error]
    for r in failures:
        print(f"cell (ratio={r.ratio}, t_max={r.t_max_ns}) failed: {r.error}",
              file=sys.stderr)
    print(f"rows {len(rows)}  failures {len(failures)}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_tomo(args) -> int:
    povm = _resolve_povm(args.povm)
    shot_grid = [int(s) for s in args.shots]
    result = tomography.tomo_scaling_experiment(
        povm, shot_grid, seed=args.seed, repeats=args.repeats
    )
    run = _Run("tomo", Path(args.out), args.seed, {
        "povm": args.povm, "shots": shot_grid, "repeats": args.repeats,
    })
    run.write_csv(
        "tomo_scaling.csv", ["n_tomo", "d_od"],
        [[r.n_tomo, _fmt(r.d_od)] for r in result.rows],
    )
    run.write_json("tomo_fit.json", {
        "slope": result.slope, "intercept": result.intercept,
    })
    run.finish()
    print(f"slope {_fmt(result.slope)}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    obs = Observable.from_json(json.loads(Path(args.observable).read_text()))
    state = np.array(
        [complex(re, im) for re, im in json.loads(Path(args.state).read_text())]
    )
    factors = [_resolve_povm(f) for f in args.povm.split(",")]
    if len(factors) == 1:
        factors = factors * obs.n_qubits
    product = ProductPovm(tuple(factors))
    probs = estimation.product_state_probabilities(product, state)
    coeffs = decompose_observable(obs, product)
    hist = estimation.sample_outcomes(probs, args.shots, seed=args.seed)
    report = estimation.estimate_expectation(hist, coeffs)
    run = _Run("estimate", Path(args.out), args.seed, {
        "observable": args.observable, "state": args.state,
        "povm": args.povm, "shots": args.shots,
    })
    run.write_json("estimate.json", report.to_json())
    table = estimation.scatter_export(obs, product, state)
    p = run.path("scatter.csv")
    tmp = p.with_name(p.name + ".tmp")
    table.to_csv(tmp)
    os.replace(tmp, p)
    if obs.n_qubits == 1:
        p = run.path("probabilities.csv")
        tmp = p.with_name(p.name + ".tmp")
        probabilities_to_csv(tmp, factors[0].labels, probs)
        os.replace(tmp, p)
    run.finish()
    print(f"estimate {_fmt(report.estimate)}")
    print(f"std_error {_fmt(report.std_error)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quditpovm",
        description="Qudit-space POVM synthesis, compilation and simulation",
    )
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sweeps (numba kernels "
                             "parallelize internally)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("povm", help="construct and validate a POVM")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sic", action="store_true")
    group.add_argument("--demo", action="store_true")
    group.add_argument("--file", default=None)
    p.set_defaults(func=cmd_povm)

    p = sub.add_parser("compile", help="compile a POVM into a pulse schedule")
    p.add_argument("--povm", required=True, help="sic | demo | path")
    p.add_argument("--ratio", type=float, default=45.0)
    p.add_argument("--freq", type=float, default=5.0)
    p.add_argument("--durations", type=float, nargs=3,
                   default=[36.0, 32.0, 14.0], metavar=("T01", "T12", "T23"))
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="simulate a schedule under charge noise")
    p.add_argument("--povm", required=True)
    p.add_argument("--schedule", default=None, help="pre-compiled schedule JSON")
    p.add_argument("--demo-sequence", action="store_true",
                   help="use the fixed five-pulse demo sequence")
    p.add_argument("--ratio", type=float, default=45.0)
    p.add_argument("--freq", type=float, default=5.0)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--durations", type=float, nargs=3, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="E_J/E_C x duration-budget grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tomo", help="tomography shot-scaling experiment")
    p.add_argument("--povm", required=True)
    p.add_argument("--shots", nargs="+", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("estimate", help="estimate an observable expectation")
    p.add_argument("--observable", required=True, help="JSON Pauli-term list")
    p.add_argument("--state", required=True, help="JSON amplitude list")
    p.add_argument("--povm", required=True,
                   help="comma-separated per-qubit POVMs (or one, repeated)")
    p.add_argument("--shots", type=int, default=100000)
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PovmError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
