"""Command-line interface.

Subcommands:

* ``run <config>``      simulate one scenario, emit its trace CSV set
* ``batch <sweep>``     expand a sweep document, run it, emit the report
* ``paper-battery``     the built-in 378-fault + 125-load reproduction run
* ``validate <config>`` parse/validate a scenario and echo its canonical form
* ``idmt-compare``      classical IEC curve vs simulated latency curve tables

Exit code 0 on success; on failure a machine-readable JSON error object is
printed to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import battery as battery_mod
from .config import load_scenario, serialize_scenario
from .engine import run_scenario
from .errors import SpikeRelayError
from .metrics import idmt_trip_time, is_missed, monotone_non_increasing
from .runner import emit_outputs, run_batch


def _apply_overrides(cfg, args) -> None:
    if args.dt_neuron is not None:
        cfg.sim.dt_neuron = args.dt_neuron
    if args.dt_network is not None:
        cfg.sim.dt_network = args.dt_network
    if args.breakers is not None:
        cfg.sim.breakers_enabled = args.breakers == "on"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--dt-neuron", type=float, default=None, help="relay step override (s)")
    p.add_argument("--dt-network", type=float, default=None, help="network step override (s)")
    p.add_argument("--breakers", choices=("on", "off"), default=None)


def cmd_run(args) -> int:
    cfg = load_scenario(args.config)
    _apply_overrides(cfg, args)
    bundle = run_scenario(cfg)
    files = emit_outputs(bundle, args.out)
    case = bundle.case_result
    lat = case.latency_ms
    print(f"scenario {cfg.scenario_id}: kind={case.kind}", end="")
    if case.kind == "fault":
        lat_txt = "missed" if is_missed(lat) else f"{lat:.3f} ms"
        print(
            f" latency={lat_txt} winner={case.winner_der}"
            f" tripped_line={case.tripped_line}",
            end="",
        )
    print(f" spikes={case.total_input_spikes}in/{case.total_output_spikes}out")
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_batch(args) -> int:
    configs = battery_mod.load_sweep(args.sweep)
    for cfg in configs:
        _apply_overrides(cfg, args)
    report = run_batch(configs, parallelism=args.parallel)
    files = emit_outputs(report, args.out)
    print(
        f"{report.n_cases} cases: accuracy {report.accuracy_pct:.2f}%"
        f" ({report.accuracy_window_ms:g} ms window),"
        f" selectivity {report.selectivity_pct if report.selectivity_pct is None else round(report.selectivity_pct, 2)}%,"
        f" false trips {report.false_trips}, missed {report.missed_detections}"
    )
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_paper_battery(args) -> int:
    configs = battery_mod.paper_battery(seed=args.seed)
    for cfg in configs:
        _apply_overrides(cfg, args)
    report = run_batch(configs, parallelism=args.parallel)
    files = emit_outputs(report, args.out)
    print(
        f"paper battery ({report.n_fault_cases} fault + {report.n_load_cases} load cases):"
        f" accuracy {report.accuracy_pct:.2f}% @{report.accuracy_window_ms:g} ms,"
        f" {report.accuracy_pct_60ms:.2f}% @60 ms,"
        f" selectivity {report.selectivity_pct:.2f}%,"
        f" false trips {report.false_trips}, missed {report.missed_detections}"
    )
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_scenario(args.config)
    print(serialize_scenario(cfg), end="")
    return 0


def cmd_idmt_compare(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    multiples = [1.2, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0]
    idmt_rows = [(m, idmt_trip_time(m, tms=args.tms)) for m in multiples]

    from .battery import _fault_scenario
    from .metrics import neuromorphic_trip_curve

    resistances = [3.0, 1.0, 0.5, 0.1, 0.01, 0.001]

    def run_case(r):
        cfg = _fault_scenario("ring3", 0, 0.2, "ABCG", float(r))
        return run_scenario(cfg).case_result.latency_ms

    neuro_rows = neuromorphic_trip_curve(resistances, run_case)

    path = os.path.join(args.out, "idmt_curve.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("multiple,trip_time_s\n")
        for m, t in idmt_rows:
            fh.write(f"{m:.12g},{t:.12g}\n")
    path2 = os.path.join(args.out, "neuromorphic_curve.csv")
    with open(path2, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fault_resistance_ohm,conductance_s,latency_ms,flagged\n")
        for row in neuro_rows:
            lat = "" if row["latency_ms"] is None else f"{row['latency_ms']:.12g}"
            fh.write(
                f"{row['severity']:.12g},{1.0 / row['severity']:.12g},{lat},{str(row['flagged']).lower()}\n"
            )
    idmt_mono = monotone_non_increasing([t for _, t in idmt_rows])
    neuro_mono = monotone_non_increasing([r["latency_ms"] for r in neuro_rows])
    print(f"idmt monotone decreasing: {idmt_mono}")
    print(f"neuromorphic monotone decreasing: {neuro_mono}")
    print(f"wrote {path}")
    print(f"wrote {path2}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spikerelay", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="run a sweep document")
    p.add_argument("sweep")
    p.add_argument("--parallel", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("paper-battery", help="built-in reproduction campaign")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(fn=cmd_paper_battery)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("idmt-compare", help="inverse-time duality tables")
    p.add_argument("--out", default="out")
    p.add_argument("--tms", type=float, default=1.0)
    p.set_defaults(fn=cmd_idmt_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SpikeRelayError as exc:
        json.dump(
            {"error": {"type": type(exc).__name__, "message": str(exc)}},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 2
    except FileNotFoundError as exc:
        json.dump({"error": {"type": "FileNotFound", "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
