"""Scenario/batch execution and file emission.

Outputs are deterministic down to the byte: numbers are serialized with 12
significant digits, keys are sorted, and batch results are merged in
scenario-id order so worker count never changes the report.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import asdict

import numpy as np

from .config import ScenarioConfig
from .engine import TraceBundle, run_scenario
from .metrics import CaseResult, MetricsReport, build_report, is_missed

_FMT = "{:.12g}"


def _num(x) -> str:
    if x is None:
        return ""
    return _FMT.format(float(x))


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(_FMT.format(float(obj)))
    if isinstance(obj, np.integer):
        return int(obj)
    if is_missed(obj):
        return None
    return obj


def _write(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def case_to_row(case: CaseResult, window_ms: float = 40.0) -> dict:
    from .metrics import case_correct

    lat = case.latency_ms
    return {
        "scenario_id": case.scenario_id,
        "kind": case.kind,
        "fault_line": case.fault_line,
        "fault_type": case.fault_type,
        "fault_resistance": case.fault_resistance,
        "fault_position": case.fault_position,
        "t_onset_s": case.t_onset,
        "latency_ms": None if is_missed(lat) else lat,
        "missed": bool(is_missed(lat)) if case.kind == "fault" else False,
        "winner_der": case.winner_der,
        "tripped_line": case.tripped_line,
        "nearest_ders": "|".join(str(i) for i in case.nearest_ders),
        "nearest_unique": case.nearest_unique,
        "input_spikes": case.total_input_spikes,
        "output_spikes": case.total_output_spikes,
        "breaker_ops": case.breaker_ops,
        "correct_at_window": case_correct(case, window_ms) if not case.error else False,
        "error": case.error or "",
    }


# ======================================================================
# emission
# ======================================================================


def emit_bundle(bundle: TraceBundle, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "spikes.csv")
    rows = ["t_s,der_id,kind,line_id"]
    for ev in bundle.spike_log:
        line = "" if ev.line_id is None else str(ev.line_id)
        rows.append(f"{_num(ev.t)},{ev.der_id},{ev.kind},{line}")
    _write(path, rows)
    written.append(path)

    path = os.path.join(out_dir, "membrane.csv")
    rows = ["t_s,der_id,v_m,v_th,D"]
    for t, der, vm, vth, d in bundle.membrane_trace:
        rows.append(f"{_num(t)},{int(der)},{_num(vm)},{_num(vth)},{_num(d)}")
    _write(path, rows)
    written.append(path)

    path = os.path.join(out_dir, "breakers.csv")
    rows = ["t_s,breaker_id,state"]
    for ev in bundle.breaker_log:
        rows.append(f"{_num(ev.t)},{ev.breaker_id},{ev.state}")
    _write(path, rows)
    written.append(path)

    path = os.path.join(out_dir, "electrical.csv")
    header = (
        ["t_s"]
        + [f"vmag_bus{b}" for b in range(bundle.n_bus)]
        + [f"imag_line{ln}" for ln in range(bundle.n_lines)]
    )
    rows = [",".join(header)]
    for t, vmags, imags in bundle.electrical_rows():
        rows.append(
            ",".join([_num(t)] + [_num(v) for v in vmags] + [_num(i) for i in imags])
        )
    _write(path, rows)
    written.append(path)

    path = os.path.join(out_dir, "case.json")
    payload = {
        "case": _jsonify(case_to_row(bundle.case_result, bundle.config.metrics.accuracy_window_ms)),
        "trips": [
            {
                "winner_der": d.winner_der,
                "t_ftts_s": _jsonify(d.t_ftts),
                "target_line": d.target_line,
                "breakers": d.breakers,
            }
            for d in bundle.trip_decisions
        ],
        "sim": _jsonify(asdict(bundle.config.sim)),
        "scenario_id": bundle.config.scenario_id,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written


_CASE_COLUMNS = list(case_to_row(CaseResult(scenario_id="x", kind="fault")))


def emit_report(report: MetricsReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "metrics.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonify(report.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    path = os.path.join(out_dir, "cases.csv")
    rows = [",".join(_CASE_COLUMNS)]
    for case in report.per_case:
        row = case_to_row(case, report.accuracy_window_ms)
        cells = []
        for col in _CASE_COLUMNS:
            v = row[col]
            if v is None:
                cells.append("")
            elif isinstance(v, bool):
                cells.append(str(v).lower())
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(_num(v))
            else:
                cells.append(str(v))
        rows.append(",".join(cells))
    _write(path, rows)
    written.append(path)
    return written


def emit_outputs(bundle_or_report, out_dir: str) -> list[str]:
    """Write a TraceBundle's CSV set or a MetricsReport's report files."""
    if isinstance(bundle_or_report, TraceBundle):
        return emit_bundle(bundle_or_report, out_dir)
    if isinstance(bundle_or_report, MetricsReport):
        return emit_report(bundle_or_report, out_dir)
    raise TypeError(f"cannot emit {type(bundle_or_report).__name__}")


# ======================================================================
# batch execution
# ======================================================================


def _run_case(cfg: ScenarioConfig) -> CaseResult:
    try:
        return run_scenario(cfg).case_result
    except Exception as exc:  # record the failure, keep the batch going
        return CaseResult(scenario_id=cfg.scenario_id, kind="error", error=str(exc))


def run_batch(
    configs: list[ScenarioConfig],
    parallelism: int = 1,
    window_ms: float | None = None,
) -> MetricsReport:
    """Run scenarios (optionally across processes) and aggregate one report.

    Results are keyed and merged by scenario id, so the outcome is identical
    for any worker count.
    """
    if not configs:
        from .errors import EmptyBatch

        raise EmptyBatch("no scenarios to run")
    ids = [c.scenario_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario ids in a batch must be unique")
    if window_ms is None:
        window_ms = configs[0].metrics.accuracy_window_ms
    if parallelism <= 1:
        cases = [_run_case(c) for c in configs]
    else:
        with multiprocessing.Pool(processes=parallelism) as pool:
            cases = pool.map(_run_case, configs, chunksize=8)
    return build_report(cases, window_ms=window_ms)
