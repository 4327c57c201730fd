"""Metric extraction and the inverse-time (IDMT) comparator.

Latency is the gap between fault onset (local current leaving its 5%%
pre-event band) and the first tripping spike; accuracy scores whether the
electrically nearest unit answered inside the scoring window and cleared the
right line; spike economy is total spikes per unit; spatial selectivity is
the fraction of uniquely-attributable fault cases won by the nearest unit.
The IDMT comparator evaluates the IEC 60255 standard-inverse curve in its
division form t = tms*K/(M^n - 1) so both the classical curve and the
spike-based latency trend can be checked for the same monotone shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .errors import BelowPickup, EmptyBatch


class _MissedDetection:
    """Sentinel for cases whose relay never produced a tripping spike."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSED_DETECTION"


MISSED_DETECTION = _MissedDetection()


def is_missed(value) -> bool:
    return value is MISSED_DETECTION


@dataclass
class CaseResult:
    """Outcome of one scenario in a batch."""

    scenario_id: str
    kind: str  # "fault" | "load" | "sag"
    fault_line: int | None = None
    fault_type: str | None = None
    fault_resistance: float | None = None
    fault_position: float | None = None
    t_onset: float | None = None
    t_first_spike: float | None = None
    winner_der: int | None = None
    tripped_line: int | None = None
    nearest_ders: list[int] = field(default_factory=list)
    nearest_unique: bool = False
    input_spikes: dict[int, int] = field(default_factory=dict)
    output_spikes: dict[int, int] = field(default_factory=dict)
    breaker_ops: int = 0
    error: str | None = None

    @property
    def latency_ms(self):
        return tripping_latency(self.t_first_spike, self.t_onset)

    @property
    def total_input_spikes(self) -> int:
        return sum(self.input_spikes.values())

    @property
    def total_output_spikes(self) -> int:
        return sum(self.output_spikes.values())


# ======================================================================
# Per-case metrics
# ======================================================================


def detect_fault_onset(
    t: np.ndarray, current: np.ndarray, i0: float, threshold: float = 0.05
) -> float | None:
    """First time the current leaves its pre-event band by > 5 % of i0.

    Returns None when the trace never exceeds the band (large load steps move
    local currents by only a few percent, so they produce no onset).
    """
    t = np.asarray(t, dtype=float)
    current = np.asarray(current, dtype=float)
    band = threshold * abs(i0)
    hits = np.nonzero(np.abs(current - i0) > band)[0]
    return float(t[hits[0]]) if hits.size else None


def tripping_latency(t_first_spike, t_onset):
    """Milliseconds between onset and the first tripping spike."""
    if t_first_spike is None or t_onset is None:
        return MISSED_DETECTION
    if t_first_spike < t_onset:
        raise ValueError("first spike precedes the detected onset")
    return (t_first_spike - t_onset) * 1e3


def case_correct(case: CaseResult, window_ms: float) -> bool:
    """Correctness of one case under the stated scoring window.

    Fault cases require the nearest unit (any of them, when the oracle is
    ambiguous) to have spiked first within the window and the faulted line to
    have been selected.  Non-fault cases are correct when the relays stayed
    silent and no breaker moved (correct non-operation).  Cases that errored
    out are never correct.
    """
    if case.error:
        return False
    if case.kind != "fault":
        return case.total_output_spikes == 0 and case.breaker_ops == 0
    lat = case.latency_ms
    if is_missed(lat):
        return False
    return (
        lat <= window_ms
        and case.winner_der in case.nearest_ders
        and case.tripped_line == case.fault_line
    )


def detection_accuracy(cases: list[CaseResult], window_ms: float) -> float:
    """Percent of cases scored correct under ``window_ms``."""
    if not cases:
        raise EmptyBatch("no cases to score")
    good = sum(case_correct(c, window_ms) for c in cases)
    return 100.0 * good / len(cases)


def spike_economy(total_spikes: float, n_ders: int) -> float:
    """Average spikes per unit for one event."""
    if n_ders < 1:
        raise ValueError("n_ders must be >= 1")
    return total_spikes / n_ders


def spatial_selectivity(cases: list[CaseResult]) -> float:
    """Percent of unique-nearest fault cases won by the oracle's nearest unit.

    Cases without a unique nearest unit (electrically equidistant pairs) are
    excluded from the denominator.
    """
    scored = [c for c in cases if c.kind == "fault" and c.nearest_unique]
    if not scored:
        raise EmptyBatch("no fault cases with a unique nearest unit")
    good = sum(
        c.winner_der is not None and c.winner_der == c.nearest_ders[0] for c in scored
    )
    return 100.0 * good / len(scored)


def false_trip_count(cases: list[CaseResult]) -> int:
    """Breaker operations outside fault cases plus wrong-line fault trips."""
    n = 0
    for c in cases:
        if c.kind != "fault":
            n += c.breaker_ops > 0
        elif c.tripped_line is not None and c.tripped_line != c.fault_line:
            n += 1
    return n


# ======================================================================
# Inverse-time comparator
# ======================================================================


def idmt_trip_time(m: float, k: float = 0.14, n: float = 0.02, tms: float = 1.0) -> float:
    """IEC 60255 standard-inverse trip time t = tms*K/(M^n - 1), seconds."""
    if m <= 1.0:
        raise BelowPickup(f"current multiple {m} is at or below pickup")
    return tms * k / (m**n - 1.0)


def sensitivity_dtdd(d: float, k: float) -> float:
    """Analytic derivative of the spike interval: -k/(1 + k*D)^2."""
    if d < 0:
        raise ValueError("disturbance index must be >= 0")
    return -k / (1.0 + k * d) ** 2


def neuromorphic_trip_curve(severities, run_case) -> list[dict]:
    """Simulated latency per severity point.

    ``run_case`` maps one severity value to a latency in ms (or the
    missed-detection sentinel); rows carry a ``flagged`` marker for misses.
    Needs at least one point; monotonicity over the sweep is what the
    inverse-time duality claim reduces to at testable level.
    """
    rows = []
    for sev in severities:
        lat = run_case(sev)
        rows.append(
            {
                "severity": float(sev),
                "latency_ms": (None if is_missed(lat) else float(lat)),
                "flagged": is_missed(lat),
            }
        )
    return rows


def monotone_non_increasing(values, atol: float = 0.0) -> bool:
    vals = [v for v in values if v is not None]
    return all(b <= a + atol for a, b in zip(vals, vals[1:]))


# ======================================================================
# Batch report
# ======================================================================


@dataclass
class MetricsReport:
    """Aggregate metrics for a batch, with the full latency distribution."""

    n_cases: int
    n_fault_cases: int
    n_load_cases: int
    accuracy_pct: float | None
    accuracy_window_ms: float
    accuracy_pct_60ms: float | None
    selectivity_pct: float | None
    spike_economy_mean: float | None
    false_trips: int
    missed_detections: int
    latency_ms: dict
    idmt_curves: dict | None = None  # sampled (severity, trip_time) tables
    per_case: list[CaseResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "n_cases": self.n_cases,
            "n_fault_cases": self.n_fault_cases,
            "n_load_cases": self.n_load_cases,
            "accuracy_pct": self.accuracy_pct,
            "accuracy_window_ms": self.accuracy_window_ms,
            "accuracy_pct_60ms": self.accuracy_pct_60ms,
            "selectivity_pct": self.selectivity_pct,
            "spike_economy_mean": self.spike_economy_mean,
            "false_trips": self.false_trips,
            "missed_detections": self.missed_detections,
            "latency_ms": self.latency_ms,
        }
        if self.idmt_curves is not None:
            d["idmt_curves"] = self.idmt_curves
        return d


def build_report(
    cases: list[CaseResult], window_ms: float = 40.0, n_ders_hint: int | None = None
) -> MetricsReport:
    """Aggregate a batch of case results (order independent)."""
    if not cases:
        raise EmptyBatch("cannot build a report from zero cases")
    cases = sorted(cases, key=lambda c: c.scenario_id)
    faults = [c for c in cases if c.kind == "fault"]
    loads = [c for c in cases if c.kind != "fault"]
    lats = [c.latency_ms for c in faults]
    real = sorted(x for x in lats if not is_missed(x))
    missed = sum(is_missed(x) for x in lats)

    lat_stats: dict = {"count": len(real)}
    if real:
        arr = np.array(real)
        lat_stats.update(
            min=float(arr.min()),
            median=float(np.median(arr)),
            mean=float(arr.mean()),
            p95=float(np.percentile(arr, 95)),
            max=float(arr.max()),
        )

    econ = None
    if faults:
        per_case_econ = [
            spike_economy(c.total_input_spikes, max(len(c.input_spikes), 1))
            for c in faults
        ]
        econ = float(np.mean(per_case_econ))

    try:
        sel = spatial_selectivity(cases)
    except EmptyBatch:
        sel = None

    return MetricsReport(
        n_cases=len(cases),
        n_fault_cases=len(faults),
        n_load_cases=len(loads),
        accuracy_pct=detection_accuracy(cases, window_ms),
        accuracy_window_ms=window_ms,
        accuracy_pct_60ms=detection_accuracy(cases, 60.0),
        selectivity_pct=sel,
        spike_economy_mean=econ,
        false_trips=false_trip_count(cases),
        missed_detections=missed,
        latency_ms=lat_stats,
        per_case=cases,
    )
