"""First-to-spike protection: arbitration, line selection, breaker actuation.

The unit whose relay emits the earliest output spike is deemed closest to the
fault and wins the episode.  Near-simultaneous spikes (inside the tie window,
one integration step by default) are resolved winner-takes-all by lowest unit
id.  The winner trips the line its per-line priority index ranks highest,
opening the breakers at both ends; everything later in the episode is
suppressed so exactly one trip decision emerges per episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NoConnectedLines, NoSpike
from .network import PhasorNetwork

#: Default tie window: one spike-sampling interval.
DEFAULT_TIE_WINDOW = 3.125e-6


@dataclass
class SpikeEvent:
    t: float
    der_id: int
    kind: str  # "input" | "output"
    line_id: int | None = None  # per-line channel, when applicable


@dataclass
class BreakerEvent:
    t: float
    breaker_id: str
    state: str  # "open" | "close" | "redundant"


@dataclass
class LinePriority:
    der_id: int
    line_id: int
    pi: float


@dataclass
class TripDecision:
    winner_der: int
    t_ftts: float
    target_line: int
    breakers: list[str] = field(default_factory=list)


def breaker_name(network: PhasorNetwork, line_id: int, at_from_end: bool) -> str:
    """Breaker naming follows the bus pair seen from the breaker's own end,
    1-based (line 0-1 carries CB12 at bus 0 and CB21 at bus 1)."""
    ln = network.lines[line_id]
    a, b = ln.from_bus + 1, ln.to_bus + 1
    return f"CB{a}{b}" if at_from_end else f"CB{b}{a}"


def aggregate_lines(
    per_line_d: dict[int, float], k: float, der_id: int = 0
) -> tuple[float, list[LinePriority]]:
    """Aggregate the per-line disturbance channels of one DER.

    Returns the summed membrane drive contribution (the sum of the per-line
    indices, which is what the summed per-line spike trains integrate to) and
    a priority index Pi_j = 1 + k*D_j per line.
    """
    if not per_line_d:
        raise NoConnectedLines(f"DER {der_id} has no connected lines")
    priorities = [
        LinePriority(der_id=der_id, line_id=line, pi=1.0 + k * d)
        for line, d in sorted(per_line_d.items())
    ]
    total_drive = float(sum(per_line_d.values()))
    return total_drive, priorities


def select_faulted_line(priorities: list[LinePriority]) -> int:
    """Argmax of the priority index; ties break toward the lowest line id."""
    if not priorities:
        raise NoConnectedLines("empty priority list")
    best = priorities[0]
    for p in priorities[1:]:
        if p.pi > best.pi or (p.pi == best.pi and p.line_id < best.line_id):
            best = p
    return best.line_id


def arbitrate_ftts(
    first_spikes: dict[int, float], tie_window: float = DEFAULT_TIE_WINDOW
) -> tuple[int, float]:
    """Pick the first-to-spike unit.

    Spikes strictly inside the tie window of the minimum count as simultaneous
    and resolve winner-takes-all toward the lowest unit id.  An empty map
    means the episode never produced a spike.
    """
    if not first_spikes:
        raise NoSpike("no unit spiked in this episode")
    t_min = min(first_spikes.values())
    tied = [der for der, t in first_spikes.items() if t - t_min < tie_window]
    winner = min(tied)
    return winner, first_spikes[winner]


def trip_breakers(
    decision: TripDecision, network: PhasorNetwork, breaker_delay: float = 0.0
) -> list[BreakerEvent]:
    """Open both breakers of the decision's target line.

    Commands against already-open breakers are logged as redundant and leave
    the network untouched.
    """
    ln = network.lines[decision.target_line]
    t_act = decision.t_ftts + breaker_delay
    events: list[BreakerEvent] = []
    for at_from in (True, False):
        name = breaker_name(network, ln.id, at_from)
        closed = ln.breaker_from if at_from else ln.breaker_to
        if closed:
            if at_from:
                ln.breaker_from = False
            else:
                ln.breaker_to = False
            events.append(BreakerEvent(t=t_act, breaker_id=name, state="open"))
        else:
            events.append(BreakerEvent(t=t_act, breaker_id=name, state="redundant"))
    decision.breakers = [e.breaker_id for e in events if e.state == "open"]
    return events


def per_line_disturbances(
    dv: float,
    dp: float,
    line_di: dict[int, float],
    alpha: float,
    beta: float,
    gamma: float,
    d_min: float,
) -> dict[int, float]:
    """Per-line disturbance channels for one DER.

    Bus-level voltage and power deviations are split evenly across the DER's
    connected lines (so aggregation stays degree-neutral) while each channel
    keeps its own line-current deviation; channels below the noise floor are
    zeroed, mirroring the DER-level index.
    """
    if not line_di:
        raise NoConnectedLines("DER has no connected lines")
    deg = len(line_di)
    shared = (alpha * dv + gamma * dp) / deg
    out = {}
    for line, di in line_di.items():
        d = shared + beta * di
        out[line] = d if d >= d_min else 0.0
    return out
