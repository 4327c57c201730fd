"""Spiking-relay protection simulator for islanded AC microgrids.

Each generating unit hosts a leaky integrate-and-fire relay that encodes
local voltage/current/power deviations into spike timing; the first unit to
spike wins the breaker arbitration.  The package bundles the quasi-static
electrical model, the relay dynamics, first-to-spike protection logic, the
metric suite (latency, accuracy, spike economy, selectivity, inverse-time
comparison), and a deterministic scenario/batch runner with CSV/JSON output.
"""

__version__ = "0.1.0"

from .errors import (
    BelowPickup,
    ConfigError,
    EmptyBatch,
    EmptyBaselineWindow,
    IslandWithoutSource,
    MonotonicTimeViolation,
    NoConnectedLines,
    NoSpike,
    SingularNetwork,
    SolveFailure,
    SpikeRelayError,
    Unreachable,
)
from .network import (
    Baseline,
    Bus,
    BusKind,
    BusSolution,
    DerUnit,
    FaultSpec,
    Line,
    Measurement,
    PhasorNetwork,
    build_admittance,
    capture_baseline,
    electrical_distance,
    limit_current,
    measure,
    nearest_ders,
    share_power,
    solve_network,
)
from .topologies import TOPOLOGIES, make_topology
from .neuron import (
    NeuronParams,
    NeuronState,
    adaptive_threshold,
    deviations,
    disturbance_index,
    encode_input_spike,
    integrate_membrane,
    neuron_preset,
    spike_interval,
    step_neuron,
)
from .protection import (
    BreakerEvent,
    LinePriority,
    SpikeEvent,
    TripDecision,
    aggregate_lines,
    arbitrate_ftts,
    select_faulted_line,
    trip_breakers,
)
from .metrics import (
    MISSED_DETECTION,
    CaseResult,
    MetricsReport,
    build_report,
    detect_fault_onset,
    detection_accuracy,
    idmt_trip_time,
    is_missed,
    neuromorphic_trip_curve,
    sensitivity_dtdd,
    spatial_selectivity,
    spike_economy,
    tripping_latency,
)
from .config import ScenarioConfig, load_scenario, parse_scenario, serialize_scenario
from .engine import TraceBundle, run_scenario
from .runner import emit_outputs, run_batch
from .battery import expand_sweep, fault_battery, load_battery, paper_battery
