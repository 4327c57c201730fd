"""Scenario configuration: schema, validation, YAML (de)serialization.

A scenario is a topology (preset name or explicit bus/line/DER tables), a
set of per-unit relay parameters, an ordered event timeline (load steps,
faults, grid sags), solver settings, and metric settings.  Parsing fills
every omitted field from the published defaults and rejects unknown keys;
``serialize_scenario(parse_scenario(text))`` round-trips losslessly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .network import Bus, BusKind, DerUnit, FaultSpec, Line, PhasorNetwork
from .neuron import DRIVE_MODES, NeuronParams
from .topologies import TOPOLOGIES, make_topology


@dataclass
class LoadStepEvent:
    bus: int
    fraction: float  # +0.2 = +20 %
    t_start: float
    t_end: float
    kind: str = "load_step"


@dataclass
class FaultEvent:
    spec: FaultSpec
    kind: str = "fault"

    @property
    def t_start(self):
        return self.spec.t_start

    @property
    def t_end(self):
        return self.spec.t_end


@dataclass
class GridSagEvent:
    depth: float  # 0.2 = 20 % EMF depression at PCC sources
    t_start: float
    t_end: float
    kind: str = "grid_sag"


@dataclass
class SimParams:
    duration_s: float = 1.0
    dt_neuron: float = 3.125e-6
    dt_network: float = 5.0e-5
    seed: int = 0
    breakers_enabled: bool = True
    latch_mode: str = "on"  # "on" | "off"
    membrane_drive: str = "gated"
    line_aggregation: str = "der"  # "der" | "per_line_sum"
    measurement_tau_s: float = 0.02
    settle_window_s: float = 0.1
    baseline_window_s: float = 0.05
    breaker_delay_s: float = 0.0
    trace_decimation: int = 100


@dataclass
class MetricsParams:
    accuracy_window_ms: float = 40.0


@dataclass
class DerOverride:
    """Per-unit overrides, matched to the preset DER at ``bus``."""

    bus: int
    rated_power: float | None = None
    droop_coeff: float | None = None
    i_max: float | None = None
    source_impedance: complex | None = None
    relay_enabled: bool | None = None
    neuron: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    scenario_id: str = "scenario"
    topology: str | dict = "ring3"
    loads: dict[int, float] | None = None
    neuron: dict = field(default_factory=dict)  # defaults applied to every DER
    ders: list[DerOverride] = field(default_factory=list)
    events: list = field(default_factory=list)
    sim: SimParams = field(default_factory=SimParams)
    metrics: MetricsParams = field(default_factory=MetricsParams)

    # -- materialization -------------------------------------------------

    def build_network(self) -> PhasorNetwork:
        if isinstance(self.topology, str):
            net = make_topology(self.topology)
        else:
            net = _network_from_dict(self.topology)
        if self.loads is not None:
            net.loads = dict(self.loads)
            missing = set(net.loads) - {b.id for b in net.buses}
            if missing:
                raise ConfigError("loads", f"unknown buses {sorted(missing)}")
        for ov in self.ders:
            di = net.der_index_at_bus(ov.bus)
            if di is None:
                raise ConfigError("ders", f"no DER at bus {ov.bus}")
            d = net.ders[di]
            if ov.rated_power is not None:
                d.rated_power = ov.rated_power
            if ov.droop_coeff is not None:
                d.droop_coeff = ov.droop_coeff
            if ov.i_max is not None:
                d.i_max = ov.i_max
            if ov.source_impedance is not None:
                d.source_impedance = ov.source_impedance
            if ov.relay_enabled is not None:
                d.relay_enabled = ov.relay_enabled
            d.validate()
        return net

    def neuron_params(self, net: PhasorNetwork) -> list[NeuronParams]:
        """One NeuronParams per DER: defaults <- scenario neuron <- per-DER."""
        by_bus = {ov.bus: ov.neuron for ov in self.ders}
        out = []
        for d in net.ders:
            kw = dict(self.neuron)
            kw.update(by_bus.get(d.bus, {}))
            kw.setdefault("dt", self.sim.dt_neuron)
            try:
                out.append(NeuronParams(**kw))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"neuron(bus={d.bus})", str(exc)) from exc
        return out


# ======================================================================
# dict <-> dataclass plumbing
# ======================================================================

_SIM_FIELDS = {f.name for f in dataclasses.fields(SimParams)}
_METRIC_FIELDS = {f.name for f in dataclasses.fields(MetricsParams)}
_NEURON_FIELDS = {f.name for f in dataclasses.fields(NeuronParams)}
_TOP_FIELDS = {"scenario_id", "topology", "loads", "neuron", "ders", "events", "sim", "metrics"}


def _reject_unknown(d: dict, allowed: set, path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(path, f"unknown field(s) {sorted(unknown)}")


def _complex_from(v, path: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError as exc:
            raise ConfigError(path, f"bad complex literal {v!r}") from exc
    if isinstance(v, dict):
        _reject_unknown(v, {"r", "x"}, path)
        return complex(float(v.get("r", 0.0)), float(v.get("x", 0.0)))
    raise ConfigError(path, f"cannot parse complex from {v!r}")


def _network_from_dict(top: dict) -> PhasorNetwork:
    _reject_unknown(top, {"buses", "lines", "ders", "loads"}, "topology")
    buses = []
    for i, b in enumerate(top.get("buses", [])):
        _reject_unknown(b, {"id", "kind", "nominal_voltage"}, f"topology.buses[{i}]")
        try:
            kind = BusKind(b.get("kind", "der"))
        except ValueError as exc:
            raise ConfigError(f"topology.buses[{i}].kind", str(exc)) from exc
        buses.append(Bus(id=b["id"], kind=kind, nominal_voltage=b.get("nominal_voltage", 415.0)))
    lines = []
    for i, ln in enumerate(top.get("lines", [])):
        _reject_unknown(
            ln, {"id", "from_bus", "to_bus", "r", "x", "impedance"}, f"topology.lines[{i}]"
        )
        if "impedance" in ln:
            z = _complex_from(ln["impedance"], f"topology.lines[{i}].impedance")
        else:
            z = complex(float(ln.get("r", 0.0)), float(ln.get("x", 0.0)))
        lines.append(Line(id=ln["id"], from_bus=ln["from_bus"], to_bus=ln["to_bus"], impedance=z))
    ders = []
    for i, d in enumerate(top.get("ders", [])):
        _reject_unknown(
            d,
            {"bus", "rated_power", "droop_coeff", "i_max", "source_impedance",
             "relay_enabled", "inert_meta"},
            f"topology.ders[{i}]",
        )
        kw = dict(d)
        if "source_impedance" in kw:
            kw["source_impedance"] = _complex_from(
                kw["source_impedance"], f"topology.ders[{i}].source_impedance"
            )
        ders.append(DerUnit(**kw))
    loads = {int(k): float(v) for k, v in (top.get("loads") or {}).items()}
    try:
        return PhasorNetwork(buses, lines, ders, loads)
    except Exception as exc:
        raise ConfigError("topology", str(exc)) from exc


def _event_from_dict(e: dict, idx: int):
    path = f"events[{idx}]"
    if not isinstance(e, dict) or "kind" not in e:
        raise ConfigError(path, "event needs a 'kind' field")
    kind = e["kind"]
    if kind == "load_step":
        _reject_unknown(e, {"kind", "bus", "fraction", "t_start", "t_end"}, path)
        return LoadStepEvent(
            bus=int(e["bus"]),
            fraction=float(e["fraction"]),
            t_start=float(e["t_start"]),
            t_end=float(e["t_end"]),
        )
    if kind == "fault":
        _reject_unknown(
            e,
            {"kind", "line", "position", "fault_type", "resistance", "t_start", "t_end"},
            path,
        )
        spec = FaultSpec(
            line=int(e["line"]),
            position=float(e["position"]),
            fault_type=str(e["fault_type"]),
            resistance=float(e["resistance"]),
            t_start=float(e["t_start"]),
            t_end=float(e["t_end"]),
        )
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
        return FaultEvent(spec=spec)
    if kind == "grid_sag":
        _reject_unknown(e, {"kind", "depth", "t_start", "t_end"}, path)
        return GridSagEvent(
            depth=float(e["depth"]), t_start=float(e["t_start"]), t_end=float(e["t_end"])
        )
    raise ConfigError(path, f"unknown event kind {kind!r}")


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "scenario must be a mapping")
    _reject_unknown(data, _TOP_FIELDS, "<root>")

    topology = data.get("topology", "ring3")
    if isinstance(topology, str) and topology not in TOPOLOGIES:
        raise ConfigError("topology", f"unknown preset {topology!r}")

    sim_d = data.get("sim", {}) or {}
    _reject_unknown(sim_d, _SIM_FIELDS, "sim")
    sim = SimParams(**sim_d)

    met_d = data.get("metrics", {}) or {}
    _reject_unknown(met_d, _METRIC_FIELDS, "metrics")
    metrics = MetricsParams(**met_d)

    neuron = dict(data.get("neuron", {}) or {})
    _reject_unknown(neuron, _NEURON_FIELDS, "neuron")

    ders = []
    for i, ov in enumerate(data.get("ders", []) or []):
        _reject_unknown(
            ov,
            {"bus", "rated_power", "droop_coeff", "i_max", "source_impedance",
             "relay_enabled", "neuron"},
            f"ders[{i}]",
        )
        nv = dict(ov.get("neuron", {}) or {})
        _reject_unknown(nv, _NEURON_FIELDS, f"ders[{i}].neuron")
        kw = {k: v for k, v in ov.items() if k not in ("neuron",)}
        if "source_impedance" in kw:
            kw["source_impedance"] = _complex_from(
                kw["source_impedance"], f"ders[{i}].source_impedance"
            )
        ders.append(DerOverride(neuron=nv, **kw))

    events = [_event_from_dict(e, i) for i, e in enumerate(data.get("events", []) or [])]

    loads = data.get("loads")
    if loads is not None:
        loads = {int(k): float(v) for k, v in loads.items()}

    cfg = ScenarioConfig(
        scenario_id=str(data.get("scenario_id", "scenario")),
        topology=topology,
        loads=loads,
        neuron=neuron,
        ders=ders,
        events=events,
        sim=sim,
        metrics=metrics,
    )
    validate_scenario(cfg)
    return cfg


def validate_scenario(cfg: ScenarioConfig) -> None:
    sim = cfg.sim
    if sim.duration_s <= 0:
        raise ConfigError("sim.duration_s", "must be > 0")
    if sim.dt_neuron <= 0 or sim.dt_network <= 0:
        raise ConfigError("sim", "dt_neuron and dt_network must be > 0")
    ratio = sim.dt_network / sim.dt_neuron
    if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
        raise ConfigError("sim", "dt_neuron must divide dt_network")
    if sim.latch_mode not in ("on", "off"):
        raise ConfigError("sim.latch_mode", "must be 'on' or 'off'")
    if sim.membrane_drive not in DRIVE_MODES:
        raise ConfigError("sim.membrane_drive", f"must be one of {DRIVE_MODES}")
    if sim.line_aggregation not in ("der", "per_line_sum"):
        raise ConfigError("sim.line_aggregation", "must be 'der' or 'per_line_sum'")
    if sim.measurement_tau_s < 0:
        raise ConfigError("sim.measurement_tau_s", "must be >= 0")
    if sim.trace_decimation < 1:
        raise ConfigError("sim.trace_decimation", "must be >= 1")

    net = cfg.build_network()  # validates topology + overrides
    n_lines = len(net.lines)
    fault_windows = []
    for i, ev in enumerate(cfg.events):
        path = f"events[{i}]"
        if not ev.t_start < ev.t_end:
            raise ConfigError(path, "t_start must be < t_end")
        if ev.t_start < sim.baseline_window_s:
            raise ConfigError(
                path, f"events must start after the baseline window ({sim.baseline_window_s}s)"
            )
        if ev.t_end > sim.duration_s:
            raise ConfigError(path, "event extends past sim.duration_s")
        if isinstance(ev, FaultEvent):
            if not (0 <= ev.spec.line < n_lines):
                raise ConfigError(path, f"unknown line {ev.spec.line}")
            fault_windows.append((ev.t_start, ev.t_end, i))
        elif isinstance(ev, LoadStepEvent):
            if ev.bus not in net.loads or net.loads[ev.bus] <= 0:
                raise ConfigError(path, f"bus {ev.bus} carries no load to step")
            if ev.fraction <= -1.0:
                raise ConfigError(path, "fraction must be > -1")
        elif isinstance(ev, GridSagEvent):
            if not 0.0 < ev.depth < 1.0:
                raise ConfigError(path, "depth must lie in (0, 1)")
            pcc_src = any(
                net.buses[d.bus].kind is BusKind.PCC for d in net.ders
            )
            if not pcc_src:
                raise ConfigError(path, "grid_sag requires a source on a pcc bus")
    fault_windows.sort()
    for (s0, e0, i0), (s1, e1, i1) in zip(fault_windows, fault_windows[1:]):
        if s1 < e0:
            raise ConfigError(
                f"events[{i1}]", f"fault overlaps fault in events[{i0}] (one at a time)"
            )
    cfg.neuron_params(net)  # validates relay params


# ======================================================================
# serialization
# ======================================================================


def _complex_to(z: complex):
    return {"r": float(z.real), "x": float(z.imag)}


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    events = []
    for ev in cfg.events:
        if isinstance(ev, FaultEvent):
            s = ev.spec
            events.append(
                {
                    "kind": "fault",
                    "line": s.line,
                    "position": s.position,
                    "fault_type": s.fault_type,
                    "resistance": s.resistance,
                    "t_start": s.t_start,
                    "t_end": s.t_end,
                }
            )
        elif isinstance(ev, LoadStepEvent):
            events.append(
                {
                    "kind": "load_step",
                    "bus": ev.bus,
                    "fraction": ev.fraction,
                    "t_start": ev.t_start,
                    "t_end": ev.t_end,
                }
            )
        else:
            events.append(
                {"kind": "grid_sag", "depth": ev.depth, "t_start": ev.t_start, "t_end": ev.t_end}
            )
    ders = []
    for ov in cfg.ders:
        d = {"bus": ov.bus}
        for k in ("rated_power", "droop_coeff", "i_max", "relay_enabled"):
            v = getattr(ov, k)
            if v is not None:
                d[k] = v
        if ov.source_impedance is not None:
            d["source_impedance"] = _complex_to(ov.source_impedance)
        if ov.neuron:
            d["neuron"] = dict(sorted(ov.neuron.items()))
        ders.append(d)
    out = {
        "scenario_id": cfg.scenario_id,
        "topology": cfg.topology,
        "neuron": dict(sorted(cfg.neuron.items())),
        "ders": ders,
        "events": events,
        "sim": dataclasses.asdict(cfg.sim),
        "metrics": dataclasses.asdict(cfg.metrics),
    }
    if cfg.loads is not None:
        out["loads"] = {int(k): float(v) for k, v in sorted(cfg.loads.items())}
    return out


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a YAML scenario document into a validated ScenarioConfig."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"YAML parse error: {exc}") from exc
    if data is None:
        data = {}
    return scenario_from_dict(data)


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Canonical YAML for a scenario (stable key order)."""
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=True, default_flow_style=False)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
