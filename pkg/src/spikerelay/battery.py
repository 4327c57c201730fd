"""Batch generators: the built-in reproduction campaign and sweep expansion.

The "paper battery" mirrors the study's campaign scale: 378 fault cases (two
topologies x every line x three positions x {AG, ABG, ABCG} x a six-point
resistance sweep from bolted to high-impedance) plus 125 load-change cases at
+/-20 % and +/-40 %.  Randomness enters only through the seeded jitter of the
load-case start times; the physics of every scenario is deterministic.
"""

from __future__ import annotations

import itertools

import numpy as np
import yaml

from .config import ScenarioConfig, scenario_from_dict
from .errors import ConfigError
from .topologies import make_topology

FAULT_TOPOLOGIES = ("ring3", "mesh4")
FAULT_TYPES = ("AG", "ABG", "ABCG")
FAULT_RESISTANCES = (0.001, 0.01, 0.1, 0.5, 1.0, 3.0)
FAULT_POSITIONS = (0.1, 0.5, 0.9)
LOAD_FRACTIONS = (0.2, -0.2, 0.4, -0.4)

_FAULT_SIM = {"duration_s": 0.65}
_FAULT_T = (0.25, 0.55)
_LOAD_SIM = {"duration_s": 1.0}


def _fault_scenario(topo, line, pos, ftype, r, neuron=None, sim_extra=None) -> ScenarioConfig:
    sim = dict(_FAULT_SIM)
    if sim_extra:
        sim.update(sim_extra)
    return scenario_from_dict(
        {
            "scenario_id": f"fault-{topo}-l{line}-p{pos}-{ftype}-r{r}",
            "topology": topo,
            "neuron": dict(neuron or {}),
            "events": [
                {
                    "kind": "fault",
                    "line": line,
                    "position": pos,
                    "fault_type": ftype,
                    "resistance": r,
                    "t_start": _FAULT_T[0],
                    "t_end": _FAULT_T[1],
                }
            ],
            "sim": sim,
        }
    )


def fault_battery(
    topologies=FAULT_TOPOLOGIES,
    types=FAULT_TYPES,
    resistances=FAULT_RESISTANCES,
    positions=FAULT_POSITIONS,
    neuron=None,
    sim_extra=None,
) -> list[ScenarioConfig]:
    out = []
    for topo in topologies:
        n_lines = len(make_topology(topo).lines)
        for line, pos, ftype, r in itertools.product(
            range(n_lines), positions, types, resistances
        ):
            out.append(_fault_scenario(topo, line, pos, ftype, r, neuron, sim_extra))
    return out


def load_battery(n_cases: int = 125, seed: int = 0) -> list[ScenarioConfig]:
    """Load-step scenarios at +/-20 % and +/-40 %, seeded start-time jitter."""
    rng = np.random.default_rng(seed)
    combos = []
    for topo in FAULT_TOPOLOGIES:
        n_bus = len(make_topology(topo).buses)
        combos.extend(
            (topo, bus, frac)
            for bus in range(n_bus)
            for frac in LOAD_FRACTIONS
        )
    out = []
    for i in range(n_cases):
        topo, bus, frac = combos[i % len(combos)]
        t_start = 0.25 + float(rng.integers(0, 5)) * 0.02
        out.append(
            scenario_from_dict(
                {
                    "scenario_id": f"load-{i:03d}-{topo}-b{bus}-f{frac}",
                    "topology": topo,
                    "events": [
                        {
                            "kind": "load_step",
                            "bus": bus,
                            "fraction": frac,
                            "t_start": t_start,
                            "t_end": t_start + 0.5,
                        }
                    ],
                    "sim": dict(_LOAD_SIM),
                }
            )
        )
    return out


def paper_battery(seed: int = 0) -> list[ScenarioConfig]:
    """The full reproduction campaign: 378 fault cases + 125 load cases."""
    return fault_battery() + load_battery(n_cases=125, seed=seed)


# -- disturbance-weight sweep -------------------------------------------------

WEIGHT_GRID = {
    "alpha": (0.5, 1.0, 2.0),
    "beta": (0.25, 0.5, 1.5),
    "gamma": (0.001, 0.005, 0.02),
}


def weight_grid_battery(n_cases: int = 50, seed: int = 1) -> dict[tuple, list[ScenarioConfig]]:
    """A seeded fault-case subsample replicated across the weight grid.

    Returns {(alpha, beta, gamma): scenarios}; scenario ids carry the weight
    combo so batches stay unique.
    """
    base = fault_battery()
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(base), size=min(n_cases, len(base)), replace=False))
    out: dict[tuple, list[ScenarioConfig]] = {}
    for combo in itertools.product(*WEIGHT_GRID.values()):
        alpha, beta, gamma = combo
        neuron = {"alpha": alpha, "beta": beta, "gamma": gamma}
        scens = []
        for i in idx:
            src = base[i]
            ev = src.events[0].spec
            scen = _fault_scenario(
                src.topology,
                ev.line,
                ev.position,
                ev.fault_type,
                ev.resistance,
                neuron=neuron,
            )
            scen.scenario_id = f"w{alpha}-{beta}-{gamma}-{scen.scenario_id}"
            scens.append(scen)
        out[combo] = scens
    return out


# -- user sweep specs ---------------------------------------------------------


def expand_sweep(spec: dict) -> list[ScenarioConfig]:
    """Expand a sweep document into scenarios.

    Schema::

        faults:
          topologies: [ring3, mesh4]     # default both
          lines: all                     # or explicit id list
          positions: [0.1, 0.5, 0.9]
          fault_types: [AG, ABG, ABCG]
          resistances: [0.001, 0.01, 0.1, 0.5, 1.0, 3.0]
        loads:
          n_cases: 125
        neuron: {...}                    # relay overrides for every case
        seed: 0
    """
    if not isinstance(spec, dict):
        raise ConfigError("<sweep>", "sweep spec must be a mapping")
    unknown = set(spec) - {"faults", "loads", "neuron", "seed"}
    if unknown:
        raise ConfigError("<sweep>", f"unknown field(s) {sorted(unknown)}")
    seed = int(spec.get("seed", 0))
    neuron = spec.get("neuron") or {}
    out: list[ScenarioConfig] = []
    if "faults" in spec and spec["faults"] is not None:
        f = dict(spec["faults"])
        unknown = set(f) - {"topologies", "lines", "positions", "fault_types", "resistances"}
        if unknown:
            raise ConfigError("faults", f"unknown field(s) {sorted(unknown)}")
        topologies = f.get("topologies", list(FAULT_TOPOLOGIES))
        positions = f.get("positions", list(FAULT_POSITIONS))
        types = f.get("fault_types", list(FAULT_TYPES))
        resistances = f.get("resistances", list(FAULT_RESISTANCES))
        lines = f.get("lines", "all")
        for topo in topologies:
            n_lines = len(make_topology(topo).lines)
            line_ids = range(n_lines) if lines == "all" else [int(x) for x in lines]
            for line, pos, ftype, r in itertools.product(line_ids, positions, types, resistances):
                out.append(_fault_scenario(topo, line, float(pos), ftype, float(r), neuron))
    if "loads" in spec and spec["loads"] is not None:
        ld = dict(spec["loads"])
        unknown = set(ld) - {"n_cases"}
        if unknown:
            raise ConfigError("loads", f"unknown field(s) {sorted(unknown)}")
        out.extend(load_battery(n_cases=int(ld.get("n_cases", 125)), seed=seed))
    if not out:
        raise ConfigError("<sweep>", "sweep expands to zero scenarios")
    return out


def load_sweep(path) -> list[ScenarioConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = yaml.safe_load(fh.read()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<sweep>", f"YAML parse error: {exc}") from exc
    return expand_sweep(spec)
