"""Built-in microgrid topologies.

Presets cover the desk-scale test systems used throughout the study:

* ``radial2``      2-bus radial, 2 identical DERs (simplest feeder)
* ``ring3``        3-bus / 3-DER ring, identical units
* ``mesh4``        4-bus / 3-DER mesh with a tie-line to a load-only bus
* ``ring4``        4-bus / 4-DER ring (line data shared with hetero-ring4)
* ``hetero-ring3`` ring3 line variant with heterogeneous DER parameters
* ``hetero-ring4`` ring4 with heterogeneous DER parameters

All presets run at 415 V line-to-line, 50 Hz, with 10 kW rated units and a
default 3 kW local load per bus.  Converter-stage metadata (V_dc, L_f, C_f)
rides along as inert annotations.
"""

from __future__ import annotations

from .network import Bus, BusKind, DerUnit, Line, PhasorNetwork

DEFAULT_BUS_LOAD_W = 3000.0

# Heterogeneous active-power droop coefficients (pu/Hz) and converter metadata
_HETERO3_DROOP = (1.0e-4, 0.9e-4, 1.25e-4)
_HETERO3_META = (
    {"V_dc": 800.0, "L_f": 4.0e-3, "C_f": 200e-6},
    {"V_dc": 1000.0, "L_f": 4.3e-3, "C_f": 220e-6},
    {"V_dc": 1000.0, "L_f": 3.8e-3, "C_f": 180e-6},
)
_HETERO4_DROOP = (1.0e-4, 0.9e-4, 1.25e-4, 1.5e-4)
_HETERO4_META = (
    {"V_dc": 1000.0, "L_f": 4.0e-3, "C_f": 200e-6},
    {"V_dc": 1000.0, "L_f": 4.2e-3, "C_f": 220e-6},
    {"V_dc": 800.0, "L_f": 3.8e-3, "C_f": 180e-6},
    {"V_dc": 1000.0, "L_f": 4.4e-3, "C_f": 210e-6},
)
_HOMO_META = {"V_dc": 1000.0, "L_f": 4.0e-3, "C_f": 200e-6}

# Line impedance sets (ohms)
_RING3_Z = {(0, 1): 0.7 + 1.884j, (0, 2): 0.4 + 6.154j, (1, 2): 1.4 + 3.14j}
_MESH4_Z = {
    (0, 1): 0.3 + 1.884j,
    (0, 2): 0.2 + 6.154j,
    (1, 2): 0.7 + 3.14j,
    (0, 3): 0.1 + 6.154j,
}
_HRING3_Z = {(0, 1): 0.5 + 1.553j, (0, 2): 0.35 + 5.435j, (1, 2): 1.8 + 4.23j}
_RING4_Z = {
    (0, 1): 0.75 + 1.456j,
    (1, 2): 1.34 + 3.12j,
    (2, 3): 0.86 + 2.46j,
    (3, 0): 0.57 + 1.63j,
}
_RADIAL2_Z = {(0, 1): 0.6 + 1.6j}


def _build(
    n_bus: int,
    der_buses: list[int],
    z_map: dict[tuple[int, int], complex],
    droops: tuple[float, ...] | None = None,
    metas: tuple[dict, ...] | None = None,
    loads: dict[int, float] | None = None,
    load_bus_kinds: dict[int, BusKind] | None = None,
) -> PhasorNetwork:
    kinds = {b: BusKind.DER for b in der_buses}
    if load_bus_kinds:
        kinds.update(load_bus_kinds)
    buses = [Bus(id=i, kind=kinds.get(i, BusKind.LOAD)) for i in range(n_bus)]
    lines = [
        Line(id=k, from_bus=a, to_bus=b, impedance=z)
        for k, ((a, b), z) in enumerate(sorted(z_map.items()))
    ]
    ders = []
    for j, b in enumerate(der_buses):
        ders.append(
            DerUnit(
                bus=b,
                droop_coeff=(droops[j] if droops else 1.0e-4),
                inert_meta=dict(metas[j] if metas else _HOMO_META),
            )
        )
    if loads is None:
        loads = {i: DEFAULT_BUS_LOAD_W for i in range(n_bus)}
    return PhasorNetwork(buses, lines, ders, loads)


def radial2() -> PhasorNetwork:
    return _build(2, [0, 1], _RADIAL2_Z)


def ring3() -> PhasorNetwork:
    return _build(3, [0, 1, 2], _RING3_Z)


def mesh4() -> PhasorNetwork:
    return _build(4, [0, 1, 2], _MESH4_Z)


def ring4() -> PhasorNetwork:
    return _build(4, [0, 1, 2, 3], _RING4_Z)


def hetero_ring3() -> PhasorNetwork:
    return _build(3, [0, 1, 2], _HRING3_Z, droops=_HETERO3_DROOP, metas=_HETERO3_META)


def hetero_ring4() -> PhasorNetwork:
    return _build(4, [0, 1, 2, 3], _RING4_Z, droops=_HETERO4_DROOP, metas=_HETERO4_META)


TOPOLOGIES = {
    "radial2": radial2,
    "ring3": ring3,
    "mesh4": mesh4,
    "ring4": ring4,
    "hetero-ring3": hetero_ring3,
    "hetero-ring4": hetero_ring4,
}


def make_topology(name: str) -> PhasorNetwork:
    """Fresh instance of a named preset."""
    try:
        return TOPOLOGIES[name]()
    except KeyError:
        raise KeyError(
            f"unknown topology {name!r}; choose from {sorted(TOPOLOGIES)}"
        ) from None
