"""Quasi-static phasor model of an islanded AC microgrid.

The electrical layer is a single-phase-equivalent nodal model solved in the
complex phasor domain: bus voltages are line-to-neutral phasors, currents are
per-phase, powers are three-phase totals.  Generating units (DERs) are EMF
sources behind a configurable source impedance, loads are constant-impedance
shunts, and shunt faults attach at a virtual node that splits the faulted
line.  Asymmetric fault types are folded into this aggregate model through a
severity factor that scales the fault conductance (AG/BG/CG -> 1/3,
AB/LL/ABG -> 2/3, ABC/ABCG/LLLG -> 1), preserving the severity ordering that
drives every protection decision.

The model is deliberately quasi-static: a solve describes one steady operating
point, and the scenario engine re-solves only when the network actually
changes (fault on/off, breaker operation, load step, re-dispatch).
"""

from __future__ import annotations

import cmath
import heapq
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    EmptyBaselineWindow,
    IslandWithoutSource,
    SingularNetwork,
    SolveFailure,
    Unreachable,
)

SQRT3 = math.sqrt(3.0)

#: Default DER source impedance (ohms).  Stands in for the aggregate
#: inverter output stage; keep it identical across DERs so that relative
#: voltage sags track electrical distance to the fault.  Its magnitude must
#: stay below the smallest line-to-fault impedance of interest so the local
#: V*I product keeps rising with fault conductance all the way to bolted
#: faults (the product peaks at I = E / 2|Z_source|).
DEFAULT_SOURCE_IMPEDANCE = 0.02 + 0.15j

#: Aggregate shunt-conductance scale per fault type (single-phase-equivalent
#: severity factor).
FAULT_SEVERITY = {
    "AG": 1.0 / 3.0,
    "BG": 1.0 / 3.0,
    "CG": 1.0 / 3.0,
    "AB": 2.0 / 3.0,
    "LL": 2.0 / 3.0,
    "ABG": 2.0 / 3.0,
    "ABC": 1.0,
    "ABCG": 1.0,
    "LLLG": 1.0,
}

# Threshold below which a fault position is treated as sitting exactly on a
# bus (no virtual node inserted); avoids zero-impedance line segments.
_POSITION_EPS = 1e-9

_KCL_RTOL = 1e-9


class BusKind(str, Enum):
    DER = "der"
    LOAD = "load"
    JUNCTION = "junction"
    PCC = "pcc"


@dataclass
class Bus:
    """A network node.  ``nominal_voltage`` is line-to-line volts."""

    id: int
    kind: BusKind = BusKind.DER
    nominal_voltage: float = 415.0

    @property
    def v_ln(self) -> float:
        """Nominal line-to-neutral voltage magnitude."""
        return self.nominal_voltage / SQRT3


@dataclass
class Line:
    """A series branch with a breaker at each end.

    An open breaker at either end removes an unfaulted line from the
    admittance matrix; for a faulted line each breaker removes only its own
    segment, so two-ended isolation is required to fully de-energize the
    fault point.
    """

    id: int
    from_bus: int
    to_bus: int
    impedance: complex
    breaker_from: bool = True  # True = closed
    breaker_to: bool = True

    @property
    def closed(self) -> bool:
        return self.breaker_from and self.breaker_to


@dataclass
class DerUnit:
    """An inverter-based generating unit attached to one bus.

    ``inert_meta`` carries converter-stage data (V_dc, L_f, C_f) for
    provenance only; the quasi-static solve never reads it.
    """

    bus: int
    rated_power: float = 10e3
    droop_coeff: float = 1.0e-4
    i_max: float | None = None
    source_impedance: complex = DEFAULT_SOURCE_IMPEDANCE
    relay_enabled: bool = True
    inert_meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.droop_coeff <= 0:
            raise ValueError(f"DER at bus {self.bus}: droop_coeff must be > 0")
        if self.rated_power <= 0:
            raise ValueError(f"DER at bus {self.bus}: rated_power must be > 0")
        if self.i_max is not None and self.i_max <= 0:
            raise ValueError(f"DER at bus {self.bus}: i_max must be > 0")


@dataclass
class FaultSpec:
    """A shunt fault on ``line`` at fractional ``position`` from its from-bus."""

    line: int
    position: float
    fault_type: str
    resistance: float
    t_start: float
    t_end: float

    @property
    def severity(self) -> float:
        return FAULT_SEVERITY[self.fault_type]

    def validate(self) -> None:
        if self.fault_type not in FAULT_SEVERITY:
            raise ValueError(f"unknown fault_type {self.fault_type!r}")
        if not 0.0 <= self.position <= 1.0:
            raise ValueError("fault position must lie in [0, 1]")
        if self.resistance <= 0:
            raise ValueError("fault resistance must be > 0")
        if not self.t_start < self.t_end:
            raise ValueError("fault requires t_start < t_end")


@dataclass
class Measurement:
    """Local aggregate-RMS measurement at one DER."""

    t: float
    v_rms: float
    i_rms: float
    p: float


@dataclass
class Baseline:
    """Pre-disturbance steady-state operating point of one DER."""

    v0: float
    i0: float
    p0: float


@dataclass
class BusSolution:
    """One solved operating point.

    ``line_i_from``/``line_i_to`` hold the complex per-phase current at each
    end of every line (identical unless the line carries the active fault
    node, in which case the fault current splits them).  ``der_currents`` are
    the source currents delivered by each DER and ``der_powers`` the
    corresponding three-phase active powers at the DER bus.
    """

    t: float
    bus_voltages: np.ndarray  # complex, one entry per bus
    fault_voltage: complex | None
    line_i_from: np.ndarray  # complex, per line
    line_i_to: np.ndarray
    der_currents: np.ndarray  # complex, per DER
    der_powers: np.ndarray  # watts (3-phase), per DER
    der_injections: np.ndarray  # alias of der_powers kept for reporting
    kcl_residual: float = 0.0


# ======================================================================
# Pure helper operations
# ======================================================================


def share_power(ders: list[DerUnit], total_load: float) -> list[float]:
    """Steady-state droop allocation: P_i proportional to 1/m_p,i.

    The shares sum to ``total_load`` exactly (up to float rounding).
    """
    if not ders:
        raise IslandWithoutSource("cannot share power over an empty DER list")
    weights = [1.0 / d.droop_coeff for d in ders]
    wsum = sum(weights)
    return [total_load * w / wsum for w in weights]


def limit_current(i_ref: complex, i_max: float) -> complex:
    """Clamp a current phasor to ``i_max`` magnitude, preserving its angle."""
    if i_max <= 0:
        raise ValueError("i_max must be > 0")
    mag = abs(i_ref)
    if mag <= i_max or mag == 0.0:
        return i_ref
    return i_ref * (i_max / mag)


def capture_baseline(meas_window: list[Measurement]) -> Baseline:
    """Arithmetic mean of a steady pre-disturbance measurement window."""
    if not meas_window:
        raise EmptyBaselineWindow("baseline window is empty")
    n = len(meas_window)
    return Baseline(
        v0=sum(m.v_rms for m in meas_window) / n,
        i0=sum(m.i_rms for m in meas_window) / n,
        p0=sum(m.p for m in meas_window) / n,
    )


# ======================================================================
# Network
# ======================================================================


class PhasorNetwork:
    """Mutable network state plus the nodal solver.

    A network instance is confined to a single simulation thread; distinct
    instances share nothing and may run in parallel.
    """

    def __init__(
        self,
        buses: list[Bus],
        lines: list[Line],
        ders: list[DerUnit],
        loads: dict[int, float] | None = None,
    ):
        self.buses = list(buses)
        self.lines = list(lines)
        self.ders = list(ders)
        #: nominal active power (3-phase watts) drawn at each bus
        self.loads: dict[int, float] = dict(loads or {})
        #: multiplicative factor applied to each bus load (load-step events)
        self.load_scale: dict[int, float] = {b.id: 1.0 for b in self.buses}
        #: active shunt fault, or None
        self.fault: FaultSpec | None = None
        #: per-DER EMF phasors (line-to-neutral); set by dispatch
        self.emfs: np.ndarray = np.array(
            [self.buses[d.bus].v_ln for d in self.ders], dtype=complex
        )
        #: EMF scale applied to sources sitting on PCC buses (grid-sag events)
        self.pcc_sag_scale: float = 1.0
        self._validate()

    # -- construction helpers -------------------------------------------------

    def _bus(self, bus_id: int) -> Bus:
        return self.buses[bus_id]

    def _validate(self) -> None:
        ids = [b.id for b in self.buses]
        if ids != list(range(len(self.buses))):
            raise ValueError("bus ids must be unique and dense from 0")
        for ln in self.lines:
            if ln.from_bus == ln.to_bus:
                raise ValueError(f"line {ln.id}: from_bus == to_bus")
            if not (0 <= ln.from_bus < len(self.buses)):
                raise ValueError(f"line {ln.id}: bad from_bus")
            if not (0 <= ln.to_bus < len(self.buses)):
                raise ValueError(f"line {ln.id}: bad to_bus")
            if ln.impedance.real < 0:
                raise ValueError(f"line {ln.id}: R must be >= 0")
        if [ln.id for ln in self.lines] != list(range(len(self.lines))):
            raise ValueError("line ids must be unique and dense from 0")
        for d in self.ders:
            d.validate()
            if not (0 <= d.bus < len(self.buses)):
                raise ValueError("DER attached to unknown bus")
        zero_z = [d.bus for d in self.ders if d.source_impedance == 0]
        if len(zero_z) != len(set(zero_z)):
            raise ValueError("at most one zero-impedance source per bus")
        # every island of the as-built (all breakers closed) network needs a source
        for comp in self._components(respect_breakers=False):
            if not any(d.bus in comp for d in self.ders):
                raise IslandWithoutSource(f"island {sorted(comp)} has no DER")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def v_ln_nominal(self) -> float:
        return self.buses[0].v_ln

    def der_index_at_bus(self, bus_id: int) -> int | None:
        for i, d in enumerate(self.ders):
            if d.bus == bus_id:
                return i
        return None

    def lines_at_bus(self, bus_id: int) -> list[Line]:
        return [ln for ln in self.lines if bus_id in (ln.from_bus, ln.to_bus)]

    def total_nominal_load(self) -> float:
        return sum(p * self.load_scale[b] for b, p in self.loads.items())

    # -- fault node geometry ---------------------------------------------------

    def _fault_node(self) -> int | None:
        """Index of the virtual fault node (== n_bus) if a split is active."""
        if self.fault is None:
            return None
        if self.fault.position <= _POSITION_EPS or self.fault.position >= 1 - _POSITION_EPS:
            return None  # fault sits on a bus, no extra node
        return self.n_bus

    def _fault_bus_attachment(self) -> int | None:
        """Bus the fault shunt attaches to when position is 0 or 1."""
        if self.fault is None or self._fault_node() is not None:
            return None
        ln = self.lines[self.fault.line]
        return ln.from_bus if self.fault.position <= _POSITION_EPS else ln.to_bus

    def _active_branches(self) -> list[tuple[int, int, complex]]:
        """(node_a, node_b, impedance) for every energizable series element."""
        branches: list[tuple[int, int, complex]] = []
        fnode = self._fault_node()
        for ln in self.lines:
            if self.fault is not None and ln.id == self.fault.line and fnode is not None:
                pos = self.fault.position
                if ln.breaker_from:
                    branches.append((ln.from_bus, fnode, ln.impedance * pos))
                if ln.breaker_to:
                    branches.append((fnode, ln.to_bus, ln.impedance * (1 - pos)))
            else:
                if ln.closed:
                    branches.append((ln.from_bus, ln.to_bus, ln.impedance))
        return branches

    def _components(self, respect_breakers: bool = True) -> list[set[int]]:
        """Connected components over buses (ignores the fault node)."""
        adj: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for ln in self.lines:
            connect = ln.closed if respect_breakers else True
            if connect:
                adj[ln.from_bus].add(ln.to_bus)
                adj[ln.to_bus].add(ln.from_bus)
        seen: set[int] = set()
        comps = []
        for b in adj:
            if b in seen:
                continue
            stack, comp = [b], set()
            while stack:
                u = stack.pop()
                if u in comp:
                    continue
                comp.add(u)
                stack.extend(adj[u] - comp)
            seen |= comp
            comps.append(comp)
        return comps

    # -- admittance ------------------------------------------------------------

    def build_admittance(self) -> np.ndarray:
        """Structural nodal admittance: series branches plus the fault shunt.

        Load and source shunts are added separately inside the solve; this is
        the topology-facing matrix.  The matrix spans all buses plus the
        virtual fault node (last index) while a mid-line fault is active.
        """
        fnode = self._fault_node()
        n = self.n_bus + (1 if fnode is not None else 0)
        y = np.zeros((n, n), dtype=complex)
        for a, b, z in self._active_branches():
            if z == 0:
                raise SingularNetwork("zero-impedance branch")
            w = 1.0 / z
            y[a, a] += w
            y[b, b] += w
            y[a, b] -= w
            y[b, a] -= w
        if self.fault is not None:
            g = self.fault.severity / self.fault.resistance
            at = fnode if fnode is not None else self._fault_bus_attachment()
            y[at, at] += g
        return y

    # -- the solve ---------------------------------------------------------

    def _live_nodes(self, n_nodes: int) -> np.ndarray:
        """Boolean mask of nodes belonging to a component with a source."""
        adj: dict[int, set[int]] = {i: set() for i in range(n_nodes)}
        for a, b, _ in self._active_branches():
            adj[a].add(b)
            adj[b].add(a)
        live = np.zeros(n_nodes, dtype=bool)
        for d in self.ders:
            if live[d.bus]:
                continue
            stack = [d.bus]
            while stack:
                u = stack.pop()
                if live[u]:
                    continue
                live[u] = True
                stack.extend(v for v in adj[u] if not live[v])
        return live

    def _emf(self, di: int) -> complex:
        e = self.emfs[di]
        if self.buses[self.ders[di].bus].kind is BusKind.PCC:
            e = e * self.pcc_sag_scale
        return e

    def solve(self, t: float = 0.0) -> BusSolution:
        """Solve the nodal system for the current network state.

        Runs the current-limit iteration when any DER configures ``i_max``:
        a violating source is re-modeled as a fixed current source at the
        clamped phasor and the linear system is re-solved.
        """
        clamped: dict[int, complex] = {}
        for _ in range(len(self.ders) + 1):
            sol, i_der = self._solve_linear(t, clamped)
            violators = [
                di
                for di, d in enumerate(self.ders)
                if di not in clamped
                and d.i_max is not None
                and abs(i_der[di]) > d.i_max * (1 + 1e-12)
            ]
            if not violators:
                return sol
            for di in violators:
                clamped[di] = limit_current(i_der[di], self.ders[di].i_max)
        return sol

    def _solve_linear(
        self, t: float, clamped: dict[int, complex]
    ) -> tuple[BusSolution, np.ndarray]:
        fnode = self._fault_node()
        n = self.n_bus + (1 if fnode is not None else 0)
        y = self.build_admittance()
        j = np.zeros(n, dtype=complex)
        v_ln = self.v_ln_nominal

        # constant-impedance loads
        for b, p_nom in self.loads.items():
            p = p_nom * self.load_scale[b]
            if p > 0:
                y[b, b] += p / (3.0 * v_ln * v_ln)

        fixed: dict[int, complex] = {}
        for di, d in enumerate(self.ders):
            if di in clamped:
                j[d.bus] += clamped[di]
            elif d.source_impedance == 0:
                fixed[d.bus] = self._emf(di)
            else:
                ys = 1.0 / d.source_impedance
                y[d.bus, d.bus] += ys
                j[d.bus] += self._emf(di) * ys

        live = self._live_nodes(n)
        free = [i for i in range(n) if live[i] and i not in fixed]
        v = np.zeros(n, dtype=complex)
        for b, e in fixed.items():
            v[b] = e
        if free:
            yff = y[np.ix_(free, free)]
            rhs = j[free].copy()
            if fixed:
                fb = sorted(fixed)
                rhs -= y[np.ix_(free, fb)] @ v[fb]
            try:
                v[free] = np.linalg.solve(yff, rhs)
            except np.linalg.LinAlgError as exc:
                raise SingularNetwork(str(exc)) from exc

        # KCL residual over free live nodes
        if free:
            resid = np.abs(y[free] @ v - j[free])
            scale = max(np.max(np.abs(j)), np.max(np.abs(v)) * np.max(np.abs(y)), 1.0)
            kcl = float(np.max(resid) / scale)
            if kcl > _KCL_RTOL:
                raise SolveFailure(f"KCL residual {kcl:.3e} exceeds {_KCL_RTOL:.0e}")
        else:
            kcl = 0.0

        # DER source currents
        i_der = np.zeros(len(self.ders), dtype=complex)
        for di, d in enumerate(self.ders):
            if di in clamped:
                i_der[di] = clamped[di]
            elif d.source_impedance == 0:
                # pinned node: the source supplies whatever KCL requires
                i_der[di] = (y[d.bus] @ v) - j[d.bus]
            else:
                i_der[di] = (self._emf(di) - v[d.bus]) / d.source_impedance

        # per-line end currents
        nl = len(self.lines)
        i_from = np.zeros(nl, dtype=complex)
        i_to = np.zeros(nl, dtype=complex)
        for ln in self.lines:
            if self.fault is not None and ln.id == self.fault.line and fnode is not None:
                pos = self.fault.position
                if ln.breaker_from:
                    i_from[ln.id] = (v[ln.from_bus] - v[fnode]) / (ln.impedance * pos)
                if ln.breaker_to:
                    i_to[ln.id] = (v[fnode] - v[ln.to_bus]) / (ln.impedance * (1 - pos))
            elif ln.closed:
                cur = (v[ln.from_bus] - v[ln.to_bus]) / ln.impedance
                i_from[ln.id] = cur
                i_to[ln.id] = cur

        powers = 3.0 * np.real(v[[d.bus for d in self.ders]] * np.conj(i_der))
        sol = BusSolution(
            t=t,
            bus_voltages=v[: self.n_bus].copy(),
            fault_voltage=(complex(v[fnode]) if fnode is not None else None),
            line_i_from=i_from,
            line_i_to=i_to,
            der_currents=i_der,
            der_powers=powers,
            der_injections=powers,
            kcl_residual=kcl,
        )
        return sol, i_der

    # -- dispatch ----------------------------------------------------------

    def dispatch_targets(self) -> np.ndarray:
        """Droop share of the currently scaled load, per DER, per island."""
        targets = np.zeros(len(self.ders))
        for comp in self._components():
            idx = [di for di, d in enumerate(self.ders) if d.bus in comp]
            if not idx:
                continue
            load = sum(
                p * self.load_scale[b] for b, p in self.loads.items() if b in comp
            )
            for di, p in zip(idx, share_power([self.ders[i] for i in idx], load)):
                targets[di] = p
        return targets

    def dispatch_droop(self, max_iter: int = 30, rtol: float = 1e-9) -> None:
        """Set DER EMFs so delivered active powers match the droop shares.

        Per island, the unknowns are one common EMF magnitude scale plus the
        EMF angles of all units after the first (the island reference stays at
        angle zero): active power moves between units through angle
        differences, as droop control does, so re-dispatch barely disturbs
        voltage magnitudes.  Newton iteration with a finite-difference
        Jacobian; sources with zero source impedance are left untouched
        (their bus voltage is pinned).  Deterministic for fixed inputs.
        """
        targets = self.dispatch_targets()
        v_nom = self.v_ln_nominal
        for comp in self._components():
            adjustable = [
                di
                for di, d in enumerate(self.ders)
                if d.bus in comp and d.source_impedance != 0
            ]
            if not adjustable:
                continue
            tgt = targets[adjustable]
            scale = max(float(np.max(np.abs(tgt))), 1.0)
            n = len(adjustable)
            x = np.zeros(n)  # x[0] = magnitude scale - 1, x[1:] = angles

            def apply(vec: np.ndarray) -> np.ndarray:
                mag = v_nom * (1.0 + vec[0])
                for j, di in enumerate(adjustable):
                    theta = 0.0 if j == 0 else vec[j]
                    self.emfs[di] = mag * complex(math.cos(theta), math.sin(theta))
                sol = self.solve()
                return sol.der_powers[adjustable] - tgt

            converged = False
            for _ in range(max_iter):
                resid = apply(x)
                if float(np.max(np.abs(resid))) <= rtol * scale:
                    converged = True
                    break
                jac = np.zeros((n, n))
                for col in range(n):
                    step = 1e-7
                    xp = x.copy()
                    xp[col] += step
                    jac[:, col] = (apply(xp) - resid) / step
                try:
                    dx = np.linalg.solve(jac, -resid)
                except np.linalg.LinAlgError as exc:
                    raise SolveFailure(f"droop dispatch Jacobian singular: {exc}") from exc
                x = x + np.clip(dx, -0.5, 0.5)
            if not converged:
                resid = apply(x)
                if float(np.max(np.abs(resid))) > 1e-6 * scale:
                    raise SolveFailure(
                        "droop dispatch did not converge "
                        f"(max residual {np.max(np.abs(resid)):.3e} W)"
                    )

    # -- measurement --------------------------------------------------------

    def measure(self, der_index: int, sol: BusSolution) -> Measurement:
        """Aggregate local three-phase RMS measurement for one DER."""
        d = self.ders[der_index]
        return Measurement(
            t=sol.t,
            v_rms=float(abs(sol.bus_voltages[d.bus])),
            i_rms=float(abs(sol.der_currents[der_index])),
            p=float(sol.der_powers[der_index]),
        )

    def line_end_current(self, sol: BusSolution, line_id: int, bus_id: int) -> float:
        """|I| of the line segment seen at ``bus_id``'s end of ``line_id``."""
        ln = self.lines[line_id]
        if bus_id == ln.from_bus:
            return float(abs(sol.line_i_from[line_id]))
        if bus_id == ln.to_bus:
            return float(abs(sol.line_i_to[line_id]))
        raise ValueError(f"bus {bus_id} is not an end of line {line_id}")

    def power_balance(self, sol: BusSolution) -> tuple[float, float, float]:
        """(generation, load, loss) three-phase watts for a solution."""
        gen = float(np.sum(sol.der_powers))
        v_ln = self.v_ln_nominal
        load = 0.0
        for b, p_nom in self.loads.items():
            g = p_nom * self.load_scale[b] / (3.0 * v_ln * v_ln)
            load += 3.0 * abs(sol.bus_voltages[b]) ** 2 * g
        loss = 0.0
        fnode_v = sol.fault_voltage
        for ln in self.lines:
            if self.fault is not None and ln.id == self.fault.line and fnode_v is not None:
                pos = self.fault.position
                loss += 3.0 * abs(sol.line_i_from[ln.id]) ** 2 * (ln.impedance * pos).real
                loss += 3.0 * abs(sol.line_i_to[ln.id]) ** 2 * (ln.impedance * (1 - pos)).real
            else:
                loss += 3.0 * abs(sol.line_i_from[ln.id]) ** 2 * ln.impedance.real
        if self.fault is not None:
            g = self.fault.severity / self.fault.resistance
            if fnode_v is not None:
                vf = abs(fnode_v)
            else:
                vf = abs(sol.bus_voltages[self._fault_bus_attachment()])
            loss += 3.0 * vf * vf * g
        return gen, load, loss


# ======================================================================
# Module-level operation wrappers
# ======================================================================


def build_admittance(network: PhasorNetwork) -> np.ndarray:
    """Structural admittance of the network in its current breaker/fault state."""
    if network.n_bus < 1:
        raise ValueError("network must contain at least one bus")
    return network.build_admittance()


def solve_network(network: PhasorNetwork, t: float = 0.0) -> BusSolution:
    """Solve the network at time ``t`` (``t`` only stamps the solution)."""
    return network.solve(t)


def measure(network: PhasorNetwork, der_index: int, sol: BusSolution) -> Measurement:
    return network.measure(der_index, sol)


def electrical_distance(
    network: PhasorNetwork, der: DerUnit, fault: FaultSpec
) -> float:
    """Magnitude of the minimum-|Z| series path from a DER bus to the fault.

    Shortest path over |Z| edge weights with the fault node splitting the
    faulted line at its position; only closed breakers conduct.  This is the
    ground-truth "nearest DER" oracle for spatial-selectivity scoring.
    """
    fault.validate()
    ln = network.lines[fault.line]
    n = network.n_bus
    fnode = n  # always model the fault point as its own node here
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n + 1)}

    def add(a: int, b: int, w: float) -> None:
        adj[a].append((b, w))
        adj[b].append((a, w))

    for other in network.lines:
        if other.id == fault.line:
            continue
        if other.closed:
            add(other.from_bus, other.to_bus, abs(other.impedance))
    if ln.breaker_from:
        add(ln.from_bus, fnode, abs(ln.impedance) * fault.position)
    if ln.breaker_to:
        add(fnode, ln.to_bus, abs(ln.impedance) * (1 - fault.position))

    dist = {der.bus: 0.0}
    heap = [(0.0, der.bus)]
    while heap:
        d0, u = heapq.heappop(heap)
        if d0 > dist.get(u, math.inf):
            continue
        if u == fnode:
            return d0
        for v, w in adj[u]:
            nd = d0 + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    raise Unreachable(f"no closed path from bus {der.bus} to the fault")


def nearest_ders(network: PhasorNetwork, fault: FaultSpec, atol: float = 1e-9):
    """(indices of minimum-distance DERs, that minimum distance).

    More than one index means the fault is electrically equidistant and the
    selectivity oracle treats the case as having no unique nearest DER.
    """
    dists = [electrical_distance(network, d, fault) for d in network.ders]
    dmin = min(dists)
    idx = [i for i, x in enumerate(dists) if x <= dmin + atol]
    return idx, dmin
