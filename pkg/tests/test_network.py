"""Grid-core tests: admittance assembly, nodal solve, droop sharing,
current limiting, measurement extraction, and the electrical-distance oracle.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from spikerelay.errors import (
    EmptyBaselineWindow,
    IslandWithoutSource,
    Unreachable,
)
from spikerelay.network import (
    Bus,
    BusKind,
    DerUnit,
    FaultSpec,
    Line,
    Measurement,
    PhasorNetwork,
    build_admittance,
    capture_baseline,
    electrical_distance,
    limit_current,
    nearest_ders,
    share_power,
    solve_network,
)
from spikerelay.topologies import TOPOLOGIES, make_topology, ring3

V_LN = 415.0 / math.sqrt(3.0)


def two_bus(load_w: float | None = None, stiff: bool = True) -> PhasorNetwork:
    """Bus0 DER (ideal source), 1 ohm line, optional load at bus1."""
    loads = {1: load_w} if load_w else {}
    return PhasorNetwork(
        buses=[Bus(0), Bus(1, BusKind.LOAD)],
        lines=[Line(0, 0, 1, 1.0 + 0j)],
        ders=[DerUnit(bus=0, source_impedance=0.0 if stiff else 0.1 + 0.8j)],
        loads=loads,
    )


# ======================================================================
# build_admittance
# ======================================================================


def test_admittance_single_branch_identity():
    y = build_admittance(two_bus())
    assert np.allclose(y, np.array([[1.0, -1.0], [-1.0, 1.0]], dtype=complex))


def test_admittance_open_breaker_removes_line():
    net = two_bus()
    net.lines[0].breaker_from = False
    assert np.allclose(build_admittance(net), np.zeros((2, 2)))
    net.lines[0].breaker_from = True
    net.lines[0].breaker_to = False
    assert np.allclose(build_admittance(net), np.zeros((2, 2)))


def test_admittance_ring3_offdiagonals_match_line_data():
    net = ring3()
    y = build_admittance(net)
    assert np.isclose(y[0, 1], -1.0 / (0.7 + 1.884j))
    assert np.isclose(y[0, 2], -1.0 / (0.4 + 6.154j))
    assert np.isclose(y[1, 2], -1.0 / (1.4 + 3.14j))


def test_admittance_fault_adds_node_and_shunt():
    net = ring3()
    net.fault = FaultSpec(0, 0.5, "ABCG", 0.01, 1.0, 2.0)
    y = build_admittance(net)
    assert y.shape == (4, 4)
    # fault node couples only to the split line's ends
    assert y[3, 2] == 0
    za = (0.7 + 1.884j) * 0.5
    assert np.isclose(y[3, 0], -1.0 / za)
    # diagonal carries both segments plus the severity-scaled shunt
    assert np.isclose(y[3, 3], 2.0 / za + 1.0 / 0.01)


@pytest.mark.parametrize("ftype,sev", [("AG", 1 / 3), ("ABG", 2 / 3), ("ABCG", 1.0)])
def test_admittance_fault_severity_scaling(ftype, sev):
    net = ring3()
    net.fault = FaultSpec(0, 0.0, ftype, 2.0, 1.0, 2.0)  # position 0 -> at bus 0
    y = build_admittance(net)
    base = build_admittance(ring3())
    assert np.isclose(y[0, 0] - base[0, 0], sev / 2.0)


def test_admittance_symmetry_under_random_states():
    rng = np.random.default_rng(7)
    for _ in range(25):
        name = list(TOPOLOGIES)[rng.integers(len(TOPOLOGIES))]
        net = make_topology(name)
        for ln in net.lines:
            ln.breaker_from = bool(rng.random() > 0.2)
            ln.breaker_to = bool(rng.random() > 0.2)
        if rng.random() > 0.3:
            net.fault = FaultSpec(
                line=int(rng.integers(len(net.lines))),
                position=float(rng.random()),
                fault_type=["AG", "ABG", "ABCG"][rng.integers(3)],
                resistance=float(10 ** rng.uniform(-3, 0.5)),
                t_start=1.0,
                t_end=2.0,
            )
        y = net.build_admittance()
        assert np.array_equal(y, y.T)


# ======================================================================
# solve_network
# ======================================================================


def test_solve_two_bus_divider_hand_oracle():
    # E = 239.6 V L-N behind 1 ohm feeding a 10 ohm resistive load:
    # I = E/11, V_load = 10*E/11 by hand nodal analysis.
    r_load = 10.0
    p_load = 3.0 * V_LN**2 / r_load
    net = two_bus(load_w=p_load)
    sol = solve_network(net, t=0.0)
    assert np.isclose(abs(sol.der_currents[0]), V_LN / 11.0, rtol=1e-12)
    assert np.isclose(abs(sol.bus_voltages[1]), 10.0 * V_LN / 11.0, rtol=1e-12)
    # and the published rounded figures
    assert abs(sol.der_currents[0]) == pytest.approx(21.78, abs=0.01)
    assert abs(sol.bus_voltages[1]) == pytest.approx(217.8, abs=0.05)


def test_solve_no_load_equilibrium():
    for name in TOPOLOGIES:
        net = make_topology(name)
        net.loads = {}
        net.load_scale = {b.id: 1.0 for b in net.buses}
        net.dispatch_droop()
        sol = net.solve()
        assert np.allclose(np.abs(sol.bus_voltages), V_LN, rtol=1e-9)
        assert np.allclose(np.abs(sol.line_i_from), 0.0, atol=1e-9)


def test_solve_solid_fault_collapses_bus_voltage():
    net = ring3()
    net.dispatch_droop()
    net.fault = FaultSpec(0, 0.0, "ABCG", 0.001, 1.0, 2.0)  # at DER1's bus
    sol = net.solve()
    assert abs(sol.bus_voltages[0]) < 0.01 * V_LN


def test_kirchhoff_consistency_and_power_balance():
    rng = np.random.default_rng(11)
    for name in TOPOLOGIES:
        net = make_topology(name)
        net.dispatch_droop()
        for _ in range(4):
            net.fault = None
            if rng.random() > 0.4:
                net.fault = FaultSpec(
                    line=int(rng.integers(len(net.lines))),
                    position=float(rng.choice([0.0, 0.3, 0.5, 0.9, 1.0])),
                    fault_type=["AG", "ABG", "ABCG"][rng.integers(3)],
                    resistance=float(10 ** rng.uniform(-3, 0.5)),
                    t_start=1.0,
                    t_end=2.0,
                )
            sol = net.solve()
            assert sol.kcl_residual <= 1e-9
            gen, load, loss = net.power_balance(sol)
            assert gen == pytest.approx(load + loss, rel=1e-6)


def test_breaker_idempotence_fault_isolated_by_both_ends():
    volts = []
    for r_fault in (0.001, 0.1, 3.0):
        net = ring3()
        net.dispatch_droop()
        net.fault = FaultSpec(0, 0.4, "ABCG", r_fault, 1.0, 2.0)
        net.lines[0].breaker_from = False
        net.lines[0].breaker_to = False
        volts.append(net.solve().bus_voltages.copy())
    assert np.allclose(volts[0], volts[1], rtol=1e-12)
    assert np.allclose(volts[0], volts[2], rtol=1e-12)


def test_dead_island_deenergized():
    net = make_topology("mesh4")
    net.dispatch_droop()
    # line 2 is bus0-bus3; bus3 has no DER
    net.lines[2].breaker_from = False
    sol = net.solve()
    assert abs(sol.bus_voltages[3]) == 0.0


def test_island_without_source_rejected_at_build():
    with pytest.raises(IslandWithoutSource):
        PhasorNetwork(
            buses=[Bus(0), Bus(1, BusKind.LOAD), Bus(2, BusKind.LOAD)],
            lines=[Line(0, 0, 1, 1 + 1j)],
            ders=[DerUnit(bus=0)],
            loads={},
        )


# ======================================================================
# share_power
# ======================================================================


def test_share_power_inverse_droop():
    ders = [DerUnit(bus=0, droop_coeff=1.0e-4), DerUnit(bus=1, droop_coeff=0.9e-4)]
    shares = share_power(ders, 19e3)
    assert shares[0] == pytest.approx(9e3, rel=1e-12)
    assert shares[1] == pytest.approx(10e3, rel=1e-12)


def test_share_power_symmetry_and_degenerate():
    ders = [DerUnit(bus=i, droop_coeff=1e-4) for i in range(3)]
    assert share_power(ders, 9e3) == pytest.approx([3e3, 3e3, 3e3])
    assert share_power([DerUnit(bus=0)], 5e3) == [5e3]


def test_share_power_conservation_property():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 7))
        ders = [
            DerUnit(bus=i, droop_coeff=float(10 ** rng.uniform(-5, -3)))
            for i in range(n)
        ]
        total = float(rng.uniform(0, 50e3))
        shares = share_power(ders, total)
        assert sum(shares) == pytest.approx(total, rel=1e-12, abs=1e-9)


def test_share_power_empty_raises():
    with pytest.raises(IslandWithoutSource):
        share_power([], 1e3)


# ======================================================================
# limit_current
# ======================================================================


def test_limit_current_clamp_passthrough_zero():
    assert abs(limit_current(3.5 + 0j, 2.0)) == pytest.approx(2.0)
    assert limit_current(1.2 + 0j, 2.0) == 1.2 + 0j
    assert limit_current(0j, 2.0) == 0j


def test_limit_current_preserves_phase_never_increases():
    rng = np.random.default_rng(5)
    for _ in range(100):
        i = complex(rng.normal(), rng.normal()) * 10 ** rng.uniform(-1, 2)
        imax = float(10 ** rng.uniform(-1, 2))
        out = limit_current(i, imax)
        assert abs(out) <= max(abs(i), imax) + 1e-12
        assert abs(out) <= abs(i) + 1e-12
        if abs(i) > 0:
            # same angle
            assert np.isclose(np.angle(out), np.angle(i))
        if abs(i) <= imax:
            assert out == i


def test_solve_with_current_limit_clamps_at_imax():
    net = ring3()
    for d in net.ders:
        d.i_max = 30.0
    net.dispatch_droop()
    net.fault = FaultSpec(0, 0.1, "ABCG", 0.001, 1.0, 2.0)
    sol = net.solve()
    # every DER near the solid fault saturates exactly at the ceiling
    assert abs(sol.der_currents[0]) == pytest.approx(30.0, rel=1e-9)
    assert np.all(np.abs(sol.der_currents) <= 30.0 * (1 + 1e-9))
    # voltage still collapses near the fault
    assert abs(sol.bus_voltages[0]) < 0.7 * V_LN


# ======================================================================
# measure / capture_baseline
# ======================================================================


def test_measure_steady_state_nominal_and_droop_share():
    net = ring3()
    net.dispatch_droop()
    sol = net.solve(t=0.25)
    for di in range(3):
        m = net.measure(di, sol)
        assert m.t == 0.25
        assert m.v_rms == pytest.approx(V_LN, rel=2e-3)
        assert m.p == pytest.approx(3000.0, rel=1e-6)


def test_measure_isolated_der_zero_current():
    net = PhasorNetwork(
        buses=[Bus(0), Bus(1, BusKind.LOAD)],
        lines=[Line(0, 0, 1, 1 + 1j)],
        ders=[DerUnit(bus=0)],
        loads={1: 2000.0},
    )
    net.lines[0].breaker_to = False
    sol = net.solve()
    assert net.measure(0, sol).i_rms == pytest.approx(0.0, abs=1e-12)


def test_capture_baseline_mean_and_empty():
    mk = lambda v, i, p: Measurement(0.0, v, i, p)
    b = capture_baseline([mk(230, 15, 9e3)])
    assert (b.v0, b.i0, b.p0) == (230, 15, 9e3)
    b = capture_baseline([mk(229, 1, 1), mk(231, 3, 3)])
    assert b.v0 == pytest.approx(230.0)
    assert b.i0 == pytest.approx(2.0)
    with pytest.raises(EmptyBaselineWindow):
        capture_baseline([])


# ======================================================================
# electrical_distance
# ======================================================================


def _brute_force_distance(net: PhasorNetwork, der: DerUnit, fault: FaultSpec) -> float:
    """Enumerate all simple paths from the DER bus to the fault node."""
    ln = net.lines[fault.line]
    fnode = net.n_bus
    edges: list[tuple[int, int, float]] = []
    for other in net.lines:
        if other.id == fault.line:
            continue
        if other.closed:
            edges.append((other.from_bus, other.to_bus, abs(other.impedance)))
    if ln.breaker_from:
        edges.append((ln.from_bus, fnode, abs(ln.impedance) * fault.position))
    if ln.breaker_to:
        edges.append((fnode, ln.to_bus, abs(ln.impedance) * (1 - fault.position)))
    best = math.inf

    def walk(u: int, seen: frozenset, acc: float) -> None:
        nonlocal best
        if u == fnode:
            best = min(best, acc)
            return
        for a, b, w in edges:
            for x, y in ((a, b), (b, a)):
                if x == u and y not in seen:
                    walk(y, seen | {y}, acc + w)

    walk(der.bus, frozenset([der.bus]), 0.0)
    return best


def test_distance_zero_at_incident_bus():
    net = ring3()
    f = FaultSpec(0, 0.0, "AG", 1.0, 1.0, 2.0)
    assert electrical_distance(net, net.ders[0], f) == pytest.approx(0.0, abs=1e-12)


def test_distance_ring3_midpoint_equidistant_pair():
    net = ring3()
    f = FaultSpec(0, 0.5, "AG", 1.0, 1.0, 2.0)
    d1 = electrical_distance(net, net.ders[0], f)
    d2 = electrical_distance(net, net.ders[1], f)
    d3 = electrical_distance(net, net.ders[2], f)
    assert d1 == pytest.approx(abs(0.35 + 0.942j), rel=1e-12)
    assert d2 == pytest.approx(d1, rel=1e-12)
    assert d3 > d1
    idx, _ = nearest_ders(net, f)
    assert idx == [0, 1]


def test_distance_matches_brute_force_on_all_presets():
    rng = np.random.default_rng(19)
    for name in TOPOLOGIES:
        net = make_topology(name)
        for _ in range(12):
            f = FaultSpec(
                line=int(rng.integers(len(net.lines))),
                position=float(rng.random()),
                fault_type="ABCG",
                resistance=1.0,
                t_start=1.0,
                t_end=2.0,
            )
            for der in net.ders:
                assert electrical_distance(net, der, f) == pytest.approx(
                    _brute_force_distance(net, der, f), rel=1e-12
                )


def test_distance_mesh4_uses_min_over_redundant_paths():
    net = make_topology("mesh4")
    # fault near bus2 on line (1,2): DER1 can reach it directly or via bus0
    f = FaultSpec(3, 0.9, "ABCG", 1.0, 1.0, 2.0)
    d = electrical_distance(net, net.ders[0], f)
    direct = abs(net.lines[3].impedance) * 0.9  # via bus1
    around = abs(net.lines[1].impedance) + abs(net.lines[3].impedance) * 0.1
    assert d == pytest.approx(min(abs(net.lines[0].impedance) + direct, around), rel=1e-12)


def test_distance_unreachable():
    net = ring3()
    for ln in net.lines:
        ln.breaker_from = False
    f = FaultSpec(0, 0.5, "AG", 1.0, 1.0, 2.0)
    with pytest.raises(Unreachable):
        electrical_distance(net, net.ders[2], f)


def test_fault_spec_validation():
    with pytest.raises(ValueError):
        FaultSpec(0, 1.2, "AG", 1.0, 1.0, 2.0).validate()
    with pytest.raises(ValueError):
        FaultSpec(0, 0.5, "AG", -1.0, 1.0, 2.0).validate()
    with pytest.raises(ValueError):
        FaultSpec(0, 0.5, "AG", 1.0, 2.0, 1.0).validate()
    with pytest.raises(ValueError):
        FaultSpec(0, 0.5, "XX", 1.0, 1.0, 2.0).validate()


# ======================================================================
# preset fidelity
# ======================================================================


def test_preset_line_parameters_exact():
    net = ring3()
    zs = {(ln.from_bus, ln.to_bus): ln.impedance for ln in net.lines}
    assert zs == {(0, 1): 0.7 + 1.884j, (0, 2): 0.4 + 6.154j, (1, 2): 1.4 + 3.14j}
    assert all(b.nominal_voltage == 415.0 for b in net.buses)
    assert all(d.rated_power == 10e3 for d in net.ders)

    het = make_topology("hetero-ring3")
    assert [d.droop_coeff for d in het.ders] == [1.0e-4, 0.9e-4, 1.25e-4]
    assert het.lines[0].impedance == 0.5 + 1.553j

    h4 = make_topology("hetero-ring4")
    assert [d.droop_coeff for d in h4.ders] == [1.0e-4, 0.9e-4, 1.25e-4, 1.5e-4]
    zs4 = {(ln.from_bus, ln.to_bus): ln.impedance for ln in h4.lines}
    assert zs4[(0, 1)] == 0.75 + 1.456j
    assert zs4[(2, 3)] == 0.86 + 2.46j

    m4 = make_topology("mesh4")
    zs_m = {(ln.from_bus, ln.to_bus): ln.impedance for ln in m4.lines}
    assert zs_m[(0, 3)] == 0.1 + 6.154j
    assert len(m4.ders) == 3 and m4.buses[3].kind is BusKind.LOAD
