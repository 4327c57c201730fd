"""Two-rate scenario engine.

The electrical layer is quasi-static: between network-changing events (fault
on/off, load step, sag, breaker operation, re-dispatch) the solved phasor
state is constant, so the engine re-solves only at event boundaries and holds
the raw measurements zero-order in between (they change only at multiples of
``dt_network`` because every event is snapped to the network grid).  The
relay layer advances every ``dt_neuron`` inside a compiled kernel: a
first-order measurement filter (RMS-extraction lag), deviation/index
computation, inverse-time input-spike encoding, adaptive threshold, Euler
membrane update, and output-spike detection with the single-fire latch.

Everything is integer-step based and free of randomness, so a scenario's
trace is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import (
    FaultEvent,
    GridSagEvent,
    LoadStepEvent,
    ScenarioConfig,
)
from .metrics import CaseResult, detect_fault_onset
from .network import PhasorNetwork, electrical_distance
from .neuron import NeuronParams
from .protection import (
    BreakerEvent,
    SpikeEvent,
    TripDecision,
    aggregate_lines,
    per_line_disturbances,
    select_faulted_line,
    trip_breakers,
)

_EVENT_BUF = 1 << 18  # per-kernel-call spike buffer; the kernel yields when full


def _lif_kernel_py(
    s0, s1, dt, af,
    alpha, beta, gamma, kk, cm, rm, v0, eta, lam, dmin, gain,
    drive_mode, latch, line_agg,
    raw_v, raw_i, raw_p, raw_il,
    ch_ptr, ch_line,
    fv, fi, fp, fil, bv, bi, bp, bil,
    vm, fired, last_in, n_in, last_in_ch, n_in_ch,
    stop_on_out,
    in_t, in_der, in_line, out_t, out_der, counts,
    decim, tr_s, tr_vm, tr_vth, tr_d, tr_rows,
):
    n = vm.shape[0]
    nch = fil.shape[0]
    s = s0
    while s < s1:
        # yield to the caller before buffers can overflow
        if (
            counts[0] + nch + n > in_t.shape[0]
            or counts[1] + n > out_t.shape[0]
            or tr_rows[0] + 1 > tr_s.shape[0]
        ):
            return s, 2
        for i in range(n):
            fv[i] += af * (raw_v[i] - fv[i])
            fi[i] += af * (raw_i[i] - fi[i])
            fp[i] += af * (raw_p[i] - fp[i])
        for c in range(nch):
            fil[c] += af * (raw_il[c] - fil[c])

        record = s % decim == 0
        if record:
            row = tr_rows[0]
            tr_s[row] = s
            tr_rows[0] = row + 1
        out_this_step = False
        for i in range(n):
            dv = abs(fv[i] - bv[i])
            di = abs(fi[i] - bi[i])
            dp = abs(fp[i] - bp[i])
            d_der = alpha[i] * dv + beta[i] * di + gamma[i] * dp
            if d_der < dmin[i]:
                d_der = 0.0
            sigma = dv + di + dp
            vth = v0[i] * math.exp(-eta[i] * sigma) + lam[i] * vm[i]

            drive = 0.0
            if line_agg == 0:
                spike_in = False
                if d_der > 0.0:
                    ts = 1.0 / (1.0 + kk[i] * d_der)
                    if (s - last_in[i]) * dt >= ts:
                        spike_in = True
                        last_in[i] = s
                        n_in[i] += 1
                        in_t[counts[0]] = s
                        in_der[counts[0]] = i
                        in_line[counts[0]] = -1
                        counts[0] += 1
                if drive_mode == 0:  # gated
                    drive = gain[i] * d_der if spike_in else 0.0
                elif drive_mode == 1:  # continuous
                    drive = gain[i] * d_der
                else:  # indicator
                    drive = gain[i] if spike_in else 0.0
            else:
                deg = ch_ptr[i + 1] - ch_ptr[i]
                shared = (alpha[i] * dv + gamma[i] * dp) / deg
                for c in range(ch_ptr[i], ch_ptr[i + 1]):
                    dc = shared + beta[i] * abs(fil[c] - bil[c])
                    if dc < dmin[i]:
                        dc = 0.0
                    if dc > 0.0:
                        ts = 1.0 / (1.0 + kk[i] * dc)
                        if (s - last_in_ch[c]) * dt >= ts:
                            last_in_ch[c] = s
                            n_in_ch[c] += 1
                            n_in[i] += 1
                            in_t[counts[0]] = s
                            in_der[counts[0]] = i
                            in_line[counts[0]] = ch_line[c]
                            counts[0] += 1
                            if drive_mode == 0:
                                drive += gain[i] * dc
                            elif drive_mode == 2:
                                drive += gain[i]
                    if drive_mode == 1:
                        drive += gain[i] * dc

            v = vm[i] + dt * (-vm[i] / rm[i] + drive) / cm[i]
            if v < 0.0:
                v = 0.0
            if v >= vth and (fired[i] == 0 or latch == 0):
                out_t[counts[1]] = s
                out_der[counts[1]] = i
                counts[1] += 1
                fired[i] = 1
                v = 0.0
                out_this_step = True
            vm[i] = v
            if record:
                row = tr_rows[0] - 1
                tr_vm[row, i] = v
                tr_vth[row, i] = vth
                tr_d[row, i] = d_der
        if stop_on_out == 1 and out_this_step:
            return s + 1, 1
        s += 1
    return s1, 0


try:  # compiled kernel, with the pure-Python build kept as reference/fallback
    from numba import njit

    _lif_kernel = njit(cache=True)(_lif_kernel_py)
except ImportError:  # pragma: no cover
    _lif_kernel = _lif_kernel_py


@dataclass
class Segment:
    """One piecewise-constant electrical state."""

    step: int  # first neuron step this state holds for
    bus_v: np.ndarray  # complex bus voltages
    line_i_from: np.ndarray
    line_i_to: np.ndarray
    der_i: np.ndarray  # complex DER currents
    der_p: np.ndarray
    label: str = ""


@dataclass
class TraceBundle:
    """Everything one scenario run produces."""

    config: ScenarioConfig
    spike_log: list[SpikeEvent]
    breaker_log: list[BreakerEvent]
    trip_decisions: list[TripDecision]
    membrane_trace: np.ndarray  # columns: t_s, der_id, v_m, v_th, D
    segments: list[Segment]
    case_result: CaseResult
    n_bus: int = 0
    n_lines: int = 0

    def electrical_rows(self):
        """Decimated (t, |V| per bus, |I| per line) rows from the segments."""
        decim = self.config.sim.trace_decimation
        dt = self.config.sim.dt_neuron
        horizon = int(round(self.config.sim.duration_s / dt))
        seg_idx = 0
        for s in range(0, horizon, decim):
            while seg_idx + 1 < len(self.segments) and self.segments[seg_idx + 1].step <= s:
                seg_idx += 1
            seg = self.segments[seg_idx]
            yield (
                s * dt,
                np.abs(seg.bus_v),
                np.abs(seg.line_i_from),
            )


class ScenarioEngine:
    """Runs one scenario deterministically."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.net: PhasorNetwork = cfg.build_network()
        self.params: list[NeuronParams] = cfg.neuron_params(self.net)
        sim = cfg.sim
        self.dt = sim.dt_neuron
        self.ratio = int(round(sim.dt_network / sim.dt_neuron))
        self.horizon = self._net_step(sim.duration_s)
        self.n = len(self.net.ders)

        # channel layout: per-DER incident lines, sorted by line id
        ptr = [0]
        ch_line: list[int] = []
        self.ch_slices: list[slice] = []
        for d in self.net.ders:
            incident = sorted(ln.id for ln in self.net.lines_at_bus(d.bus))
            ch_line.extend(incident)
            ptr.append(len(ch_line))
            self.ch_slices.append(slice(ptr[-2], ptr[-1]))
        self.ch_ptr = np.array(ptr, dtype=np.int64)
        self.ch_line = np.array(ch_line, dtype=np.int64)

        def arr(attr):
            return np.array([getattr(p, attr) for p in self.params], dtype=np.float64)

        self.p_alpha, self.p_beta, self.p_gamma = arr("alpha"), arr("beta"), arr("gamma")
        self.p_k, self.p_cm, self.p_rm = arr("k"), arr("c_m"), arr("r_m")
        self.p_v0, self.p_eta, self.p_lam = arr("v0"), arr("eta"), arr("lam")
        self.p_dmin, self.p_gain = arr("d_min"), arr("input_gain")
        for di, d in enumerate(self.net.ders):
            if not d.relay_enabled:
                self.p_dmin[di] = math.inf  # silent: carries no relay

        tau = sim.measurement_tau_s
        self.af = 1.0 if tau <= 0 else 1.0 - math.exp(-self.dt / tau)
        self.drive_mode = {"gated": 0, "continuous": 1, "indicator": 2}[sim.membrane_drive]
        self.latch = 1 if sim.latch_mode == "on" else 0
        self.line_agg = 0 if sim.line_aggregation == "der" else 1

    # -- helpers ---------------------------------------------------------

    def _net_step(self, t: float) -> int:
        """Snap a time up to the network grid, in neuron steps."""
        steps_net = math.ceil(round(t / self.cfg.sim.dt_network, 9))
        return int(steps_net) * self.ratio

    def _solve_raw(self, label: str, step: int) -> Segment:
        sol = self.net.solve(t=step * self.dt)
        raw_il = np.zeros(len(self.ch_line))
        for di, d in enumerate(self.net.ders):
            for c in range(self.ch_ptr[di], self.ch_ptr[di + 1]):
                raw_il[c] = self.net.line_end_current(sol, int(self.ch_line[c]), d.bus)
        seg = Segment(
            step=step,
            bus_v=sol.bus_voltages.copy(),
            line_i_from=sol.line_i_from.copy(),
            line_i_to=sol.line_i_to.copy(),
            der_i=sol.der_currents.copy(),
            der_p=sol.der_powers.copy(),
            label=label,
        )
        self._raw_v = np.abs(sol.bus_voltages[[d.bus for d in self.net.ders]])
        self._raw_i = np.abs(sol.der_currents)
        # Relay power channel: three-phase RMS product V(t)*I(t), the form the
        # deviation Delta-P = V*I - V0*I0 is defined on, expressed in kW.
        # Active power is non-monotone in fault conductance (it collapses for
        # bolted faults), which would invert the severity/latency ordering;
        # and in raw watts the unweighted threshold exponent collapses on
        # benign kW-scale load shifts.
        self._raw_p = 3.0e-3 * self._raw_v * self._raw_i
        self._raw_il = raw_il
        return seg

    # -- the run ---------------------------------------------------------

    def run(self) -> TraceBundle:
        cfg, sim, net = self.cfg, self.cfg.sim, self.net
        n, dt = self.n, self.dt

        # timeline: (step, order, kind, payload); order keeps application stable
        timeline: list[tuple[int, int, str, object]] = []
        order = 0
        for ev in cfg.events:
            s_on, s_off = self._net_step(ev.t_start), self._net_step(ev.t_end)
            if isinstance(ev, FaultEvent):
                timeline.append((s_on, order, "fault_on", ev.spec))
                timeline.append((s_off, order + 1, "fault_off", ev.spec))
            elif isinstance(ev, LoadStepEvent):
                timeline.append((s_on, order, "load_on", ev))
                timeline.append((s_off, order + 1, "load_off", ev))
            elif isinstance(ev, GridSagEvent):
                timeline.append((s_on, order, "sag_on", ev))
                timeline.append((s_off, order + 1, "sag_off", ev))
            order += 2

        net.dispatch_droop()
        segments = [self._solve_raw("initial", 0)]

        # relay state
        fv = self._raw_v.copy()
        fi = self._raw_i.copy()
        fp = self._raw_p.copy()
        fil = self._raw_il.copy()
        bv, bi, bp, bil = fv.copy(), fi.copy(), fp.copy(), fil.copy()
        vm = np.zeros(n)
        fired = np.zeros(n, dtype=np.int64)
        last_in = np.zeros(n, dtype=np.int64)
        n_in = np.zeros(n, dtype=np.int64)
        last_in_ch = np.zeros(len(self.ch_line), dtype=np.int64)
        n_in_ch = np.zeros(len(self.ch_line), dtype=np.int64)

        baseline_hist: list[tuple[int, np.ndarray]] = [(0, bi.copy())]

        spike_log: list[SpikeEvent] = []
        breaker_log: list[BreakerEvent] = []
        decisions: list[TripDecision] = []
        trace_chunks: list[np.ndarray] = []

        in_t = np.zeros(_EVENT_BUF, dtype=np.int64)
        in_der = np.zeros(_EVENT_BUF, dtype=np.int64)
        in_line = np.zeros(_EVENT_BUF, dtype=np.int64)
        out_t = np.zeros(_EVENT_BUF, dtype=np.int64)
        out_der = np.zeros(_EVENT_BUF, dtype=np.int64)

        armed = True  # arbitration waits for the episode's first output spike

        def flush_events(counts):
            for idx in range(counts[0]):
                line = int(in_line[idx])
                spike_log.append(
                    SpikeEvent(
                        t=in_t[idx] * dt,
                        der_id=int(in_der[idx]),
                        kind="input",
                        line_id=None if line < 0 else line,
                    )
                )
            for idx in range(counts[1]):
                spike_log.append(
                    SpikeEvent(t=out_t[idx] * dt, der_id=int(out_der[idx]), kind="output")
                )

        def run_kernel(s_from: int, s_to: int) -> int:
            """Advance relays over [s_from, s_to); returns the step reached."""
            nonlocal armed
            s_cur = s_from
            while s_cur < s_to:
                rows = (s_to - s_cur) // sim.trace_decimation + 2
                tr_s = np.zeros(rows, dtype=np.int64)
                tr_vm = np.zeros((rows, n))
                tr_vth = np.zeros((rows, n))
                tr_d = np.zeros((rows, n))
                tr_rows = np.zeros(1, dtype=np.int64)
                counts = np.zeros(2, dtype=np.int64)
                s_ret, reason = _lif_kernel(
                    s_cur, s_to, dt, self.af,
                    self.p_alpha, self.p_beta, self.p_gamma, self.p_k,
                    self.p_cm, self.p_rm, self.p_v0, self.p_eta, self.p_lam,
                    self.p_dmin, self.p_gain,
                    self.drive_mode, self.latch, self.line_agg,
                    self._raw_v, self._raw_i, self._raw_p, self._raw_il,
                    self.ch_ptr, self.ch_line,
                    fv, fi, fp, fil, bv, bi, bp, bil,
                    vm, fired, last_in, n_in, last_in_ch, n_in_ch,
                    1 if armed else 0,
                    in_t, in_der, in_line, out_t, out_der, counts,
                    sim.trace_decimation, tr_s, tr_vm, tr_vth, tr_d, tr_rows,
                )
                flush_events(counts)
                nrow = int(tr_rows[0])
                if nrow:
                    chunk = np.empty((nrow * n, 5))
                    for i in range(n):
                        sl = chunk[i::n]
                        sl[:, 0] = tr_s[:nrow] * dt
                        sl[:, 1] = i
                        sl[:, 2] = tr_vm[:nrow, i]
                        sl[:, 3] = tr_vth[:nrow, i]
                        sl[:, 4] = tr_d[:nrow, i]
                    trace_chunks.append(chunk)
                if reason == 1:
                    self._arbitrate(int(s_ret) - 1, out_t, out_der, counts,
                                    fv, fp, fil, bv, bp, bil,
                                    decisions, breaker_log, pending)
                    armed = False
                    return int(s_ret)
                s_cur = int(s_ret)
            return s_cur

        pending: list[tuple[int, int, str, object]] = sorted(timeline)
        seq = len(cfg.events) * 2 + 10  # ordering counter for runtime events
        s_now = 0
        while s_now < self.horizon:
            s_next = pending[0][0] if pending else self.horizon
            s_next = min(max(s_next, s_now), self.horizon)
            if s_next > s_now:
                s_now = run_kernel(s_now, s_next)
                if s_now < s_next:
                    continue  # a trip decision may have scheduled new actions
            if not pending or pending[0][0] > s_now:
                if s_now >= self.horizon:
                    break
                continue
            resolve = False
            while pending and pending[0][0] <= s_now:
                step, _, kind, payload = pending.pop(0)
                if kind == "fault_on":
                    net.fault = payload
                    resolve = True
                elif kind == "fault_off":
                    if net.fault is payload:
                        net.fault = None
                        resolve = True
                elif kind == "load_on":
                    net.load_scale[payload.bus] = 1.0 + payload.fraction
                    net.dispatch_droop()
                    resolve = True
                elif kind == "load_off":
                    net.load_scale[payload.bus] = 1.0
                    net.dispatch_droop()
                    resolve = True
                elif kind == "sag_on":
                    net.pcc_sag_scale = 1.0 - payload.depth
                    resolve = True
                elif kind == "sag_off":
                    net.pcc_sag_scale = 1.0
                    resolve = True
                elif kind == "breaker":
                    decision = payload
                    breaker_log.extend(
                        trip_breakers(decision, net, sim.breaker_delay_s)
                    )
                    net.dispatch_droop()
                    resolve = True
                    seq += 1
                    pending.append(
                        (
                            step + self._net_step(sim.settle_window_s),
                            seq,
                            "rebaseline",
                            None,
                        )
                    )
                    pending.sort()
                elif kind == "rebaseline":
                    bv[:], bi[:], bp[:], bil[:] = fv, fi, fp, fil
                    fired[:] = 0
                    vm[:] = 0.0
                    last_in[:] = s_now
                    last_in_ch[:] = s_now
                    armed = True
                    baseline_hist.append((s_now, bi.copy()))
            if resolve:
                segments.append(self._solve_raw(f"t={s_now * dt:.6f}", s_now))

        spike_log.sort(key=lambda e: (e.t, e.der_id, e.kind))
        trace = (
            np.concatenate(trace_chunks)
            if trace_chunks
            else np.empty((0, 5))
        )
        case = self._case_result(segments, baseline_hist, spike_log, breaker_log, decisions, n_in)
        return TraceBundle(
            config=cfg,
            spike_log=spike_log,
            breaker_log=breaker_log,
            trip_decisions=decisions,
            membrane_trace=trace,
            segments=segments,
            case_result=case,
            n_bus=net.n_bus,
            n_lines=len(net.lines),
        )

    # -- arbitration -----------------------------------------------------

    def _arbitrate(
        self, s_spike, out_t, out_der, counts,
        fv, fp, fil, bv, bp, bil,
        decisions, breaker_log, pending,
    ) -> None:
        """Resolve the episode on its first output-spike step."""
        sim = self.cfg.sim
        firsts = {}
        for idx in range(counts[1]):
            if out_t[idx] == s_spike:
                der = int(out_der[idx])
                firsts.setdefault(der, out_t[idx] * self.dt)
        winner = min(firsts)  # same-step ties: winner-takes-all by lowest id
        t_ftts = firsts[winner]

        d = self.net.ders[winner]
        line_di = {
            int(self.ch_line[c]): abs(fil[c] - bil[c])
            for c in range(self.ch_ptr[winner], self.ch_ptr[winner + 1])
        }
        per_line = per_line_disturbances(
            dv=abs(fv[winner] - bv[winner]),
            dp=abs(fp[winner] - bp[winner]),
            line_di=line_di,
            alpha=self.p_alpha[winner],
            beta=self.p_beta[winner],
            gamma=self.p_gamma[winner],
            d_min=0.0,
        )
        _, priorities = aggregate_lines(per_line, self.p_k[winner], der_id=winner)
        target = select_faulted_line(priorities)
        decision = TripDecision(winner_der=winner, t_ftts=t_ftts, target_line=target)
        decisions.append(decision)
        if sim.breakers_enabled:
            s_act = self._net_step(t_ftts + sim.breaker_delay_s)
            while s_act <= s_spike:  # contacts open at the next network step
                s_act += self.ratio
            pending.append((s_act, 10_000 + len(decisions), "breaker", decision))
            pending.sort()

    # -- case extraction ---------------------------------------------------

    def _case_result(
        self, segments, baseline_hist, spike_log, breaker_log, decisions, n_in
    ) -> CaseResult:
        cfg = self.cfg
        fault_events = [e for e in cfg.events if isinstance(e, FaultEvent)]
        kind = "fault" if fault_events else ("load" if cfg.events else "quiet")
        in_counts = {}
        out_counts = {}
        for di in range(self.n):
            in_counts[di] = sum(
                1 for e in spike_log if e.kind == "input" and e.der_id == di
            )
            out_counts[di] = sum(
                1 for e in spike_log if e.kind == "output" and e.der_id == di
            )
        ops = sum(1 for e in breaker_log if e.state == "open")
        case = CaseResult(
            scenario_id=cfg.scenario_id,
            kind=kind,
            input_spikes=in_counts,
            output_spikes=out_counts,
            breaker_ops=ops,
        )
        if not fault_events:
            return case

        spec = fault_events[0].spec
        case.fault_line = spec.line
        case.fault_type = spec.fault_type
        case.fault_resistance = spec.resistance
        case.fault_position = spec.position

        # nearest-DER oracle on the pre-fault breaker state (relay hosts only)
        oracle_net = cfg.build_network()
        dists = [
            (electrical_distance(oracle_net, d, spec), di)
            for di, d in enumerate(oracle_net.ders)
            if d.relay_enabled
        ]
        dmin = min(dist for dist, _ in dists)
        idx = [di for dist, di in dists if dist <= dmin + 1e-9]
        case.nearest_ders = idx
        case.nearest_unique = len(idx) == 1

        # onset: earliest time any DER's raw current leaves its 5% band
        # around the baseline in effect at fault application
        s_fault = self._net_step(spec.t_start)
        post = [seg for seg in segments if seg.step >= s_fault]
        base_i = baseline_hist[0][1]
        for hstep, hvals in baseline_hist:
            if hstep <= s_fault:
                base_i = hvals
        onsets = []
        if post:
            times = np.array([seg.step * self.dt for seg in post])
            for di in range(self.n):
                trace = np.array([abs(seg.der_i[di]) for seg in post])
                t_on = detect_fault_onset(times, trace, float(base_i[di]))
                if t_on is not None:
                    onsets.append(t_on)
        if onsets:
            case.t_onset = min(onsets)

        first_decision = decisions[0] if decisions else None
        if first_decision is not None:
            case.winner_der = first_decision.winner_der
            case.tripped_line = first_decision.target_line
            if case.t_onset is not None and first_decision.t_ftts >= case.t_onset:
                case.t_first_spike = first_decision.t_ftts
        return case


def run_scenario(cfg: ScenarioConfig) -> TraceBundle:
    """Execute one scenario end to end."""
    return ScenarioEngine(cfg).run()
