"""Neuro-relay tests: deviation/index pipeline, inverse-time encoding,
adaptive threshold, Euler membrane vs the closed-form oracle, and the
output-spike latch.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from spikerelay.errors import MonotonicTimeViolation
from spikerelay.network import Baseline, Measurement
from spikerelay.neuron import (
    Deviations,
    NeuronParams,
    NeuronState,
    adaptive_threshold,
    deviations,
    disturbance_index,
    encode_input_spike,
    integrate_membrane,
    neuron_preset,
    reset_episode,
    spike_interval,
    step_neuron,
)

DT = 3.125e-6


def mk_meas(v=0.0, i=0.0, p=0.0, t=0.0):
    return Measurement(t=t, v_rms=v, i_rms=i, p=p)


ZERO_BASE = Baseline(0.0, 0.0, 0.0)


# ======================================================================
# deviations / disturbance_index
# ======================================================================


def test_deviations_identity_and_abs():
    base = Baseline(230.0, 15.0, 9e3)
    d = deviations(mk_meas(230.0, 15.0, 9e3), base)
    assert (d.dv, d.di, d.dp) == (0.0, 0.0, 0.0)
    d = deviations(mk_meas(220.0, 15.0, 9e3), base)
    assert d.dv == pytest.approx(10.0)
    d = deviations(mk_meas(230.0, 15.0, 5e3), base)
    assert d.dp == pytest.approx(4000.0)


def test_disturbance_index_weighted_sum():
    p = NeuronParams()
    assert disturbance_index(Deviations(10.0, 4.0, 200.0), p) == pytest.approx(13.0)
    assert disturbance_index(Deviations(0, 0, 0), p) == 0.0


def test_disturbance_index_noise_floor():
    p = NeuronParams(d_min=1.0)
    # computed value 0.4 * d_min is squashed to zero
    assert disturbance_index(Deviations(0.4, 0, 0), p) == 0.0
    # exactly at the floor passes through
    assert disturbance_index(Deviations(1.0, 0, 0), p) == pytest.approx(1.0)


# ======================================================================
# spike_interval
# ======================================================================


def test_spike_interval_limits_and_worked_values():
    assert spike_interval(0.0, 20.0) == 1.0
    # D ~ 100 -> delay at or below 0.5 ms
    assert spike_interval(100.0, 20.0) == pytest.approx(1.0 / 2001.0)
    assert spike_interval(100.0, 20.0) <= 0.5e-3
    # D ~ 10 -> delay at or above 2 ms
    assert spike_interval(10.0, 20.0) == pytest.approx(1.0 / 201.0)
    assert spike_interval(10.0, 20.0) >= 2e-3
    with pytest.raises(ValueError):
        spike_interval(-1.0, 20.0)
    with pytest.raises(ValueError):
        spike_interval(1.0, 0.0)


# ======================================================================
# encode_input_spike
# ======================================================================


def test_encoder_silent_at_zero_disturbance():
    p = NeuronParams()
    st = NeuronState(baseline=ZERO_BASE)
    spikes = sum(
        encode_input_spike(st, 0.0, n * DT, p) for n in range(1, 20000)
    )
    assert spikes == 0 and st.n == 0


def test_encoder_constant_rate_matches_interval():
    p = NeuronParams()
    st = NeuronState(baseline=ZERO_BASE)
    times = []
    n_steps = int(round(1.0 / DT))
    for s in range(1, n_steps + 1):
        if encode_input_spike(st, 100.0, s * DT, p):
            times.append(s * DT)
    # 1 s of constant D=100 at k=20: one spike every ~0.49975 ms
    assert len(times) == pytest.approx(2001, abs=2)
    gaps = np.diff(times)
    assert np.all(np.abs(gaps - 1.0 / 2001.0) <= DT + 1e-12)


def test_encoder_first_spike_follows_step_disturbance():
    p = NeuronParams()
    st = NeuronState(baseline=ZERO_BASE)
    t_step = 1.5
    first = None
    for s in range(1, int(1.6 / DT)):
        t = s * DT
        d = 100.0 if t >= t_step else 0.0
        if encode_input_spike(st, d, t, p) and first is None:
            first = t
            break
    assert first is not None
    assert first - t_step <= spike_interval(100.0, p.k) + DT


def test_encoder_time_regression_raises():
    p = NeuronParams()
    st = NeuronState(baseline=ZERO_BASE)
    encode_input_spike(st, 1.0, 1.0, p)
    with pytest.raises(MonotonicTimeViolation):
        encode_input_spike(st, 1.0, 0.5, p)


def test_encoder_gap_bounds_property():
    # Every inter-spike gap over a wandering trajectory stays inside
    # [Ts(D_max), Ts(D_min)] up to one step of quantization.
    rng = np.random.default_rng(23)
    p = NeuronParams(d_min=0.1)
    for _ in range(10):
        d_lo, d_hi = sorted(rng.uniform(1.0, 300.0, size=2))
        segs = rng.uniform(d_lo, d_hi, size=8)
        st = NeuronState(baseline=ZERO_BASE)
        times, d_seen = [], []
        step_per_seg = 40000
        for gi, d in enumerate(segs):
            for s in range(step_per_seg):
                t = (gi * step_per_seg + s + 1) * DT
                d_seen.append(d)
                if encode_input_spike(st, float(d), t, p):
                    times.append(t)
        if len(times) < 3:
            continue
        gaps = np.diff(times)
        t_min = spike_interval(float(max(segs)), p.k)
        t_max = spike_interval(float(min(segs)), p.k)
        assert np.all(gaps >= t_min - DT - 1e-12)
        assert np.all(gaps <= t_max + DT + 1e-12)


# ======================================================================
# adaptive_threshold
# ======================================================================


def test_threshold_base_value_at_rest():
    p = NeuronParams()
    assert adaptive_threshold(Deviations(0, 0, 0), 0.0, p) == pytest.approx(17.9)


def test_threshold_worked_example():
    p = NeuronParams(eta=0.008)
    v = adaptive_threshold(Deviations(100.0, 0.0, 0.0), 5.0, p)
    assert v == pytest.approx(17.9 * math.exp(-0.8) + 3.0, rel=1e-12)
    assert v == pytest.approx(11.04, abs=0.01)


def test_threshold_limits_and_floor():
    p = NeuronParams()
    # deviations -> infinity: threshold collapses to the membrane feedback
    v = adaptive_threshold(Deviations(1e9, 0, 0), 2.0, p)
    assert v == pytest.approx(p.lam * 2.0)
    # always strictly positive
    rng = np.random.default_rng(2)
    for _ in range(200):
        dev = Deviations(*rng.uniform(0, 1e4, size=3))
        assert adaptive_threshold(dev, float(rng.uniform(0, 50)), p) > 0.0
    # lam = 0 with zero deviations pins the threshold at v0 exactly
    p0 = NeuronParams(lam=0.0)
    assert adaptive_threshold(Deviations(0, 0, 0), 30.0, p0) == p0.v0


# ======================================================================
# integrate_membrane
# ======================================================================


def test_membrane_decay_toward_zero():
    p = NeuronParams()
    v = 10.0
    n_tau = p.tau / p.dt
    for _ in range(int(round(n_tau))):
        v = integrate_membrane(v, 0.0, p)
    # one time constant of pure leak: e^-1 within Euler error
    assert v == pytest.approx(10.0 * math.exp(-1.0), rel=0.02)


@pytest.mark.parametrize("preset", [1, 2, 3])
def test_membrane_constant_drive_tracks_closed_form(preset):
    # Closed-form oracle: v(t) = R*D*(1 - exp(-t/tau)).  Forward Euler at
    # h = dt/tau carries a leading relative error of about h/2, so the
    # trajectory is checked against the true first-order bound.
    p = neuron_preset(preset)
    d = 50.0
    h = p.dt / p.tau
    v, errs = 0.0, []
    n = int(round(10 * p.tau / p.dt))
    for s in range(1, n + 1):
        v = integrate_membrane(v, d, p)
        exact = p.r_m * d * (1.0 - math.exp(-s * p.dt / p.tau))
        errs.append(abs(v - exact))
    full_scale = p.r_m * d
    assert v == pytest.approx(full_scale, rel=1e-4)  # settled at R*D
    assert max(errs) / full_scale <= 0.6 * h  # first-order Euler bound


def test_membrane_threshold_crossing_oracle():
    # Constant drive D=50 on the unit-2 set crosses 17.9 V at
    # t* = -tau*ln(1 - 17.9/32.2) ~ 130.7 us; Euler lands within one step.
    p = neuron_preset(2)
    d = 50.0
    t_star = -p.tau * math.log(1.0 - p.v0 / (p.r_m * d))
    assert t_star == pytest.approx(130.7e-6, abs=0.05e-6)
    v, crossing = 0.0, None
    for s in range(1, 200):
        v = integrate_membrane(v, d, p)
        if v >= p.v0:
            crossing = s * p.dt
            break
    assert crossing is not None
    assert abs(crossing - t_star) <= p.dt


def test_membrane_clamped_at_zero():
    p = NeuronParams()
    assert integrate_membrane(0.0, -1e9, p) == 0.0


# ======================================================================
# step_neuron
# ======================================================================


def _run_ramp(scale_v: float, scale_p: float, params: NeuronParams, latch=True,
              ramp_s: float = 10e-3, total_s: float = 60e-3):
    """Drive a neuron with a linear deviation ramp; return its spike record."""
    st = NeuronState(baseline=ZERO_BASE)
    out_times, in_count = [], 0
    for s in range(1, int(total_s / params.dt)):
        t = s * params.dt
        f = min(t / ramp_s, 1.0)
        o = step_neuron(st, mk_meas(v=scale_v * f, p=scale_p * f, t=t), t, params, latch=latch)
        in_count += o.input_spike
        if o.output_spike:
            out_times.append(t)
    return st, out_times, in_count


def test_step_neuron_quiescent():
    p = NeuronParams()
    st = NeuronState(baseline=Baseline(230.0, 4.0, 3000.0))
    for s in range(1, 5000):
        o = step_neuron(st, mk_meas(230.0, 4.0, 3000.0, s * p.dt), s * p.dt, p)
        assert not o.input_spike and not o.output_spike
    assert st.v_m == pytest.approx(0.0, abs=1e-12)


def test_step_neuron_severity_ordering():
    p = NeuronParams()
    _, t_weak, _ = _run_ramp(scale_v=20.0, scale_p=800.0, params=p)
    _, t_mid, _ = _run_ramp(scale_v=60.0, scale_p=3000.0, params=p)
    _, t_strong, _ = _run_ramp(scale_v=100.0, scale_p=6000.0, params=p)
    assert t_weak and t_mid and t_strong
    assert t_strong[0] < t_mid[0] < t_weak[0]


def test_step_neuron_latch_and_reset():
    p = NeuronParams()
    st, outs, _ = _run_ramp(scale_v=100.0, scale_p=6000.0, params=p)
    assert len(outs) == 1  # latched after the first output spike
    assert st.fired and st.v_m == 0.0 or st.v_m >= 0.0
    assert st.fired
    reset_episode(st, ZERO_BASE, t=1.0)
    assert not st.fired and st.v_m == 0.0


def test_step_neuron_latch_off_keeps_spiking():
    p = NeuronParams()
    _, outs, _ = _run_ramp(scale_v=100.0, scale_p=6000.0, params=p, latch=False)
    assert len(outs) > 1


def test_step_neuron_monotonicity_property():
    # Pointwise-dominating disturbance never spikes later.
    p = NeuronParams()
    rng = np.random.default_rng(31)
    for _ in range(6):
        v_hi = float(rng.uniform(40, 120))
        p_hi = float(rng.uniform(2000, 8000))
        c = float(rng.uniform(0.3, 0.9))
        _, t_hi, _ = _run_ramp(v_hi, p_hi, p)
        _, t_lo, _ = _run_ramp(c * v_hi, c * p_hi, p)
        if t_lo:
            assert t_hi
            assert t_hi[0] <= t_lo[0]


def test_neuron_params_validation_and_presets():
    with pytest.raises(ValueError):
        NeuronParams(dt=1.0)  # tau/dt < 10
    with pytest.raises(ValueError):
        NeuronParams(lam=1.0)
    with pytest.raises(ValueError):
        NeuronParams(k=0.0)
    taus = {i: neuron_preset(i).tau for i in (1, 2, 3)}
    assert taus[1] == pytest.approx(86.4e-6)
    assert taus[2] == pytest.approx(161e-6)
    assert taus[3] == pytest.approx(47e-6)
    assert neuron_preset(3).eta == 0.0306


def test_silence_below_noise_floor():
    p = NeuronParams(d_min=5.0)
    st = NeuronState(baseline=ZERO_BASE)
    n_out = 0
    for s in range(1, 200000):
        t = s * p.dt
        o = step_neuron(st, mk_meas(v=4.0, t=t), t, p)  # D = 4 < d_min
        n_out += o.output_spike
        assert not o.input_spike
    assert n_out == 0 and st.n == 0
