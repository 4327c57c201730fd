"""Per-DER leaky integrate-and-fire relay.

The relay pipeline, evaluated once per integration step:

1. deviations of the local aggregate RMS measurements from their captured
   pre-disturbance baseline,
2. a weighted scalar disturbance index (zeroed below the noise floor),
3. inverse-time input-spike encoding: inter-spike interval 1/(1 + k*D),
4. an adaptive firing threshold that collapses exponentially with the raw
   deviation sum and tracks the membrane potential,
5. forward-Euler membrane integration, and
6. output-spike emission with reset and a once-per-episode latch.

The membrane can be driven three ways (``drive_mode``): ``gated`` (default)
feeds it the input-spike indicator scaled by the disturbance magnitude,
``indicator`` feeds the bare indicator, and ``continuous`` feeds the
disturbance index on every step.  The gated form keeps the event-driven
character while retaining the magnitude dependence that produces
severity-ordered trip latencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import MonotonicTimeViolation
from .network import Baseline, Measurement

DRIVE_MODES = ("gated", "continuous", "indicator")


@dataclass
class NeuronParams:
    """LIF relay parameters.  Defaults follow the unit-2 parameter set."""

    alpha: float = 1.0  # voltage-deviation weight
    beta: float = 0.5  # current-deviation weight
    gamma: float = 0.005  # power-deviation weight
    k: float = 20.0  # spike gain
    c_m: float = 250e-6  # membrane capacitance, farads
    r_m: float = 0.644  # membrane resistance, ohms
    v0: float = 17.9  # base threshold voltage
    eta: float = 0.0081  # threshold decay factor
    lam: float = 0.6  # threshold damping (membrane feedback)
    d_min: float = 0.25  # disturbance noise floor
    dt: float = 3.125e-6  # integration step, seconds
    input_gain: float = 250.0  # index -> membrane-volt conversion

    def __post_init__(self):
        if min(self.c_m, self.r_m, self.v0, self.dt) <= 0:
            raise ValueError("c_m, r_m, v0 and dt must all be > 0")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("disturbance weights must be >= 0")
        if self.k <= 0:
            raise ValueError("spike gain k must be > 0")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("threshold damping must satisfy 0 <= lam < 1")
        if self.d_min < 0:
            raise ValueError("noise floor must be >= 0")
        if self.tau / self.dt < 10.0:
            raise ValueError(
                f"tau/dt = {self.tau / self.dt:.2f} < 10; decrease dt or slow the membrane"
            )

    @property
    def tau(self) -> float:
        """Membrane time constant r_m * c_m (never stored independently)."""
        return self.r_m * self.c_m


#: The three published parameter sets (membrane + threshold-decay variants).
NEURON_PRESETS = {
    1: dict(c_m=200e-6, r_m=0.432, eta=0.0156),
    2: dict(c_m=250e-6, r_m=0.644, eta=0.0081),
    3: dict(c_m=100e-6, r_m=0.470, eta=0.0306),
}


def neuron_preset(index: int, **overrides) -> NeuronParams:
    """NeuronParams for published unit 1, 2 or 3, with optional overrides."""
    kw = dict(NEURON_PRESETS[index])
    kw.update(overrides)
    return NeuronParams(**kw)


@dataclass
class Deviations:
    """Absolute deviations of (V, I, P) from the baseline."""

    dv: float
    di: float
    dp: float

    @property
    def total(self) -> float:
        return self.dv + self.di + self.dp


@dataclass
class NeuronState:
    """Mutable relay state for one DER."""

    baseline: Baseline
    v_m: float = 0.0
    v_th: float = 0.0
    n: int = 0  # input-spike counter
    last_input_spike_t: float = 0.0
    fired: bool = False  # latched on the first output spike of an episode
    _t_prev: float = field(default=-math.inf, repr=False)


@dataclass
class NeuronOutput:
    """Snapshot of one relay step."""

    input_spike: bool
    output_spike: bool
    v_m: float
    v_th: float
    d: float


# ======================================================================
# Pipeline stages
# ======================================================================


def deviations(meas: Measurement, base: Baseline) -> Deviations:
    return Deviations(
        dv=abs(meas.v_rms - base.v0),
        di=abs(meas.i_rms - base.i0),
        dp=abs(meas.p - base.p0),
    )


def disturbance_index(dev: Deviations, params: NeuronParams) -> float:
    """Weighted deviation sum; zeroed below the noise floor."""
    d = params.alpha * dev.dv + params.beta * dev.di + params.gamma * dev.dp
    return d if d >= params.d_min else 0.0


def spike_interval(d: float, k: float) -> float:
    """Inverse-time inter-spike interval, seconds: 1/(1 + k*D)."""
    if d < 0:
        raise ValueError("disturbance index must be >= 0")
    if k <= 0:
        raise ValueError("spike gain must be > 0")
    return 1.0 / (1.0 + k * d)


def adaptive_threshold(dev: Deviations, v_m: float, params: NeuronParams) -> float:
    """v0 * exp(-eta * (dv+di+dp)) + lam * v_m."""
    return params.v0 * math.exp(-params.eta * dev.total) + params.lam * v_m


def integrate_membrane(v_m: float, d_input: float, params: NeuronParams) -> float:
    """One forward-Euler step of c_m * dv/dt = -v/r_m + d_input.

    Clamped at zero from below: with non-negative input the leak cannot drive
    the potential negative, the clamp only guards large-dt configurations.
    """
    v = v_m + params.dt * (-v_m / params.r_m + d_input) / params.c_m
    return v if v > 0.0 else 0.0


def encode_input_spike(
    state: NeuronState, d: float, t: float, params: NeuronParams
) -> bool:
    """Emit an input spike when the inverse-time interval has elapsed.

    Spikes require a positive (above-noise-floor) disturbance; time must be
    non-decreasing across calls.
    """
    if t < state._t_prev:
        raise MonotonicTimeViolation(f"t went backwards: {t} < {state._t_prev}")
    state._t_prev = t
    if d <= 0.0:
        return False
    if t - state.last_input_spike_t >= spike_interval(d, params.k):
        state.n += 1
        state.last_input_spike_t = t
        return True
    return False


def membrane_drive(input_spike: bool, d: float, params: NeuronParams, mode: str) -> float:
    if mode == "gated":
        return params.input_gain * d if input_spike else 0.0
    if mode == "indicator":
        return params.input_gain * 1.0 if input_spike else 0.0
    if mode == "continuous":
        return params.input_gain * d
    raise ValueError(f"unknown membrane drive mode {mode!r}")


def step_neuron(
    state: NeuronState,
    meas: Measurement,
    t: float,
    params: NeuronParams,
    drive_mode: str = "gated",
    latch: bool = True,
) -> NeuronOutput:
    """Run the full relay pipeline for one step, mutating ``state``.

    The threshold is evaluated against the pre-update membrane potential and
    compared with the post-update one; an output spike resets the membrane
    and (in latch mode) blocks further output spikes until the episode is
    reset via :func:`reset_episode`.
    """
    dev = deviations(meas, state.baseline)
    d = disturbance_index(dev, params)
    spike_in = encode_input_spike(state, d, t, params)
    v_th = adaptive_threshold(dev, state.v_m, params)
    v_m = integrate_membrane(state.v_m, membrane_drive(spike_in, d, params, drive_mode), params)

    spike_out = False
    if v_m >= v_th and not (latch and state.fired):
        spike_out = True
        v_m = 0.0
        state.fired = True
    state.v_m = v_m
    state.v_th = v_th
    return NeuronOutput(spike_in, spike_out, v_m, v_th, d)


def reset_episode(state: NeuronState, baseline: Baseline, t: float) -> None:
    """Close a protection episode: re-baseline, clear latch and membrane."""
    state.baseline = replace(baseline)
    state.fired = False
    state.v_m = 0.0
    state.last_input_spike_t = t
