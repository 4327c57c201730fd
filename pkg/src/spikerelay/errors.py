"""Exception types shared across the simulator."""


class SpikeRelayError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SpikeRelayError):
    """Invalid scenario configuration. Carries the offending config path."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class IslandWithoutSource(SpikeRelayError):
    """A connected island contains no generating unit."""


class SingularNetwork(SpikeRelayError):
    """The nodal admittance system is singular."""


class SolveFailure(SpikeRelayError):
    """Network solve did not produce a consistent solution."""


class Unreachable(SpikeRelayError):
    """No closed-line path exists between the requested nodes."""


class EmptyBaselineWindow(SpikeRelayError):
    """Baseline capture was requested over an empty measurement window."""


class MonotonicTimeViolation(SpikeRelayError):
    """Spike encoder was stepped with a decreasing timestamp."""


class NoConnectedLines(SpikeRelayError):
    """A relay was asked to aggregate over an empty line set."""


class NoSpike(SpikeRelayError):
    """Arbitration over an episode in which no unit ever spiked."""


class EmptyBatch(SpikeRelayError):
    """A batch metric was requested over an empty case list."""


class BelowPickup(SpikeRelayError):
    """Inverse-time curve evaluated at or below the pickup multiple."""
