"""Exception taxonomy shared across the simulator.

ConfigurationError  -> bad user input (CLI exit code 2)
OracleMismatchError -> a distributed result disagreed with a sequential
                       oracle (CLI `verify` exit code 1)
SimulationError     -> any other hard failure inside a run (exit code 3)
"""


class ConfigurationError(ValueError):
    """Invalid parameters: generator args, flags, thresholds out of range."""


class GraphValidationError(ValueError):
    """Graph violates structural requirements (weights, connectivity, dups)."""


class SimulationError(RuntimeError):
    """Hard failure during a simulated run."""


class BandwidthError(SimulationError):
    """A node exceeded the per-channel-per-round message budget."""

    def __init__(self, node, round_index, channel, count, capacity):
        self.node = node
        self.round_index = round_index
        self.channel = channel
        super().__init__(
            f"bandwidth violation: node {node} put {count} messages on channel "
            f"{channel[0]}->{channel[1]} in round {round_index} (capacity {capacity})"
        )


class RoundLimitError(SimulationError):
    """The safety cap on simulated rounds was exceeded."""


class RoundAccountingError(SimulationError):
    """A measured round count broke its guaranteed bound."""


class InternalConsistencyError(SimulationError):
    """An algorithm invariant that must hold by construction failed."""


class OracleMismatchError(SimulationError):
    """A distributed result does not equal the sequential ground truth."""
