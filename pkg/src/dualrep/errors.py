"""Exception hierarchy shared by all dualrep modules."""


class DualrepError(Exception):
    """Base class for errors raised by this package."""


class FormatError(DualrepError, ValueError):
    """A file or text could not be parsed, or violates a data invariant."""


class JigDefinitionError(FormatError):
    """A jig definition is malformed or describes a nondeterministic FSM."""


class ReplayTimeout(DualrepError):
    """A demonstration waypoint was not reached before the watchdog expired."""

    def __init__(self, index: int, sim_time: float, timeout_s: float):
        self.index = index
        self.sim_time = sim_time
        self.timeout_s = timeout_s
        self.partial = None
        """Trajectory recorded up to the failure, attached by the replay loop."""
        super().__init__(
            f"waypoint {index} not reached within {timeout_s:g} s (sim time {sim_time:.3f} s)"
        )


class SyncMismatch(DualrepError):
    """Demonstrated and executed jig transitions cannot be paired."""

    def __init__(self, counts: dict[str, tuple[int, int]]):
        self.counts = counts
        detail = ", ".join(f"{jig}: demo {d} vs exec {e}" for jig, (d, e) in counts.items())
        super().__init__(f"jig transition count mismatch ({detail})")
