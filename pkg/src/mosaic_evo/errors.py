class MosaicEvoError(Exception):
    """Base class for all package errors."""


class InvalidStateError(MosaicEvoError, ValueError):
    """A state vector or rescaled point violates its domain (e.g. zero normalizer)."""


class InconsistentStateError(MosaicEvoError, ValueError):
    """Counts that cannot come from a mosaic, e.g. a negative irregular-node count."""


class DegenerateStateError(MosaicEvoError, ValueError):
    """The cumulative clock function vanishes (or is negative) at the requested state."""


class TableError(MosaicEvoError, ValueError):
    """A fundamental table is malformed."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class IntegrationError(MosaicEvoError, RuntimeError):
    """The ODE integrator failed (step-size underflow, non-finite state)."""


class InvariantViolation(MosaicEvoError, RuntimeError):
    """A mesh invariant was found broken during simulation."""


class PreconditionError(MosaicEvoError, ValueError):
    """An operation was called on an element that does not satisfy its precondition."""
