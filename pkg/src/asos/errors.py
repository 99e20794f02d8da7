"""Exception hierarchy shared by every subsystem."""


class ASOSError(Exception):
    pass


class UnknownReference(ASOSError, KeyError):
    """A property, mechanism, kind or function id did not resolve."""

    def __str__(self):
        return Exception.__str__(self)


class ContractError(ASOSError, ValueError):
    """Arguments violate an operation's preconditions."""


class CycleError(ASOSError):
    def __init__(self, nodes):
        self.nodes = sorted(nodes)
        super().__init__(f"schedule contains a cycle through {self.nodes}")


class DecodeError(ASOSError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class StepError(ASOSError):
    def __init__(self, mechanism_id, cause):
        self.mechanism_id = mechanism_id
        self.cause = cause
        super().__init__(f"mechanism {mechanism_id} failed: {cause!r}")


class LoadError(ASOSError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class PolicyError(ASOSError):
    pass


class RolloutError(ASOSError):
    pass


class TrainingError(ASOSError):
    def __init__(self, agent, message):
        self.agent = agent
        super().__init__(f"agent {agent}: {message}")
