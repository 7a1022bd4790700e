"""Exception hierarchy shared across the simulator."""


class ChainSimError(Exception):
    """Base class for all chainsim errors."""


class UnknownProduct(ChainSimError):
    pass


class CyclicBom(ChainSimError):
    pass


class IllegalTransition(ChainSimError):
    def __init__(self, state, event):
        super().__init__(f"event {event!r} is illegal in state {state!r}")
        self.state = state
        self.event = event


class UnknownRecipient(ChainSimError):
    pass


class UnknownAgent(ChainSimError):
    pass


class NoRouting(ChainSimError):
    pass


class Infeasible(ChainSimError):
    pass


class AlreadyNegotiating(ChainSimError):
    pass


class NoFeasibleScenario(ChainSimError):
    pass


class AwardRejected(ChainSimError):
    def __init__(self, supplier):
        super().__init__(f"award rejected by {supplier}")
        self.supplier = supplier


class NotActive(ChainSimError):
    pass


class OutOfOrderMilestone(ChainSimError):
    pass


class DuplicateMilestone(ChainSimError):
    pass


class NotFinalized(ChainSimError):
    pass


class EmptyWindow(ChainSimError):
    pass


class UnknownTarget(ChainSimError):
    pass


class ValidationError(ChainSimError):
    """Scenario file failed validation; carries all messages, not just the first."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class ParseError(ChainSimError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.column = column
