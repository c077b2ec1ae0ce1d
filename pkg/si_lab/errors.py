# si_lab/errors.py
from typing import List


class SiLabError(Exception):
    """Base class for every error raised by si_lab."""


class ConfigError(SiLabError):
    """Settings file unreadable or a parameter out of range."""


class MalformedHistoryError(SiLabError):
    """History input that cannot be checked as given."""


class OracleSizeError(SiLabError):
    """More committed transactions than the brute-force cap allows."""


class MutationNotApplicable(SiLabError):
    """The requested mutation has no target in this history or deployment."""


class ScriptError(SiLabError):
    """Directed script that cannot be executed."""


class EngineError(SiLabError):
    """A protocol handler was invoked in a state that does not allow it."""


class ActiveTransactionError(EngineError):
    """A transaction is already active on the session."""


class NoActiveTransactionError(EngineError):
    """No transaction is active on the session."""


class NotPreparedError(EngineError):
    """The transaction has not been prepared."""


class CommitTimestampError(EngineError):
    """Commit timestamp missing or below the prepare timestamp."""


class ProtocolError(EngineError):
    """A state the fault-free protocols never reach."""


class SimulationDeadlock(SiLabError):
    """No runnable event is left while processes are still waiting.

    NOT an input error: in fault-free runs this is a simulator bug.
    """

    def __init__(self, pending: List[str]):
        self.pending = list(pending)
        dump = "\n".join(f"  - {label}" for label in self.pending)
        super().__init__(f"simulation deadlocked with {len(self.pending)} pending waits:\n{dump}")


# Errors the CLI reports as bad input (exit code 2).
INPUT_ERRORS = (ConfigError, MalformedHistoryError, OracleSizeError, MutationNotApplicable, ScriptError)
