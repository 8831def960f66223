"""Exception hierarchy.  Every error carries a stable ``code`` string."""


class SandpileError(Exception):
    code = "SANDPILE_ERROR"


class ToppleStableSite(SandpileError):
    code = "TOPPLE_STABLE_SITE"


class ArenaOverflow(SandpileError):
    code = "ARENA_OVERFLOW"


class NoTermination(SandpileError):
    code = "NO_TERMINATION"


class InvariantViolation(SandpileError):
    """An engine-level invariant failed (conservation, hole structure, ...)."""

    code = "INVARIANT_VIOLATION"


class EmptyConfiguration(SandpileError):
    code = "EMPTY_CONFIGURATION"


class MultipleHoles(InvariantViolation):
    code = "MULTIPLE_HOLES"


class StateLimitExceeded(SandpileError):
    code = "STATE_LIMIT_EXCEEDED"


class SingularSystem(SandpileError):
    code = "SINGULAR_SYSTEM"


class SchemaMismatch(SandpileError):
    code = "SCHEMA_MISMATCH"


class NonMonotoneEdges(SandpileError, ValueError):
    code = "NON_MONOTONE_EDGES"


class TooFewSamples(SandpileError, ValueError):
    code = "TOO_FEW_SAMPLES"


class ExpectedTooSmall(SandpileError, ValueError):
    code = "EXPECTED_TOO_SMALL"


class NonPositiveVariance(SandpileError, ValueError):
    code = "NON_POSITIVE_VARIANCE"


class MissingSamples(SandpileError):
    code = "MISSING_SAMPLES"


class TrialFailure(SandpileError):
    """An engine error raised inside a batch, tagged with the reproducing seed."""

    def __init__(self, cause: SandpileError, trial_index: int, seed: int):
        super().__init__(f"{cause.code} in trial {trial_index} (seed={seed}): {cause}")
        self.cause = cause
        self.code = cause.code
        self.trial_index = trial_index
        self.seed = seed

    def __reduce__(self):
        return (type(self), (self.cause, self.trial_index, self.seed))
