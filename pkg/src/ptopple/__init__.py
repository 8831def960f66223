"""Single-source p-toppling sandpile on Z: simulation, exact small-n laws, statistical checks."""

from .core import (
    LEFTMOST,
    Configuration,
    Instruction,
    InstructionSource,
    PolicyKind,
    ScriptedSource,
    StabilizationOutcome,
    TopplePolicy,
    select_next,
    stabilize,
    topple,
)
from .errors import SandpileError
from .montecarlo import BatchParams, BatchSummary, run_batch
from .oracle import absorption_distribution, marginals

__version__ = "0.1.0"

__all__ = [
    "LEFTMOST", "Configuration", "Instruction", "InstructionSource", "PolicyKind", "ScriptedSource",
    "StabilizationOutcome", "TopplePolicy", "select_next", "stabilize", "topple", "SandpileError",
    "BatchParams", "BatchSummary", "run_batch", "absorption_distribution", "marginals",
]
