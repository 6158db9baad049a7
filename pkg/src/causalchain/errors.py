"""Typed errors raised across the kernel.

Every error carries a stable ``code`` (its class name) so that callers on
the far side of a serialization boundary -- the CLI and the bridge server --
can transport the error name without string-matching messages.
"""

from __future__ import annotations


class KernelError(Exception):
    """Base class for all kernel errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class MalformedChain(KernelError):
    """A chain violates well-formedness rules (indices, empty fields, types)."""


class ChainSyntaxError(KernelError):
    """Input bytes could not be parsed in the requested format."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position


class MissingSection(KernelError):
    def __init__(self, name: str):
        super().__init__(f"missing section: {name}")
        self.name = name


class UnknownParent(KernelError):
    def __init__(self, parent_id):
        super().__init__(f"parent {parent_id} is not declared in the chain")
        self.parent_id = parent_id


class DuplicateId(KernelError):
    def __init__(self, var_id):
        super().__init__(f"duplicate variable id {var_id}")
        self.var_id = var_id


class CycleDetected(KernelError):
    def __init__(self, ids):
        ids = tuple(ids)
        super().__init__(f"dependency cycle involving {', '.join(str(i) for i in ids)}")
        self.ids = ids


class NoSink(KernelError):
    """No endogenous variable is terminal."""


class MultipleSinks(KernelError):
    def __init__(self, ids):
        ids = tuple(ids)
        super().__init__(f"multiple terminal variables: {', '.join(str(i) for i in ids)}")
        self.ids = ids


class InvalidChain(KernelError):
    """Operation requires a structurally valid chain but got an invalid one."""


class BadLabel(KernelError):
    def __init__(self, text):
        super().__init__(f"not a recognized verdict label: {text!r}")
        self.text = text


class NoAnswerMarker(KernelError):
    """Text contains no ANSWER: marker."""


class MissingLabel(KernelError):
    """Document has no answer label to render."""


class ConfigError(KernelError):
    """Invalid reward or training configuration."""


class BadInterval(KernelError):
    def __init__(self, lo, hi):
        super().__init__(f"interval lower bound {lo} exceeds upper bound {hi}")
        self.lo = lo
        self.hi = hi


class GroupTooSmall(KernelError):
    def __init__(self, size: int):
        super().__init__(f"group needs at least 2 samples, got {size}")
        self.size = size


class RatioOverflow(KernelError):
    """Importance ratio would overflow a double; policies have diverged pathologically."""


class SpaceTooLarge(KernelError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"outcome space of {size} sequences exceeds limit {limit}")
        self.size = size
        self.limit = limit


class SchemaError(KernelError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingPrediction(KernelError):
    """Candidate document carries no predicted label."""


class BadTemplate(KernelError):
    """Prompt template lacks the {query} placeholder."""


class ZeroProbability(KernelError):
    def __init__(self, position: int):
        super().__init__(f"oracle returned probability <= 0 at position {position}")
        self.position = position


class EmptyCorpus(KernelError):
    """Statistics requested over an empty corpus."""


class DegenerateInput(KernelError):
    """Series too short, mismatched, or all-zero where a fit needs signal."""


class ConstantSeries(KernelError):
    """Correlation is undefined for a constant series."""


class DegenerateVariance(KernelError):
    """A t-test input has fewer than two points or zero variance."""


class BadBins(KernelError):
    """Bin edges are not strictly increasing."""


class TooFewBins(KernelError):
    def __init__(self, count: int):
        super().__init__(f"profile needs at least 3 populated bins, got {count}")
        self.count = count


class ClosedHandle(KernelError):
    """Bridge handle was used after being closed."""
