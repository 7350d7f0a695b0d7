"""Exception and warning types shared across the package."""


class FeatgateError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRow(FeatgateError):
    """A CSV data row could not be parsed. Carries the 1-based file line number."""

    def __init__(self, line_number: int, detail: str = ""):
        self.line_number = line_number
        msg = f"malformed row at line {line_number}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class EmptyDataset(FeatgateError):
    """Operation requires at least one vector."""


class InvalidConfig(FeatgateError):
    """A configuration value violates its documented range or combination."""


class ClassTooSmall(FeatgateError):
    """A class has fewer samples than required to fit its conditionals."""

    def __init__(self, class_id: int, count: int):
        self.class_id = class_id
        self.count = count
        super().__init__(f"class {class_id} has only {count} sample(s); need at least 2")


class EmptySubset(FeatgateError):
    """The active feature subset is empty."""


class UnknownClass(FeatgateError):
    """A class id is not part of the trained model."""


class DatasetTooSmall(FeatgateError):
    """Operation requires more vectors than the dataset holds."""


class InvalidWeights(FeatgateError):
    """Trust weights must be non-negative and sum to one."""


class Diverged(FeatgateError):
    """Training loss became non-finite."""


class EmptySelection(FeatgateError):
    """Threshold selection produced no features; fall back to top-fraction mode."""


class DimensionMismatch(FeatgateError):
    """A vector's length does not match the expected feature count."""


class WindowTooEmpty(FeatgateError):
    """The sliding window holds fewer vectors than the test requires."""


class EmptyDecisionLog(FeatgateError):
    """Metrics require at least one logged decision."""


class UsageError(FeatgateError):
    """Bad command line or config file input; maps to exit status 2."""


class ZeroBaselineWarning(UserWarning):
    """Permutation importance baseline loss was zero; sentinel ratio returned."""
