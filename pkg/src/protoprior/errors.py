"""Exception hierarchy.

Every error carries a short ``category`` string. The CLI prints it as a
machine-parseable prefix on failure.
"""


class ProtoPriorError(Exception):
    category = "error"

    def __init__(self, message: str = "", category: str | None = None):
        super().__init__(message)
        if category is not None:
            self.category = category


class InvalidConfig(ProtoPriorError, ValueError):
    category = "invalid-config"


class DegenerateImage(ProtoPriorError, ValueError):
    category = "degenerate-image"


class DegeneratePrototype(ProtoPriorError, ValueError):
    category = "degenerate-prototype"


class ShapeMismatch(ProtoPriorError, ValueError):
    category = "shape-mismatch"


class DimensionMismatch(ShapeMismatch):
    category = "dimension-mismatch"


class NoForwardState(ProtoPriorError, RuntimeError):
    category = "no-forward-state"


class DuplicateClassId(ProtoPriorError, ValueError):
    category = "duplicate-class-id"


class KMismatch(ProtoPriorError, ValueError):
    category = "k-mismatch"


class HogConfigMismatch(ProtoPriorError, ValueError):
    category = "hog-config-mismatch"


class EmptyDataset(ProtoPriorError, ValueError):
    category = "empty-dataset"


class InvalidCount(ProtoPriorError, ValueError):
    category = "invalid-count"


class LabelOutsideUnseen(ProtoPriorError, ValueError):
    category = "label-outside-unseen"


class CoverageMismatch(ProtoPriorError, ValueError):
    category = "coverage-mismatch"


class TopTOutOfRange(ProtoPriorError, ValueError):
    category = "top-t-out-of-range"


class TemplateCollisionExhausted(ProtoPriorError, RuntimeError):
    category = "template-collision-exhausted"


class MissingFile(ProtoPriorError, FileNotFoundError):
    category = "missing-file"


class BadCrop(ProtoPriorError, ValueError):
    category = "bad-crop"


class UnknownPartition(ProtoPriorError, ValueError):
    category = "unknown-partition"


class CheckpointFormatError(ProtoPriorError, ValueError):
    category = "bad-checkpoint"
