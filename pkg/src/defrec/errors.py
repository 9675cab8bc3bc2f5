"""Exception types shared across the toolkit."""


class DefrecError(Exception):
    """Base class for all toolkit errors."""


class MeshValidationError(DefrecError):
    """Mesh failed load-time validation (degenerate, open, or self-intersecting)."""


class ObjectValidationError(DefrecError):
    """Segmented object violates segment-id or nesting invariants."""


class DegenerateCloudError(DefrecError):
    """Point cloud too small or with a degenerate bounding box."""


class DeformationRejectedError(DefrecError):
    """No admissible deformation field found within the rejection budget."""


class EmptyRenderError(DefrecError):
    """Virtual camera saw nothing; caller should re-randomize the pose."""


class SamplingBudgetError(DefrecError):
    """Inside/outside sampling did not reach the target count within budget."""


class ShapeMismatchError(DefrecError):
    """Tensor shapes are incompatible."""


class NonFiniteError(DefrecError):
    """NaN/Inf encountered where finite values are required."""


class CloudTooSmallError(DefrecError):
    """Observation cloud below the encoder's minimum size."""


class CheckpointError(DefrecError):
    """Checkpoint file is corrupt, truncated, or of an unsupported version."""


class SegmentNotReconstructedError(DefrecError):
    """Requested segment has no points in the reconstruction."""


class EmptyReconstructionError(DefrecError):
    """Dense inference found no occupied points."""


class NoSurfaceBandError(DefrecError):
    """No reconstruction points within the surface band for entry selection."""


class TargetOnSurfaceError(DefrecError):
    """Puncture target coincides with the surface; trajectory is degenerate."""


class McdRequiresDropoutError(DefrecError):
    """Monte-Carlo dropout requested on a model trained without dropout."""


class CalibrationDivergedError(DefrecError):
    """Calibration loss exploded; aborted with the offending config."""
