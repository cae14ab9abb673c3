# apps/common/exceptions.py


class WhdSpotException(Exception):
    """Base exception for the WHDSpot detection stack"""
    pass


class ConfigurationError(WhdSpotException, ValueError):
    """Exception for invalid configuration values"""
    pass


class ShapeError(WhdSpotException, ValueError):
    """Exception for tensor shape contract violations"""
    pass


class ProbabilityMapError(WhdSpotException, ValueError):
    """Exception for probability maps with values outside [0, 1]"""
    pass


class LabelError(WhdSpotException, ValueError):
    """Exception for class labels outside the valid range"""
    pass


class BoxError(WhdSpotException, ValueError):
    """Exception for degenerate or out-of-image boxes"""
    pass


class GradientError(WhdSpotException):
    """Exception for non-finite values met while checking gradients"""
    pass


class SceneRenderError(WhdSpotException):
    """Exception for scenes whose objects cannot be placed"""
    pass


class DatasetError(WhdSpotException):
    """Exception for missing, unwritable or corrupt dataset files"""
    pass


class CheckpointError(WhdSpotException):
    """Exception for unreadable or mismatched checkpoint files"""
    pass


class EvaluationError(WhdSpotException, ValueError):
    """Exception for inconsistent prediction and ground-truth inputs"""
    pass


class TrainingDivergedError(WhdSpotException):
    """Exception raised when the training loss stops being finite"""

    def __init__(self, epoch: int, last_good_epoch: int, message: str = ''):
        self.epoch = epoch
        self.last_good_epoch = last_good_epoch
        super().__init__(
            message or f"Loss became non-finite in epoch {epoch}; "
                       f"model restored to epoch {last_good_epoch}"
        )
