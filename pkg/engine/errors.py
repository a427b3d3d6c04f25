"""
Error types raised by the pipeline modules
"""

from typing import Optional


class PipelineError(Exception):
    """Base class; the CLI maps it to `<name>: <message>` and `exit_code`"""

    exit_code = 1

    @property
    def name(self) -> str:
        return type(self).__name__


class ConfigError(PipelineError):
    """Invalid generator configuration"""

    exit_code = 2


class InvalidConfig(PipelineError):
    """Invalid fit / selection / recommend configuration"""

    exit_code = 2


class PlanError(PipelineError):
    """Invalid or unsatisfiable search plan"""

    exit_code = 2


class InvalidInput(PipelineError):
    """Input values violate an operation's precondition"""


class IoError(PipelineError):
    """Dataset or model file cannot be read or written"""


class ParseError(PipelineError):
    """Malformed line in a dataset file"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateTrackId(PipelineError):
    def __init__(self, track_id: str):
        self.track_id = track_id
        super().__init__(f"duplicate track_id {track_id!r}")


class SchemaError(PipelineError):
    """CSV header is missing required columns"""


class EmptyDataset(PipelineError):
    pass


class AllFeaturesDropped(PipelineError):
    pass


class DegenerateFeature(PipelineError):
    def __init__(self, feature: str, reason: str = "zero variance"):
        self.feature = feature
        super().__init__(f"feature {feature!r} cannot be scaled: {reason}")


class TooFewPoints(PipelineError):
    pass


class SchemaMismatch(PipelineError):
    pass


class SingleCluster(PipelineError):
    pass


class UnknownCluster(PipelineError):
    def __init__(self, cluster: int, k: int):
        self.cluster = cluster
        super().__init__(f"cluster {cluster} is not in [0, {k})")


class UnknownTrack(PipelineError):
    def __init__(self, track_id: str):
        self.track_id = track_id
        super().__init__(f"unknown track_id {track_id!r}")


class IndexMismatch(PipelineError):
    """ClusterIndex was built from a different model"""


class ModelFormatError(PipelineError):
    pass
