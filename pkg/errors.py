"""Exceptions raised by the pipeline stages."""


class PipelineError(ValueError):
    pass


# ingest
class MalformedLine(PipelineError):
    def __init__(self, line_no, reason=''):
        self.line_no = line_no
        self.reason = reason
        super(MalformedLine, self).__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class UnknownVariable(PipelineError):
    def __init__(self, name):
        self.name = name
        super(UnknownVariable, self).__init__(f"unknown variable {name!r}")


class LabelConflict(PipelineError):
    def __init__(self, patient_id, reason=''):
        self.patient_id = patient_id
        super(LabelConflict, self).__init__(f"patient {patient_id}: {reason}")


# preprocess / data
class SchemaMismatch(PipelineError):
    pass


class SingleClass(PipelineError):
    pass


class TooFewGroups(PipelineError):
    pass


# models
class EmptyData(PipelineError):
    pass


class EmptyNode(PipelineError):
    pass


class EmptySeries(PipelineError):
    pass


class EmptyModel(PipelineError):
    pass


# metrics
class LengthMismatch(PipelineError):
    pass


class NoPositives(PipelineError):
    pass


# selection
class DimensionMismatch(PipelineError):
    pass


class PointBelowReference(PipelineError):
    pass


class EmptyInput(PipelineError):
    pass


class EmptyReport(PipelineError):
    pass


# synth
class UnsupportedRegime(PipelineError):
    pass


# cli
class NoEligibleWindows(PipelineError):
    pass


class StageFailed(RuntimeError):
    """Raised by `util.stage` so the CLI can name the stage that broke."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super(StageFailed, self).__init__(f"stage '{stage}' failed: {cause}")
