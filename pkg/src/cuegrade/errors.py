"""Exception hierarchy shared across the pipeline."""


class CueGradeError(Exception):
    """Base class for all package errors."""


class ValidationError(CueGradeError):
    """Malformed input data, schema violations, or broken invariants (CLI exit 2)."""


class FormatVersionError(ValidationError):
    """Artifact file carries an unknown format version."""


class AlignmentError(ValidationError):
    """External annotation layer does not tile the answer text."""


class MissingArtifactError(ValidationError):
    """A pipeline stage prerequisite file does not exist."""

    def __init__(self, path, stage_hint=""):
        self.path = str(path)
        hint = f" (produce it with `{stage_hint}` first)" if stage_hint else ""
        super().__init__(f"missing prerequisite artifact: {self.path}{hint}")
