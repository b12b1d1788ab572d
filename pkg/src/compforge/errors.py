"""Exception hierarchy shared across the toolkit."""


class ForgeError(Exception):
    """Base class for every error raised by compforge."""


class ValidationError(ForgeError):
    """Bad input or configuration; the CLI maps these to exit code 2."""


class InvalidAtom(ValidationError):
    pass


class GraphError(ValidationError):
    pass


class EmptyParse(ForgeError):
    pass


class AlignmentError(ValidationError):
    pass


class RecordError(ForgeError):
    pass


class GraphTooSmall(ForgeError):
    pass


class WalkFailed(ForgeError):
    pass


class EmptyGraph(ForgeError):
    pass


class ConfigError(ValidationError):
    pass


class NoFoilAvailable(ForgeError):
    pass


class PreconditionError(ValidationError):
    pass


class InsufficientData(ForgeError):
    pass


class ScoreCoverageError(ForgeError):
    def __init__(self, query_id: str, candidate_id: str):
        super().__init__(f"no score for pair ({query_id!r}, {candidate_id!r})")
        self.query_id = query_id
        self.candidate_id = candidate_id
