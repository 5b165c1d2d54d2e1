"""Exception hierarchy shared by every nstlab module."""


class NstlabError(Exception):
    pass


class DimensionError(NstlabError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(NstlabError, ValueError):
    """An input lies outside the numeric domain of an operation (e.g. log of a non-positive value)."""


class ContractError(NstlabError, ValueError):
    """A precondition on call structure was violated."""


class MissingLeafError(NstlabError, KeyError):
    pass


class ConfigError(NstlabError, ValueError):
    pass


class EmptyPairPoolError(NstlabError, ValueError):
    pass


class ParseError(NstlabError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelDomainError(NstlabError, ValueError):
    pass


class DegenerateEmbeddingError(NstlabError, ValueError):
    pass
