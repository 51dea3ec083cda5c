class DHCNError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(DHCNError, ValueError):
    pass


class ContractError(DHCNError, ValueError):
    """A precondition of an operation was violated."""


class ParseError(DHCNError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class EmptyDatasetError(DHCNError, ValueError):
    pass


class EmptyHypergraphError(DHCNError, ValueError):
    pass


class DivergenceError(DHCNError, RuntimeError):
    pass


class FormatError(DHCNError, ValueError):
    """A binary dataset or checkpoint file is malformed or incompatible."""
