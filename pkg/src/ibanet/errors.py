class IbaNetError(Exception):
    pass


class DimensionError(IbaNetError):
    pass


class ParameterError(IbaNetError, ValueError):
    pass


class ContractError(IbaNetError):
    pass


class NumericalError(IbaNetError, ArithmeticError):
    def __init__(self, msg: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(msg)
        self.epoch = epoch
        self.batch = batch


class DataError(IbaNetError):
    pass


class ParseError(DataError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class ConfigError(IbaNetError):
    def __init__(self, msg: str, key: str | None = None):
        super().__init__(msg)
        self.key = key
