"""Exception hierarchy shared by all modules."""


class BranchcatError(Exception):
    pass


class ModelError(BranchcatError, ValueError):
    """Invalid model parameters. ``key`` names the offending parameter path."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class ConfigError(BranchcatError, ValueError):
    """Malformed run configuration (unknown key, missing section, bad value)."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key:
            where += f"{key}"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}" if where else message)
        self.key = key
        self.line = line


class DomainError(BranchcatError, ValueError):
    pass


class InfiniteMoment(DomainError):
    pass


class QuadratureError(BranchcatError, ArithmeticError):
    pass


class NoRoot(BranchcatError, ArithmeticError):
    pass


class NonFiniteState(BranchcatError, FloatingPointError):
    def __init__(self, message, path_index=None):
        super().__init__(message if path_index is None else f"path {path_index}: {message}")
        self.path_index = path_index


class TooFewSurvivors(BranchcatError, ValueError):
    pass


class AllAbsorbed(BranchcatError, ValueError):
    pass
