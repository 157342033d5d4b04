"""Exception types raised across patchnet."""


class PatchNetError(Exception):
    """Base class for all patchnet errors."""


class DimensionError(PatchNetError, ValueError):
    pass


class AuxInputError(PatchNetError, ValueError):
    """Auxiliary (position) input missing or of the wrong width."""


class WeightError(PatchNetError, ValueError):
    pass


class BuildError(PatchNetError, ValueError):
    pass


class FormatError(PatchNetError, ValueError):
    """A binary or text file does not have the expected layout."""


class VersionError(FormatError):
    pass


class DataError(PatchNetError, ValueError):
    pass


class BoundsError(PatchNetError, IndexError):
    pass


class ParameterError(PatchNetError, ValueError):
    pass


class MissingClassError(PatchNetError, KeyError):
    pass


class DegenerateEvalError(PatchNetError, ValueError):
    pass


class DivergenceError(PatchNetError, ArithmeticError):
    def __init__(self, iteration, loss):
        super().__init__(f"loss became {loss} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


class ConfigError(PatchNetError, ValueError):
    pass
