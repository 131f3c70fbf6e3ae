"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
malformed or inconsistent data with 3, numerical failures with 4.
"""


class CavityPairsError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CavityPairsError, ValueError):
    """Invalid run configuration (unknown key, bad value, bad geometry)."""

    exit_code = 2

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class UnstableCavityError(ConfigError):
    """Resonator geometry outside the plano-concave stability range."""


class DataError(CavityPairsError, ValueError):
    """Input data violates a format or ordering invariant."""

    exit_code = 3


class TagFormatError(DataError):
    """Corrupt or inconsistent time-tag file; ``offset`` is a byte offset."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class UnsortedStreamError(DataError):
    """Time tags not in nondecreasing order; ``index`` is the first violation."""

    def __init__(self, message, index):
        self.index = index
        super().__init__(f"{message} (first violation at index {index})")


class NoPeakError(DataError):
    """Histogram has no identifiable coincidence peak."""


class NumericalError(CavityPairsError, ArithmeticError):
    exit_code = 4


class FitConvergenceError(NumericalError):
    """Iterative fit did not converge; carries the last weighted residual."""

    def __init__(self, message, last_residual):
        self.last_residual = last_residual
        super().__init__(f"{message} (last chi-square {last_residual:.6g})")


class UncompensatableError(NumericalError):
    """No control offset brings the energy mismatch within one linewidth."""
