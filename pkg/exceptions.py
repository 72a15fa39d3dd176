"""
Error hierarchy
Each family maps to one CLI exit code (see app.py)
"""


class NeuceptError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(NeuceptError, ValueError):
    """Invalid run configuration or command-line usage"""


class DataError(NeuceptError, ValueError):
    """Malformed or inconsistent input data"""


class TraceError(DataError):
    """Activation trace files or trace invariants are violated"""


class NumericalError(NeuceptError, ArithmeticError):
    """A numerical step failed (non-PD covariance, Cholesky, degenerate likelihood)"""
