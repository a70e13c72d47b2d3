"""Exception types shared by the package. The CLI maps them to exit codes."""


class ValidationError(ValueError):
    """Bad user input: parameters out of range, malformed specs, unknown keys."""
    exit_code = 2


class CapacityError(RuntimeError):
    """Requested problem exceeds the configured size budget."""
    exit_code = 3


class SolverError(RuntimeError):
    """Eigensolver or sampler failed to converge."""
    exit_code = 4
