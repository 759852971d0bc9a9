"""Exception hierarchy.

The CLI maps these onto exit codes: ``ValidationError`` (and plain bad
usage) exits 2, everything else raised from a run exits 3.
"""


class ShuffleTestError(Exception):
    """Base class for all package errors."""


class ValidationError(ShuffleTestError, ValueError):
    """Malformed input: bad permutation arrays, files, flags, priors."""


class NormalizerUnavailableError(ShuffleTestError, RuntimeError):
    """No normalizing-constant source for the requested statistic/theta."""


class DegenerateWeightsError(NormalizerUnavailableError):
    """Importance weights collapsed (effective sample size below the guard).

    Carries ``ess`` so callers can report how badly the proposal failed;
    the thermodynamic route does not share this failure mode.
    """

    def __init__(self, message, ess=None):
        super().__init__(message)
        self.ess = ess


class OutOfRangeError(ShuffleTestError, ValueError):
    """Query outside a normalizer table's grid."""


class DiagnosticError(ShuffleTestError, RuntimeError):
    """A sampler aborted on its own diagnostics."""
