"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI and the
JSON reports can name the failure without parsing messages.
"""


class EntropicError(ValueError):
    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class InvalidResolution(EntropicError):
    code = "invalid-resolution"


class InvalidWeight(EntropicError):
    code = "invalid-weight"


class InvalidMeasure(EntropicError):
    code = "invalid-measure"


class DisconnectedSpace(EntropicError):
    code = "disconnected-space"


class SpaceTooLarge(EntropicError):
    code = "space-too-large"


class BackendUnsupported(EntropicError):
    code = "backend-unsupported"


class InvalidTime(EntropicError):
    code = "invalid-time"


class DecompositionFailed(EntropicError):
    code = "decomposition-failed"


class InvalidEpsilon(EntropicError):
    code = "invalid-epsilon"


class InvalidDensity(EntropicError):
    code = "invalid-density"


class NoConvergence(EntropicError):
    code = "no-convergence"

    def __init__(self, message, residual=None, iterations=None, **details):
        super().__init__(message, **details)
        self.residual = residual
        self.iterations = iterations


class ZeroDensityAtEndpoint(EntropicError):
    code = "zero-density-at-endpoint"


class ProblemTooLarge(EntropicError):
    code = "problem-too-large"


class Infeasible(EntropicError):
    code = "infeasible"


class InvalidPotential(EntropicError):
    code = "invalid-potential"


class InvalidGrid(EntropicError):
    code = "invalid-grid"


class PositivityViolated(EntropicError):
    code = "positivity-violated"


class InvalidSweep(EntropicError):
    code = "invalid-sweep"


class InvalidInput(EntropicError):
    code = "invalid-input"


class InvalidPairing(EntropicError):
    code = "invalid-pairing"


class ConfigError(EntropicError):
    code = "config-error"
