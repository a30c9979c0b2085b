"""Error taxonomy shared across the package.

Two families matter for callers (and map onto CLI exit codes):

* :class:`ModelError` -- the input data or model declarations are invalid
  (wrong shapes, violated preconditions, malformed config).  Exit code 3.
* :class:`NumericsError` -- the inputs were legal but a numerical procedure
  failed (search exhausted, iteration diverged, certification impossible to
  establish).  Exit code 2.

A *failed* certificate is not an error: pipelines return a report whose
``passed`` flag is false, and the CLI exits with code 1.
"""


class ModelError(ValueError):
    """Invalid input or violated model declaration."""


class HypothesisViolation(ModelError):
    """A stated mathematical hypothesis of a pipeline does not hold."""


class ConfigError(ModelError):
    """Malformed run configuration.  Collects every validation problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class NumericsError(RuntimeError):
    """A numerical procedure failed to produce a usable answer."""


class SearchExhausted(NumericsError):
    """A bounded parameter scan ended without a hit (e.g. kMax too small)."""


class NonConvergence(NumericsError):
    """An iteration hit its budget before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepFailure(NumericsError):
    """A damped step could not be made acceptable at any admissible length."""


class ConsistencyFailure(NumericsError):
    """An internal cross-check (redundant identity) disagreed: solver bug signal."""


class PipelineFailure(NumericsError):
    """A multi-stage certification pipeline failed; names the stage/region."""

    def __init__(self, message, region=None, worst_point=None):
        super().__init__(message)
        self.region = region
        self.worst_point = worst_point
