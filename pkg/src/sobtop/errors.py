"""Exception hierarchy.

ValidationError covers bad configuration before any numerics run (CLI exit
code 2); everything else derives from ComputationError (exit code 3).
"""


class SobtopError(Exception):
    pass


class ValidationError(SobtopError):
    pass


class ComputationError(SobtopError):
    pass


class NonDivisibleEta(ValidationError):
    pass


class DegenerateBox(ValidationError):
    pass


class GridTooCoarse(ValidationError):
    pass


class UnknownBuiltin(ValidationError):
    pass


class OutsideTubularNeighborhood(ComputationError):
    def __init__(self, node, deviation):
        self.node = tuple(int(i) for i in node)
        self.deviation = float(deviation)
        super().__init__(f"node {self.node} is {self.deviation:.3g} away from the target sphere")


class NonzeroHolonomy(ComputationError):
    def __init__(self, loop):
        self.loop = loop
        super().__init__(f"phase unwrapping inconsistent around {loop}")


class CurveHitsSingularSet(ComputationError):
    pass


class NonSummable(ComputationError):
    pass


class NoAdmissibleTranslate(ComputationError):
    pass


class Undersampled(ComputationError):
    pass


class SolverDivergence(ComputationError):
    pass


class NonClosedForm(ComputationError):
    pass


class NonRegularValue(ComputationError):
    pass


class InsufficientAdmissibleDisks(ComputationError):
    def __init__(self, found, needed):
        self.found = found
        self.needed = needed
        super().__init__(f"only {found} admissible disks (need {needed}); detector budget too tight")


class PsiTooSteep(ComputationError):
    pass


class AdmissibilityViolation(ValidationError):
    pass


class NoRoot(ComputationError):
    pass


class LiftFailure(ComputationError):
    pass


class StageError(ComputationError):
    """Wraps a failure inside runPipeline with the offending stage name."""

    def __init__(self, stage, params, cause):
        self.stage = stage
        self.params = params
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause!r} (params {params})")
