"""Exception hierarchy.

Every error raised by the library derives from :class:`CavityError`, which
carries a short machine-readable ``code`` used by the command line front end.
"""


class CavityError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class DegreeTooLarge(CavityError):
    code = "degree_too_large"


class ConvergenceFailure(CavityError):
    code = "convergence_failure"


class PoleEvaluation(CavityError):
    code = "pole_evaluation"


class AxisEvaluation(CavityError):
    code = "axis_evaluation"


class DegenerateJacobian(CavityError):
    code = "degenerate_jacobian"


class OrientationReversing(CavityError):
    code = "orientation_reversing"


class InverseNotConverged(CavityError):
    code = "inverse_not_converged"


class CutoffTooLow(CavityError):
    code = "cutoff_too_low"


class QuadratureInsufficient(CavityError):
    code = "quadrature_insufficient"


class FactorizationFailure(CavityError):
    code = "factorization_failure"


class GramNotIdentity(CavityError):
    code = "gram_not_identity"


class IncompleteEigenspace(CavityError):
    code = "incomplete_eigenspace"


class UnmatchedEigenvalue(CavityError):
    code = "unmatched_eigenvalue"


class BranchAmbiguity(CavityError):
    code = "branch_ambiguity"


class IoFailure(CavityError):
    code = "io_failure"


class ConfigInvalid(CavityError):
    code = "config_invalid"

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key

    def to_dict(self):
        d = super().to_dict()
        d["key"] = self.key
        return d
