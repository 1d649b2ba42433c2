"""Exception hierarchy shared by every module of the package."""


class MvAssocError(Exception):
    """Base class for all package errors."""


class MonomorphicVariant(MvAssocError):
    """Genotype vector has zero variance after centering."""


class DegenerateTraits(MvAssocError):
    """Trait cross-product (or error SSCP) matrix is singular."""


class DegenerateDistribution(MvAssocError):
    """Quadratic-form law has no positive eigenvalue."""


class NumericalFailure(MvAssocError):
    """Root finding or quadrature did not converge."""


class SingularCovariates(MvAssocError):
    """Covariate design is rank deficient."""


class InvalidDesign(MvAssocError):
    """Simulation design cannot be realised (e.g. non-PD correlation)."""


class ParseError(MvAssocError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class SchemaError(ParseError):
    """Files are individually well formed but disagree with each other."""


class ConfigError(MvAssocError):
    """Invalid run or experiment configuration."""
