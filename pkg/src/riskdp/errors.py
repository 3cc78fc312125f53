"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI reports it verbatim.
"""

from __future__ import annotations


class RiskDPError(ValueError):
    code = "RiskDPError"

    def __init__(self, detail: str = "", **payload):
        super().__init__(detail or self.code)
        self.detail = detail
        self.payload = payload


# measures
class LengthMismatchError(RiskDPError):
    code = "LengthMismatch"


class NegativeProbabilityError(RiskDPError):
    code = "NegativeProbability"


class MassNotOneError(RiskDPError):
    code = "MassNotOne"


class NonFiniteValueError(RiskDPError):
    code = "NonFiniteValue"


class EmptySampleError(RiskDPError):
    code = "EmptySample"


# risk
class AlphaOutOfRangeError(RiskDPError):
    code = "AlphaOutOfRange"


class TauOutOfRangeError(RiskDPError):
    code = "TauOutOfRange"


class EmptyAmbiguitySetError(RiskDPError):
    code = "EmptyAmbiguitySet"


class InvalidRiskSpecError(RiskDPError):
    code = "InvalidRiskSpec"


# nested
class InvalidTreeError(RiskDPError):
    code = "InvalidTree"


class LeafNodeError(RiskDPError):
    code = "LeafNode"


class MemberOutOfRangeError(RiskDPError):
    code = "MemberOutOfRange"


class ChildValueMissingError(RiskDPError):
    code = "ChildValueMissing"


class AmbiguousCandidatesError(RiskDPError):
    code = "AmbiguousCandidates"


class PathTableIncompleteError(RiskDPError):
    code = "PathTableIncomplete"


# saa
class KappaNotPositiveError(RiskDPError):
    code = "KappaNotPositive"


class DeltaOutOfRangeError(RiskDPError):
    code = "DeltaOutOfRange"


class EpsOutOfRangeError(RiskDPError):
    code = "EpsOutOfRange"


class ParameterRangeError(RiskDPError):
    code = "ParameterRange"


class NonpositiveLogArgumentError(RiskDPError):
    code = "NonpositiveLogArgument"


class BetaLRegimeError(RiskDPError):
    code = "BetaLRegime"


class GrowthViolatedError(RiskDPError):
    code = "GrowthViolated"


# soc / mdp
class InvalidModelError(RiskDPError):
    code = "InvalidModel"


class InfiniteHorizonModelError(RiskDPError):
    code = "InfiniteHorizonModel"


class FiniteHorizonModelError(RiskDPError):
    code = "FiniteHorizonModel"


class MaxIterExceededError(RiskDPError):
    code = "MaxIterExceeded"

    def __init__(self, detail: str = "", residuals=None, **payload):
        super().__init__(detail, **payload)
        self.residuals = list(residuals or [])


class UnresolvedAmbiguityError(RiskDPError):
    code = "UnresolvedAmbiguity"


class EnumerationTooLargeError(RiskDPError):
    code = "EnumerationTooLarge"


# saddle
class MatrixTooLargeError(RiskDPError):
    code = "MatrixTooLarge"


class InvalidMatrixError(RiskDPError):
    code = "InvalidMatrix"
