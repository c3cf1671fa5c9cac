"""Exception hierarchy.

Every domain failure derives from :class:`AcademiaError` so the CLI can map
it to exit code 1 with a single diagnostic line.
"""


class AcademiaError(Exception):
    """Base class for all domain errors."""


# canonical
class UnencodableValue(AcademiaError, TypeError):
    pass


class MalformedEncoding(AcademiaError, ValueError):
    pass


class UnknownAlgorithm(AcademiaError, ValueError):
    pass


class MalformedFingerprint(AcademiaError, ValueError):
    pass


# model
class InvalidReview(AcademiaError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid review")


class MalformedObject(AcademiaError, ValueError):
    """A canonical map does not describe the expected semantic object."""


# coe
class MalformedCoE(AcademiaError, ValueError):
    pass


class EmptyRound(AcademiaError):
    pass


# review_proc
class SpecInvalid(AcademiaError, ValueError):
    pass


class MissingAnonymizedVariant(AcademiaError, ValueError):
    pass


class MissingCoE(AcademiaError, ValueError):
    pass


class WrongPhase(AcademiaError):
    pass


class TargetMismatch(AcademiaError, ValueError):
    pass


class ProcessMismatch(AcademiaError, ValueError):
    pass


class TooEarly(AcademiaError):
    pass


# escrow
class PetitionTooSmall(AcademiaError, ValueError):
    pass


class PetitionerOnBoard(AcademiaError, ValueError):
    pass


class UnknownInvestigation(AcademiaError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NotYetExpired(AcademiaError):
    pass


class InvestigationClosed(AcademiaError):
    pass


class UnknownPseudonym(AcademiaError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EscrowLocked(AcademiaError):
    """Wrong passphrase or corrupted escrow file."""


# store
class SubmissionRefused(AcademiaError):
    pass


class NotOwner(AcademiaError):
    pass


class WrongMode(AcademiaError):
    pass


class MalformedFrame(AcademiaError, ValueError):
    pass


# query
class QueryPrivate(AcademiaError, PermissionError):
    pass


class UnknownQuery(AcademiaError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# harness
class UnknownScenario(AcademiaError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownTarget(AcademiaError, KeyError):
    def __str__(self):
        return Exception.__str__(self)
