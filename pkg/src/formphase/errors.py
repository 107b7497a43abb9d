"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map error
families onto distinct process exit statuses.
"""


class FormPhaseError(Exception):
    exit_code = 1


# -- input / configuration -------------------------------------------------

class ConfigError(FormPhaseError, ValueError):
    exit_code = 2


class MissingLabels(FormPhaseError, ValueError):
    exit_code = 2


class MismatchedTimestamps(FormPhaseError, ValueError):
    exit_code = 2


# -- data does not support the requested fit -------------------------------

class DegenerateData(FormPhaseError, ValueError):
    exit_code = 3


class NoCirculation(FormPhaseError, ValueError):
    exit_code = 3


class Underdetermined(FormPhaseError, ValueError):
    exit_code = 3


class TooFewSamples(FormPhaseError, ValueError):
    exit_code = 3


class SegmentTooShort(FormPhaseError, ValueError):
    exit_code = 3


class TooFewSpikes(FormPhaseError, ValueError):
    exit_code = 3


# -- numerical failures ----------------------------------------------------

class IllConditioned(FormPhaseError, ArithmeticError):
    exit_code = 4


class NonFinite(FormPhaseError, ArithmeticError):
    exit_code = 4


# -- geometry ---------------------------------------------------------------

class OriginSingularity(FormPhaseError, ValueError):
    exit_code = 5


class NotInvertible(FormPhaseError, ValueError):
    exit_code = 5


class NonInvertibleAffine(FormPhaseError, ValueError):
    exit_code = 5


class BadShapeParameter(FormPhaseError, ValueError):
    exit_code = 5


class NotClosed(FormPhaseError, ValueError):
    exit_code = 5


class EmptyWindow(FormPhaseError, ValueError):
    exit_code = 6
