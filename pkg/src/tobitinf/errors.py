"""Exception hierarchy.

Every library error carries a machine-readable ``code`` and an exit status
category used by the command-line front end (3 = data, 4 = numerical).
"""


class TobitError(Exception):
    code = "error"
    exit_status = 4


class DataError(TobitError, ValueError):
    code = "data_error"
    exit_status = 3


class NumericalError(TobitError, ArithmeticError):
    code = "numerical_error"
    exit_status = 4


class ParseError(DataError):
    code = "parse_error"


class InvariantViolation(DataError):
    code = "invariant_violation"


class AllSameLabel(DataError):
    code = "all_same_label"


class TooFewUncensored(DataError):
    code = "too_few_uncensored"


class RankDeficient(NumericalError):
    code = "rank_deficient"


class Separation(NumericalError):
    code = "separation"


class NonPositiveVariance(NumericalError):
    code = "non_positive_variance"


class NonPDCovariance(NumericalError):
    code = "non_pd_covariance"


class DegenerateTruncation(NumericalError):
    code = "degenerate_truncation"


class DegenerateDirection(NumericalError):
    code = "degenerate_direction"


class InfeasibleObservation(DataError):
    code = "infeasible_observation"


class BracketFailure(NumericalError):
    """Root bracketing failed; ``half_width`` records the last bracket tried."""

    code = "bracket_failure"

    def __init__(self, message, half_width=None):
        super().__init__(message)
        self.half_width = half_width


class TooManyFailures(NumericalError):
    code = "too_many_failures"


class AcceptanceTooLow(NumericalError):
    code = "acceptance_too_low"

    def __init__(self, message, rate=None):
        super().__init__(message)
        self.rate = rate
