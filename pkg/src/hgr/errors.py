"""Semantic exception hierarchy shared across the package."""


class HgrError(Exception):
    """Base class for all errors raised by this package."""


class NegativeEntry(HgrError):
    """A probability table contains a negative entry."""


class AllZero(HgrError):
    """A probability table has no positive entry."""


class SupportViolation(HgrError):
    """A distribution puts mass where the reference distribution has none."""


class NonStrictDistribution(HgrError):
    """An operation requiring strictly positive marginals got a distribution with
    a zero-probability symbol."""


class NotOrthonormal(HgrError):
    """A matrix expected to have orthonormal columns does not."""


class DegenerateTopGap(HgrError):
    """The top two singular values coincide, so the requested bound is undefined."""


class DegenerateGap(HgrError):
    """sigma_k equals sigma_{k+1} under the gap tolerance; the spectral-norm path
    does not apply and the caller must use the iterative solver."""


class IndexOutOfRange(HgrError):
    """A singular-value or dimension index lies outside its valid range."""


class SingularCovariance(HgrError):
    """A feature covariance collapsed below the invertibility floor."""


class MaxItersExceeded(HgrError):
    """An iterative routine ran out of iterations before converging."""


class BadRange(HgrError):
    """A numeric parameter lies outside its documented range."""


class EmptyRange(HgrError):
    """No grid point satisfies the requested selection criterion."""


class AlphabetTooLarge(HgrError):
    """The dense |X||Y| x |X||Y| construction is capped; the alphabet is too big."""
