"""Input validation helpers shared by the estimators and the CLI."""

import numbers

from sklearn.utils import check_scalar


def check_fraction(value, name):
    """Return ``value`` as a float in the half-open interval (0, 1]."""
    return float(
        check_scalar(value, name, numbers.Real, min_val=0.0, max_val=1.0, include_boundaries="right")
    )


def check_nonnegative(value, name):
    return float(check_scalar(value, name, numbers.Real, min_val=0.0))


def check_count(value, name, min_val=0):
    return int(check_scalar(value, name, numbers.Integral, min_val=min_val))


def check_optional_count(value, name, min_val=0):
    if value is None:
        return None
    return check_count(value, name, min_val=min_val)


def check_open_unit(value, name):
    """Return ``value`` as a float strictly inside (0, 1)."""
    return float(
        check_scalar(value, name, numbers.Real, min_val=0.0, max_val=1.0, include_boundaries="neither")
    )


def check_seed(seed):
    if seed is None:
        return 0
    return check_count(seed, "seed")
