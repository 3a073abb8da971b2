"""Input validation helpers shared by the codec, simulator and estimators."""

import numbers

import numpy as np

from .exceptions import InvalidInputError


def check_batch(values, *, bounded=True):
    """Return ``values`` as a 1-D float64 array of even length >= 2.

    With ``bounded`` the values must also be utilisation fractions in [0, 1].
    """
    u = np.asarray(values, dtype=np.float64)
    if u.ndim != 1:
        raise InvalidInputError(f"batch must be 1-D, got shape {u.shape}")
    n = u.shape[0]
    if n < 2 or n % 2:
        raise InvalidInputError(f"batch length must be even and >= 2, got {n}")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("batch contains non-finite values")
    if bounded and (u.min() < 0.0 or u.max() > 1.0):
        raise InvalidInputError("batch values must lie in [0, 1]")
    return u


def check_even_length(n, name="n"):
    if not isinstance(n, numbers.Integral) or n < 2 or n % 2:
        raise InvalidInputError(f"{name} must be an even integer >= 2, got {n!r}")
    return int(n)


def check_fraction(value, name, *, low_open=True):
    """Validate a threshold in (0, 1] (or [0, 1] with ``low_open=False``)."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidInputError(f"{name} must be a finite real, got {value!r}")
    lo_ok = value > 0.0 if low_open else value >= 0.0
    if not lo_ok or value > 1.0:
        raise InvalidInputError(f"{name} must lie in (0, 1], got {value!r}")
    return float(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_utilisation(value):
    v = float(value)
    if not np.isfinite(v):
        raise InvalidInputError(f"observation must be finite, got {value!r}")
    if v < 0.0 or v > 1.0:
        raise InvalidInputError(f"observation must lie in [0, 1], got {value!r}")
    return v
