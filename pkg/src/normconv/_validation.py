import math

import numpy as np

from .errors import HurstOutOfRange, InvalidParameter, NonPositiveParameter


def check_positive(name, value, error=NonPositiveParameter):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise error(f"{name} must be positive and finite, got {value!r}")
    return value


def check_nonnegative(name, value):
    value = float(value)
    if not (value >= 0 and math.isfinite(value)):
        raise InvalidParameter(f"{name} must be >= 0, got {value!r}")
    return value


def check_hurst(H, allow_half=True):
    H = float(H)
    if not 0.0 < H < 1.0:
        raise HurstOutOfRange(f"Hurst index must lie in (0, 1), got {H!r}")
    if not allow_half and H == 0.5:
        raise HurstOutOfRange("Hurst index 1/2 is excluded here")
    return H


def check_count(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise InvalidParameter(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def as_finite_array(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidParameter(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} contains non-finite values")
    return arr
