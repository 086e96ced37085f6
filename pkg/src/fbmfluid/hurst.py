"""Validated Hurst exponent and the constants that depend on it."""
import math
from dataclasses import dataclass
from functools import cached_property

from scipy.special import beta as _beta_fn

from .errors import DomainError


@dataclass(frozen=True)
class HurstParam:
    """Hurst exponent restricted to the open interval (1/2, 1)."""

    value: float

    def __post_init__(self):
        h = self.value
        if isinstance(h, HurstParam):
            h = h.value
        try:
            h = float(h)
        except (TypeError, ValueError):
            raise DomainError(f"Hurst exponent must be a real number, got {self.value!r}") from None
        if not math.isfinite(h) or not (0.5 < h < 1.0):
            raise DomainError(
                f"Hurst exponent must lie strictly inside (1/2, 1), got {h}"
            )
        object.__setattr__(self, "value", h)

    def __float__(self):
        return self.value

    @property
    def alpha_H(self):
        """H(2H - 1), the constant in front of |t - s|^(2H-2)."""
        h = self.value
        return h * (2.0 * h - 1.0)

    @cached_property
    def dK_constant(self):
        """Constant c with dK/dt = c (t-s)^(H-3/2) (s/t)^(1/2-H)."""
        h = self.value
        return math.sqrt(h * (2.0 * h - 1.0) / _beta_fn(2.0 - 2.0 * h, h - 0.5))

    @property
    def c_H(self):
        """Prefactor c_H of the kernel, equal to dK_constant / (H - 1/2)."""
        return self.dK_constant / (self.value - 0.5)


def as_hurst(h):
    """Coerce a float or HurstParam into a HurstParam."""
    return h if isinstance(h, HurstParam) else HurstParam(h)
