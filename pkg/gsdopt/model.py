from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

from gsdopt.errors import DesignValidationError

RATE_TOL = 1e-12


# -----------------------------
# Information rates
# -----------------------------
@dataclass(frozen=True)
class InformationRates:
    """Strictly increasing information fractions t_1 < ... < t_K = 1."""

    values: Tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise DesignValidationError("at least one information rate is required", "rates")
        if any(not np.isfinite(v) for v in vals):
            raise DesignValidationError("rates must be finite", "rates")
        if vals[0] <= 0.0:
            raise DesignValidationError("rates must be positive", "rates")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise DesignValidationError("rates not strictly increasing", "rates")
        if abs(vals[-1] - 1.0) > RATE_TOL:
            raise DesignValidationError("final rate must equal 1", "rates")
        object.__setattr__(self, "values", vals[:-1] + (1.0,))

    @classmethod
    def equal(cls, stages: int) -> "InformationRates":
        if stages < 1:
            raise DesignValidationError("stages must be >= 1", "stages")
        return cls(tuple((k + 1) / stages for k in range(stages)))

    @classmethod
    def from_interims(cls, interims: Iterable[float]) -> "InformationRates":
        return cls(tuple(interims) + (1.0,))

    @property
    def stages(self) -> int:
        return len(self.values)

    @property
    def interims(self) -> Tuple[float, ...]:
        return self.values[:-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __getitem__(self, k: int) -> float:
        return self.values[k]


# -----------------------------
# Stopping bounds
# -----------------------------
@dataclass(frozen=True)
class BoundarySet:
    """Per-stage Z-scale bounds.

    ``upper`` holds u_k. ``lower`` holds futility bounds l_k (with l_K = u_K)
    or None for efficacy-only designs. ``two_sided`` designs reject on
    |Z_k| >= u_k and carry no futility bounds.
    """

    upper: Tuple[float, ...]
    lower: Optional[Tuple[float, ...]] = None
    two_sided: bool = False

    def __post_init__(self):
        upper = tuple(float(u) for u in self.upper)
        object.__setattr__(self, "upper", upper)
        if self.lower is None:
            return
        if self.two_sided:
            raise DesignValidationError("futility bounds are not supported for two-sided tests",
                                        "futility")
        lower = tuple(float(v) for v in self.lower)
        if len(lower) != len(upper):
            raise DesignValidationError("lower and upper bounds differ in length", "bounds")
        lower = lower[:-1] + (upper[-1],)
        for k, (lo, hi) in enumerate(zip(lower[:-1], upper[:-1])):
            if not lo < hi:
                raise DesignValidationError(
                    f"futility bound crosses efficacy bound at stage {k + 1}", "bounds")
        object.__setattr__(self, "lower", lower)

    @property
    def stages(self) -> int:
        return len(self.upper)

    @property
    def has_futility(self) -> bool:
        return self.lower is not None

    def efficacy_only(self) -> "BoundarySet":
        return BoundarySet(self.upper, None, self.two_sided)

    def continuation(self, k: int) -> Tuple[float, float]:
        """Open interval of Z_k values that continue past stage k."""
        hi = self.upper[k]
        if self.two_sided:
            return -hi, hi
        if self.lower is not None:
            return self.lower[k], hi
        return -np.inf, hi

    def check_stages(self, rates: Sequence[float]) -> None:
        if len(rates) != self.stages:
            raise DesignValidationError(
                f"bounds have {self.stages} stages but rates have {len(rates)}", "bounds")
