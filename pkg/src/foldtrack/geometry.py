"""Domain boxes and normalized-coordinate helpers.

Continuation arithmetic runs in length-scale units (omega / l_omega,
A / l_A) so that a single scalar step size is meaningful regardless of the
physical units of a particular experiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned admissible region in physical (omega, A) coordinates."""

    omega_min: float
    omega_max: float
    A_min: float
    A_max: float

    def __post_init__(self):
        if not (np.isfinite(self.omega_min) and np.isfinite(self.omega_max)
                and np.isfinite(self.A_min) and np.isfinite(self.A_max)):
            raise ValueError("domain box bounds must be finite")
        if self.omega_min >= self.omega_max or self.A_min >= self.A_max:
            raise ValueError("domain box must have positive extent")

    def contains(self, omega: float, A: float) -> bool:
        return (self.omega_min <= omega <= self.omega_max
                and self.A_min <= A <= self.A_max)

    def clip(self, omega: float, A: float) -> tuple[float, float]:
        return (float(np.clip(omega, self.omega_min, self.omega_max)),
                float(np.clip(A, self.A_min, self.A_max)))

    def as_dict(self) -> dict:
        return {"omega_min": self.omega_min, "omega_max": self.omega_max,
                "A_min": self.A_min, "A_max": self.A_max}


def to_normalized(omega, A, hyper):
    """Physical (omega, A) -> length-scale units."""
    return omega / hyper.l_omega, A / hyper.l_A


def from_normalized(u, v, hyper):
    """Length-scale units -> physical (omega, A)."""
    return u * hyper.l_omega, v * hyper.l_A
