"""Beam profile and plate dimensions of a single unit cell.

Lengths are in millimetres throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class BeamProfile:
    """Cosine-shaped curved beam, ``B(s) = h/2 * (1 - cos(2 pi s / l))``."""

    h: float = 8.0
    l: float = 18.0
    s_max: float = 9.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"apex height must be positive, got {self.h}")
        if not self.l > 0:
            raise ValueError(f"wavelength must be positive, got {self.l}")
        if not 0 < self.s_max <= self.l:
            raise ValueError(f"s_max must lie in (0, l], got {self.s_max}")


@dataclass(frozen=True)
class CellGeometry:
    beam: BeamProfile = field(default_factory=BeamProfile)
    thickness: float = 7.0  # out-of-plane depth

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError(f"thickness must be positive, got {self.thickness}")


@dataclass(frozen=True)
class PlateGeometry:
    """Sensor plates and the two gap states of the cell they sit in."""

    width: float = 3.8
    height: float = 7.3
    plate_thickness: float = 0.4
    gap_closed: float = 0.5
    gap_open: float = 15.3

    def __post_init__(self):
        for name in ("width", "height", "plate_thickness", "gap_closed", "gap_open"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.gap_open > self.gap_closed:
            raise ValueError(
                f"gap_open ({self.gap_open}) must exceed gap_closed ({self.gap_closed})"
            )

    @property
    def area(self) -> float:
        """Plate overlap area in mm^2."""
        return self.width * self.height

    @property
    def stroke(self) -> float:
        return self.gap_open - self.gap_closed


def beam_profile(profile: BeamProfile, s: float) -> float:
    if not 0.0 <= s <= profile.s_max:
        raise ValueError(f"s={s} outside [0, {profile.s_max}]")
    return 0.5 * profile.h * (1.0 - math.cos(2.0 * math.pi * s / profile.l))


def sample_profile(profile: BeamProfile, n: int) -> list[tuple[float, float]]:
    """Return ``n`` evenly spaced ``(s, B(s))`` pairs over ``[0, s_max]``."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    step = profile.s_max / (n - 1)
    points = []
    for k in range(n):
        # pin the last sample to s_max so rounding never leaves the domain
        s = profile.s_max if k == n - 1 else k * step
        points.append((s, beam_profile(profile, s)))
    return points


def cell_stroke(plates: PlateGeometry) -> float:
    """Distance between the two stable states, taken as the plate travel."""
    return plates.stroke
