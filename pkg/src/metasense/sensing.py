"""Parallel-plate sensor model with parasitic offset and channel cross-coupling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from metasense.geometry import PlateGeometry
from metasense.mechanics import ChainState

EPS0 = 8.8541878128e-12  # F/m
G_MIN = 0.1  # mm, vinyl layer keeps the plates apart


@dataclass(frozen=True)
class SensorFrame:
    capacitance: np.ndarray  # pF, one entry per channel
    step_index: int = 0


@dataclass(frozen=True)
class CapacitorModel:
    """Channel capacitance model.

    ``coupling`` may be given as a full matrix; otherwise a uniform
    off-diagonal factor ``alpha`` is used for every channel pair.

    ``gap_floor`` is the smallest plate gap the cell can reach.  By default
    it is the closed-state gap: compressing a closed cell further presses
    the plates onto their spacer instead of bringing them closer.
    """

    plates: PlateGeometry = field(default_factory=PlateGeometry)
    eps_r: float = 1.0
    parasitic: float = 0.05  # pF
    alpha: float = 0.02
    coupling: np.ndarray | None = None
    gap_floor: float | None = None  # mm, None -> plates.gap_closed

    def __post_init__(self):
        if self.gap_floor is None:
            object.__setattr__(self, "gap_floor", self.plates.gap_closed)
        if not G_MIN <= self.gap_floor <= self.plates.gap_open:
            raise ValueError(f"gap_floor must lie in [{G_MIN}, gap_open], got {self.gap_floor}")
        if self.eps_r < 1.0:
            raise ValueError(f"eps_r must be >= 1, got {self.eps_r}")
        if self.parasitic < 0.0:
            raise ValueError(f"parasitic capacitance must be >= 0, got {self.parasitic}")
        if not 0.0 <= self.alpha <= 0.2:
            raise ValueError(f"alpha must lie in [0, 0.2], got {self.alpha}")
        if self.coupling is not None:
            m = np.asarray(self.coupling, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("coupling must be a square matrix")
            if not np.allclose(np.diag(m), 1.0):
                raise ValueError("coupling diagonal must be 1")
            off = m[~np.eye(len(m), dtype=bool)]
            if np.any(off < 0.0) or np.any(off > 0.2):
                raise ValueError("off-diagonal coupling must lie in [0, 0.2]")
            object.__setattr__(self, "coupling", m)

    def coupling_matrix(self, n: int) -> np.ndarray:
        if self.coupling is None:
            m = np.full((n, n), self.alpha)
            np.fill_diagonal(m, 1.0)
            return m
        if self.coupling.shape != (n, n):
            raise ValueError(f"coupling is {self.coupling.shape}, chain has {n} cells")
        return self.coupling


def gap_from_displacement(plates: PlateGeometry, x, floor: float = G_MIN):
    """Plate gap in mm for cell elongation ``x``, never below ``floor``."""
    return np.maximum(plates.gap_closed + np.asarray(x, dtype=float), floor)


def plate_capacitance(cm: CapacitorModel, gap):
    """Ideal parallel-plate capacitance in pF (no fringing)."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap < G_MIN - 1e-12):
        raise ValueError(f"gap below the {G_MIN} mm floor")
    # mm^2 / mm -> m, F -> pF
    c = EPS0 * cm.eps_r * cm.plates.area / gap * 1e-3 * 1e12
    return float(c) if c.ndim == 0 else c


def ideal_capacitance(cm: CapacitorModel, x):
    return plate_capacitance(cm, gap_from_displacement(cm.plates, x, cm.gap_floor))


def channel_capacitance(cm: CapacitorModel, x: np.ndarray) -> np.ndarray:
    """Measured channel values for displacements ``x`` of shape (..., N)."""
    x = np.asarray(x, dtype=float)
    ideal = np.asarray(ideal_capacitance(cm, x))
    return ideal @ cm.coupling_matrix(x.shape[-1]).T + cm.parasitic


def sensor_frame(cm: CapacitorModel, state: ChainState, step_index: int = 0) -> SensorFrame:
    return SensorFrame(channel_capacitance(cm, np.asarray(state.x)), step_index)
