"""LC-resonance capacitance-to-digital conversion.

The sensor sits in parallel with a fixed board capacitance in an LC tank;
the converter reports the tank frequency as a fraction of a reference clock
scaled to ``bits`` bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConverterConfig:
    L: float = 18.0  # uH
    C_board: float = 33.0  # pF
    f_ref: float = 40.0  # MHz
    bits: int = 28
    noise_sigma: float = 0.001  # pF
    sample_rate: float = 100.0  # frames per second
    seed: int = 0

    def __post_init__(self):
        for name in ("L", "C_board", "f_ref", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.bits != 28:
            raise ValueError(f"converter output is 28 bits wide, got {self.bits}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def full_scale(self) -> int:
        return 1 << self.bits


def resonant_frequency(cc: ConverterConfig, C):
    """Tank frequency in MHz for sensor capacitance ``C`` in pF."""
    total = (np.asarray(C, dtype=float) + cc.C_board) * 1e-12
    return 1.0 / (2.0 * math.pi * np.sqrt(cc.L * 1e-6 * total)) * 1e-6


def capacitance_to_code(cc: ConverterConfig, C):
    ratio = resonant_frequency(cc, C) / cc.f_ref
    ratio = np.clip(ratio, 0.0, 1.0 - 2.0 ** -cc.bits)
    code = np.rint(ratio * cc.full_scale).astype(np.int64)
    return int(code) if code.ndim == 0 else code


def code_to_capacitance(cc: ConverterConfig, code):
    code = np.asarray(code)
    if np.any(code <= 0) or np.any(code >= cc.full_scale):
        raise ValueError("code must lie strictly between 0 and full scale")
    f = code.astype(float) / cc.full_scale * cc.f_ref * 1e6
    C = 1.0 / ((2.0 * math.pi * f) ** 2 * cc.L * 1e-6) * 1e12 - cc.C_board
    return float(C) if C.ndim == 0 else C


def code_sensitivity(cc: ConverterConfig, C: float) -> float:
    """Analytic ``d code / d C`` in codes per pF (negative)."""
    ratio = resonant_frequency(cc, C) / cc.f_ref
    return -0.5 * ratio * cc.full_scale / (C + cc.C_board)


def acquire(cc: ConverterConfig, capacitance, rng: np.random.Generator | None = None):
    """Digitize channel capacitances (any shape) with additive Gaussian noise."""
    C = np.asarray(capacitance, dtype=float)
    if cc.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cc.seed)
        C = C + rng.normal(0.0, cc.noise_sigma, size=C.shape)
    return capacitance_to_code(cc, np.maximum(C, 0.0))
