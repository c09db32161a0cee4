"""Proprioception pipeline: recover the deployment order from sensor signals.

The pipeline is normalize -> smooth -> derivative -> peak detection, followed
by a cross-channel winner-takes-all reduction.  It runs offline on a whole
series (one loading stroke at a time).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import find_peaks

from metasense.mechanics import Direction, TransitionEvent


class DegenerateChannelError(ValueError):
    """Raised when a channel is constant and cannot be min-max normalized."""

    def __init__(self, channels: list[int]):
        self.channels = list(channels)
        ids = ", ".join(str(c) for c in self.channels)
        super().__init__(f"constant channel(s) cannot be normalized: {ids}")


@dataclass(frozen=True)
class SignalSet:
    """Per-channel series of shape (steps, N) with the imposed displacement.

    Channel ids are 1-based in every public result; ``values[:, i]`` is
    channel ``i + 1``.
    """

    values: np.ndarray
    X: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("values must be a (steps, channels) array")
        if v.shape[0] < 3:
            raise ValueError(f"need at least 3 samples, got {v.shape[0]}")
        object.__setattr__(self, "values", v)
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if X.shape != (v.shape[0],):
                raise ValueError("X must have one entry per step")
            object.__setattr__(self, "X", X)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "SignalSet":
        return SignalSet(values, self.X)


@dataclass(frozen=True)
class DetectionConfig:
    """Parameters of the peak detector.

    ``polarity`` selects which signal change marks a deployment: ``-1``
    looks for falling capacitance (the plates separate), ``+1`` for rising
    values (e.g. when the converter codes are analyzed directly).
    ``refractory`` defaults to ``2 * window``.
    """

    window: int = 1
    threshold: float = 0.3
    refractory: int | None = None
    polarity: int = -1

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.polarity not in (-1, 1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity}")
        if self.refractory is None:
            object.__setattr__(self, "refractory", 2 * self.window)
        if self.refractory < 1:
            raise ValueError(f"refractory gap must be >= 1, got {self.refractory}")


@dataclass(frozen=True)
class DetectedEvent:
    cell_id: int
    step_index: int
    magnitude: float  # normalized units per step


@dataclass(frozen=True)
class SequenceResult:
    sequence: list[int]
    anomaly: bool
    duplicates: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class DetectionScore:
    exact_match: bool
    hit_rate: float
    false_positives: int
    detected: list[int]
    truth: list[int]


def normalize(sig: SignalSet) -> SignalSet:
    """Per-channel min-max scaling onto [0, 1]."""
    v = sig.values
    lo, hi = v.min(axis=0), v.max(axis=0)
    flat = [i + 1 for i in np.flatnonzero(hi <= lo)]
    if flat:
        raise DegenerateChannelError(flat)
    return sig.with_values((v - lo) / (hi - lo))


def smooth(sig: SignalSet, W: int) -> SignalSet:
    """Centered moving average; the window shrinks at both ends."""
    if W < 1 or W % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {W}")
    if W > sig.n_steps:
        raise ValueError(f"window {W} exceeds series length {sig.n_steps}")
    if W == 1:
        return sig
    kernel = np.ones(W)
    total = convolve1d(sig.values, kernel, axis=0, mode="constant", cval=0.0)
    count = convolve1d(np.ones(sig.n_steps), kernel, mode="constant", cval=0.0)
    return sig.with_values(total / count[:, None])


def derivative(sig: SignalSet) -> SignalSet:
    """Per-step differences: central inside, one-sided at the ends."""
    if sig.n_steps < 3:
        raise ValueError("derivative needs at least 3 samples")
    return sig.with_values(np.gradient(sig.values, axis=0))


def detect_events(sig: SignalSet, cfg: DetectionConfig = DetectionConfig()) -> list[DetectedEvent]:
    """Derivative peaks that mark cell deployments, in step order.

    ``sig`` must already be the differentiated signal.  Each channel
    contributes its local maxima above ``threshold`` times the global
    maximum; candidates are then accepted strongest first, and a candidate
    within ``refractory`` samples of an accepted one is dropped.  Equal
    magnitudes go to the lower channel id.
    """
    d = cfg.polarity * sig.values
    top = float(d.max()) if d.size else 0.0
    if not top > 0.0:
        return []
    height = cfg.threshold * top
    candidates = []
    for ch in range(sig.n_channels):
        # find_peaks' distance keeps the taller peak of a close pair
        peaks, props = find_peaks(d[:, ch], height=height, distance=cfg.refractory)
        candidates += [(float(h), ch + 1, int(p)) for p, h in zip(peaks, props["peak_heights"])]
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    accepted: list[DetectedEvent] = []
    for mag, cell, step in candidates:
        if all(abs(step - e.step_index) > cfg.refractory for e in accepted):
            accepted.append(DetectedEvent(cell, step, mag))
    accepted.sort(key=lambda e: (e.step_index, e.cell_id))
    return accepted


def run_pipeline(sig: SignalSet, cfg: DetectionConfig = DetectionConfig()) -> list[DetectedEvent]:
    """Raw channel values -> detected deployment events."""
    return detect_events(derivative(smooth(normalize(sig), cfg.window)), cfg)


def sequence_from_events(events: list[DetectedEvent]) -> SequenceResult:
    """Cell ids in temporal order; repeated ids are flagged, not dropped."""
    seq = [e.cell_id for e in sorted(events, key=lambda e: e.step_index)]
    seen, dup = set(), []
    for c in seq:
        if c in seen and c not in dup:
            dup.append(c)
        seen.add(c)
    return SequenceResult(seq, bool(dup), dup)


def score_detection(detected: list[DetectedEvent], truth: list[TransitionEvent],
                    window: int = 20) -> DetectionScore:
    """Compare detections against the simulated DEPLOY events.

    A truth event is hit when an unused detection on the same cell lies
    within ``window`` steps of it; unmatched detections are false positives.
    """
    deploys = sorted((e for e in truth if e.direction is Direction.DEPLOY),
                     key=lambda e: (e.step_index, e.cell_id))
    det = sorted(detected, key=lambda e: (e.step_index, e.cell_id))
    used = [False] * len(det)
    hits = 0
    for t in deploys:
        best = None
        for k, d in enumerate(det):
            if used[k] or d.cell_id != t.cell_id:
                continue
            gap = abs(d.step_index - t.step_index)
            if gap <= window and (best is None or gap < best[0]):
                best = (gap, k)
        if best is not None:
            used[best[1]] = True
            hits += 1
    truth_seq = [e.cell_id for e in deploys]
    det_seq = [d.cell_id for d in det]
    return DetectionScore(
        exact_match=det_seq == truth_seq,
        hit_rate=hits / len(deploys) if deploys else 1.0,
        false_positives=used.count(False),
        detected=det_seq,
        truth=truth_seq,
    )
