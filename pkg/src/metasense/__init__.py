"""Simulation of a serial multistable metamaterial with integrated capacitive sensing.

The chain of bistable cells is loaded under displacement control, each cell
carries a parallel-plate sensor read through an LC-resonance converter, and
the deployment order is recovered from the sensor signals alone.
"""

from metasense.geometry import BeamProfile, CellGeometry, PlateGeometry
from metasense.mechanics import Branch, CellParams, ChainState, Direction, TransitionEvent
from metasense.sensing import CapacitorModel
from metasense.acquisition import ConverterConfig
from metasense.detection import DetectionConfig, DetectedEvent, SignalSet

__version__ = "0.1.0"

__all__ = [
    "BeamProfile",
    "Branch",
    "CapacitorModel",
    "CellGeometry",
    "CellParams",
    "ChainState",
    "ConverterConfig",
    "DetectedEvent",
    "DetectionConfig",
    "Direction",
    "PlateGeometry",
    "SignalSet",
    "TransitionEvent",
]
