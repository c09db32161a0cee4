"""Scenario configuration, end-to-end runs, sweeps and file formats.

A scenario is fully described by one JSON document.  All randomness comes
from the top-level ``seed`` through named sub-streams, so switching the
sensor noise on or off never changes the sampled imperfections.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from metasense.acquisition import ConverterConfig, acquire, code_to_capacitance
from metasense.detection import (
    DegenerateChannelError,
    DetectedEvent,
    DetectionConfig,
    SignalSet,
    run_pipeline,
    score_detection,
    sequence_from_events,
)
from metasense.geometry import BeamProfile, PlateGeometry, cell_stroke, sample_profile
from metasense.mechanics import CellParams, Direction, Trace, TransitionEvent, run_load_program
from metasense.sensing import CapacitorModel, channel_capacitance

# RNG sub-stream ids, combined with the scenario seed as default_rng([seed, id])
STREAM_IMPERFECTIONS = 0
STREAM_NOISE = 1

FORCE_DROP_TOL = 1.0  # N; a larger step-to-step fall counts as a force jump


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


class ProgramKind(enum.Enum):
    SINGLE_PULL = "single_pull"
    CYCLIC = "cyclic"
    HOLD = "hold"


@dataclass(frozen=True)
class ChainConfig:
    """Cell population: either explicit imperfections or sampled ones.

    When ``imperfections`` is ``None`` each cell's strength factor is drawn
    from N(0, sigma_eta) on the imperfection stream.
    """

    n_cells: int = 4
    peak_force: float = 6.8  # N, nominal cell peak force
    unstable_fraction: float = 0.4
    sigma_eta: float = 0.05
    imperfections: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_cells < 1:
            raise ConfigError(f"n_cells must be >= 1, got {self.n_cells}")
        if self.peak_force <= 0:
            raise ConfigError(f"peak_force must be positive, got {self.peak_force}")
        if self.sigma_eta < 0:
            raise ConfigError(f"sigma_eta must be >= 0, got {self.sigma_eta}")
        if self.imperfections is not None:
            eta = tuple(float(e) for e in self.imperfections)
            if len(eta) != self.n_cells:
                raise ConfigError(f"{len(eta)} imperfections given for {self.n_cells} cells")
            object.__setattr__(self, "imperfections", eta)


@dataclass(frozen=True)
class LoadProgram:
    """Displacement program at constant rate.

    ``x_max=None`` means ``N * stroke + 2`` mm.  ``HOLD`` ramps to ``x_max``
    (often 0) and then holds it for ``hold_time`` seconds.
    """

    kind: ProgramKind = ProgramKind.SINGLE_PULL
    n_cycles: int = 1
    x_max: float | None = None
    rate: float = 1.0  # mm/s
    dt: float = 0.01  # s
    hold_time: float = 1.0  # s

    def __post_init__(self):
        if not isinstance(self.kind, ProgramKind):
            try:
                object.__setattr__(self, "kind", ProgramKind(str(self.kind).lower()))
            except ValueError:
                raise ConfigError(f"unknown program kind {self.kind!r}") from None
        if self.n_cycles < 1:
            raise ConfigError(f"n_cycles must be >= 1, got {self.n_cycles}")
        if self.kind is not ProgramKind.CYCLIC and self.n_cycles != 1:
            raise ConfigError("n_cycles only applies to cyclic programs")
        if self.rate <= 0 or self.dt <= 0:
            raise ConfigError("rate and dt must be positive")
        if self.x_max is not None and self.x_max < 0:
            raise ConfigError(f"x_max must be >= 0, got {self.x_max}")
        if self.hold_time < 0:
            raise ConfigError("hold_time must be >= 0")

    @property
    def dX(self) -> float:
        return self.rate * self.dt


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    plates: PlateGeometry = field(default_factory=PlateGeometry)
    capacitor: CapacitorModel = field(default_factory=CapacitorModel)
    converter: ConverterConfig = field(default_factory=ConverterConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    program: LoadProgram = field(default_factory=LoadProgram)
    output_dir: str | None = None

    def __post_init__(self):
        if self.capacitor.plates != self.plates:
            raise ConfigError("capacitor plates differ from the scenario plates")
        if self.capacitor.coupling is not None and self.capacitor.coupling.shape[0] != self.chain.n_cells:
            raise ConfigError(
                f"coupling matrix is {self.capacitor.coupling.shape}, chain has {self.chain.n_cells} cells")

    @property
    def x_max(self) -> float:
        if self.program.x_max is not None:
            return self.program.x_max
        return self.chain.n_cells * cell_stroke(self.plates) + 2.0


# ---------------------------------------------------------------------------
# configuration I/O


def _section(cls, data, name: str, **extra):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)} - set(extra)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    try:
        return cls(**data, **extra)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    sections = {"seed", "chain", "plates", "capacitor", "converter", "detection", "program", "output_dir"}
    unknown = sorted(set(data) - sections)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    for name in sections - {"seed", "output_dir"}:
        if data.get(name) is not None and not isinstance(data[name], dict):
            raise ConfigError(f"section '{name}' must be an object")
    chain_data = dict(data.get("chain") or {})
    if chain_data.get("imperfections") is not None:
        chain_data["imperfections"] = tuple(chain_data["imperfections"])
    plates = _section(PlateGeometry, data.get("plates"), "plates")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    try:
        return ScenarioConfig(
            seed=seed,
            chain=_section(ChainConfig, chain_data, "chain"),
            plates=plates,
            capacitor=_section(CapacitorModel, data.get("capacitor"), "capacitor", plates=plates),
            converter=_section(ConverterConfig, data.get("converter"), "converter"),
            detection=_section(DetectionConfig, data.get("detection"), "detection"),
            program=_section(LoadProgram, data.get("program"), "program"),
            output_dir=data.get("output_dir"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    cap = asdict(cfg.capacitor)
    cap.pop("plates")
    if cap["coupling"] is not None:
        cap["coupling"] = np.asarray(cap["coupling"]).tolist()
    chain = asdict(cfg.chain)
    if chain["imperfections"] is not None:
        chain["imperfections"] = list(chain["imperfections"])
    program = asdict(cfg.program)
    program["kind"] = cfg.program.kind.value
    return {
        "seed": cfg.seed,
        "chain": chain,
        "plates": asdict(cfg.plates),
        "capacitor": cap,
        "converter": asdict(cfg.converter),
        "detection": asdict(cfg.detection),
        "program": program,
        "output_dir": cfg.output_dir,
    }


# ---------------------------------------------------------------------------
# building blocks


def sample_imperfections(cfg: ScenarioConfig) -> tuple[float, ...]:
    if cfg.chain.imperfections is not None:
        return cfg.chain.imperfections
    rng = np.random.default_rng([cfg.seed, STREAM_IMPERFECTIONS])
    eta = rng.normal(0.0, cfg.chain.sigma_eta, cfg.chain.n_cells)
    if np.any(eta <= -1.0):
        raise ConfigError("sampled imperfection makes a cell strength non-positive")
    return tuple(float(e) for e in eta)


def build_cells(cfg: ScenarioConfig) -> tuple[CellParams, ...]:
    stroke = cell_stroke(cfg.plates)
    return tuple(
        CellParams(stroke=stroke, unstable_fraction=cfg.chain.unstable_fraction,
                   peak_force=cfg.chain.peak_force, imperfection=eta, id=i + 1)
        for i, eta in enumerate(sample_imperfections(cfg))
    )


def _stroke_samples(x0: float, x1: float, dX: float) -> list[float]:
    n = math.ceil(abs(x1 - x0) / dX - 1e-9)
    return [x0 + math.copysign(k * dX, x1 - x0) for k in range(1, n)] + ([float(x1)] if n else [])


def build_path(cfg: ScenarioConfig) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    """Displacement samples and per-cycle ``(start, turn, end)`` row indices.

    Rows ``start..turn`` form the loading stroke of a cycle and
    ``start..end`` the whole cycle.
    """
    prog, dX, x_max = cfg.program, cfg.program.dX, cfg.x_max
    X = [0.0]
    cycles = []
    if prog.kind is ProgramKind.CYCLIC:
        for _ in range(prog.n_cycles):
            start = len(X) - 1
            X += _stroke_samples(0.0, x_max, dX)
            turn = len(X) - 1
            X += _stroke_samples(x_max, 0.0, dX)
            cycles.append((start, turn, len(X) - 1))
    else:
        X += _stroke_samples(0.0, x_max, dX)
        turn = len(X) - 1
        if prog.kind is ProgramKind.HOLD:
            X += [float(x_max)] * math.ceil(prog.hold_time / prog.dt - 1e-9)
        cycles.append((0, turn, len(X) - 1))
    return np.asarray(X), cycles


@lru_cache(maxsize=256)
def _simulate_cached(cells: tuple[CellParams, ...], path: bytes) -> tuple[Trace, tuple[TransitionEvent, ...]]:
    trace, events = run_load_program(cells, (), X_path=np.frombuffer(path))
    return trace, tuple(events)


def simulate_mechanics(cells: Sequence[CellParams], X: np.ndarray) -> tuple[Trace, list[TransitionEvent]]:
    """Quasi-static run, memoized on the cells and the displacement path."""
    trace, events = _simulate_cached(tuple(cells), np.ascontiguousarray(X, dtype=float).tobytes())
    return trace, list(events)


def measure(cfg: ScenarioConfig, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noiseless channel capacitance, noisy codes, and capacitance decoded from codes."""
    C = channel_capacitance(cfg.capacitor, x)
    rng = np.random.default_rng([cfg.seed, STREAM_NOISE])
    codes = acquire(cfg.converter, C, rng)
    return C, codes, code_to_capacitance(cfg.converter, codes)


def detect_stroke(signal: np.ndarray, X: np.ndarray, cfg: DetectionConfig,
                  offset: int = 0) -> tuple[list[DetectedEvent], list[int]]:
    """Run detection on one loading stroke; step indices are shifted by ``offset``.

    Returns the events and the ids of constant channels (which make the
    stroke unanalyzable and yield no events).  Strokes shorter than three
    samples carry no derivative information and also yield no events.
    """
    if len(signal) < 3:
        return [], []
    try:
        events = run_pipeline(SignalSet(signal, X), cfg)
    except DegenerateChannelError as exc:
        return [], exc.channels
    return [DetectedEvent(e.cell_id, e.step_index + offset, e.magnitude) for e in events], []


def loading_strokes(X: np.ndarray) -> list[tuple[int, int]]:
    """``(start, turn)`` row ranges where the displacement increases."""
    dX = np.diff(np.asarray(X, dtype=float))
    strokes, start = [], None
    for k, d in enumerate(dX):
        if d > 0 and start is None:
            start = k
        elif d < 0 and start is not None:
            strokes.append((start, k))
            start = None
    if start is not None:
        last = int(np.flatnonzero(dX > 0)[-1]) + 1
        strokes.append((start, last))
    return strokes


def count_force_drops(F: np.ndarray, tol: float = FORCE_DROP_TOL) -> int:
    return int(np.count_nonzero(np.diff(F) < -tol))


# ---------------------------------------------------------------------------
# reports


@dataclass
class CycleReport:
    index: int
    truth: list[TransitionEvent]
    detected: list[DetectedEvent]
    truth_sequence: list[int]
    detected_sequence: list[int]
    match: bool
    anomaly: bool
    degenerate_channels: list[int]
    hit_rate: float
    false_positives: int
    dissipated_energy: float  # mJ, sum of snap energy releases
    work: float  # mJ, closed-path integral of F dX over the cycle
    force_drops: int  # force jumps on the loading stroke


@dataclass
class RunReport:
    config: ScenarioConfig
    imperfections: tuple[float, ...]
    cycles: list[CycleReport]
    peak_force: float
    wall_time: float
    trace: Trace = field(repr=False)
    events: list[TransitionEvent] = field(repr=False)
    capacitance: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)

    @property
    def all_match(self) -> bool:
        return all(c.match for c in self.cycles)

    def to_dict(self) -> dict:
        """JSON-ready summary; wall time is left out so reruns compare equal."""
        return {
            "config": config_to_dict(self.config),
            "imperfections": list(self.imperfections),
            "peak_force_N": self.peak_force,
            "all_match": self.all_match,
            "cycles": [
                {
                    "index": c.index,
                    "truth_sequence": c.truth_sequence,
                    "detected_sequence": c.detected_sequence,
                    "match": c.match,
                    "anomaly": c.anomaly,
                    "degenerate_channels": c.degenerate_channels,
                    "hit_rate": c.hit_rate,
                    "false_positives": c.false_positives,
                    "dissipated_energy_mJ": c.dissipated_energy,
                    "work_mJ": c.work,
                    "force_drops": c.force_drops,
                    "truth_events": [_event_dict(e) for e in c.truth],
                    "detected_events": [asdict(e) for e in c.detected],
                }
                for c in self.cycles
            ],
        }


def _event_dict(e: TransitionEvent) -> dict:
    d = asdict(e)
    d["direction"] = e.direction.name
    return d


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> RunReport:
    """Mechanics -> sensing -> acquisition -> detection for one scenario.

    Outputs are written to ``cfg.output_dir`` when it is set and ``write``
    is true.
    """
    t0 = time.perf_counter()
    cells = build_cells(cfg)
    X, cycles = build_path(cfg)
    trace, events = simulate_mechanics(cells, X)
    C, codes, C_meas = measure(cfg, trace.x)

    reports = []
    for i, (start, turn, end) in enumerate(cycles):
        truth = [e for e in events if start < e.step_index <= end]
        deploys = [e for e in truth if e.direction is Direction.DEPLOY]
        detected, flat = detect_stroke(C_meas[start:turn + 1], X[start:turn + 1], cfg.detection, start)
        seq = sequence_from_events(detected)
        score = score_detection(detected, deploys, window=max(2 * cfg.detection.window, 5))
        rows = slice(start, end + 1)
        reports.append(CycleReport(
            index=i,
            truth=truth,
            detected=detected,
            truth_sequence=[e.cell_id for e in deploys],
            detected_sequence=seq.sequence,
            match=score.exact_match,
            anomaly=seq.anomaly,
            degenerate_channels=flat,
            hit_rate=score.hit_rate,
            false_positives=score.false_positives,
            dissipated_energy=float(sum(e.energy_released for e in truth)),
            work=float(np.trapezoid(trace.F[rows], X[rows])) if end > start else 0.0,
            force_drops=count_force_drops(trace.F[start:turn + 1]),
        ))
    report = RunReport(
        config=cfg,
        imperfections=tuple(c.imperfection for c in cells),
        cycles=reports,
        peak_force=float(trace.F.max()),
        wall_time=time.perf_counter() - t0,
        trace=trace,
        events=events,
        capacitance=C,
        codes=codes,
    )
    if write and cfg.output_dir:
        write_outputs(report, cfg.output_dir)
    return report


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class NoiseSweepRow:
    sigma: float
    accuracy: float
    runs: int


@dataclass(frozen=True)
class MCRow:
    seed: int
    imperfections: tuple[float, ...]
    true_sequence: list[int]
    detected_sequence: list[int]
    match: bool


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _seed_variant(cfg: ScenarioConfig, j: int) -> ScenarioConfig:
    return replace(cfg, seed=cfg.seed + j, output_dir=None)


def _sweep_one(args) -> list[bool]:
    cfg, sigmas = args
    out = []
    for s in sigmas:
        run = replace(cfg, converter=replace(cfg.converter, noise_sigma=float(s)))
        out.append(run_scenario(run, write=False).all_match)
    return out


def noise_sweep(cfg: ScenarioConfig, sigmas: Sequence[float], k: int = 20,
                workers: int = 1) -> list[NoiseSweepRow]:
    """Exact-recovery rate per noise level over ``k`` consecutive seeds.

    Seed ``cfg.seed + j`` fixes both the sampled imperfections and the noise
    stream, so every sigma is evaluated on the same chains.
    """
    if k < 20:
        raise ConfigError(f"noise sweep needs k >= 20 seeds, got {k}")
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        return []
    results = _map(_sweep_one, [(_seed_variant(cfg, j), sigmas) for j in range(k)], workers)
    return [NoiseSweepRow(s, sum(r[i] for r in results) / k, k) for i, s in enumerate(sigmas)]


def critical_sigma(rows: Sequence[NoiseSweepRow], level: float = 0.95) -> float | None:
    """Smallest swept sigma whose recovery rate falls below ``level``."""
    for row in sorted(rows, key=lambda r: r.sigma):
        if row.accuracy < level:
            return row.sigma
    return None


def _mc_one(cfg: ScenarioConfig) -> MCRow:
    report = run_scenario(cfg, write=False)
    return MCRow(cfg.seed, report.imperfections, report.cycles[0].truth_sequence,
                 report.cycles[0].detected_sequence, report.all_match)


def imperfection_mc(cfg: ScenarioConfig, draws: int, workers: int = 1) -> list[MCRow]:
    """One full pipeline run per seed ``cfg.seed + j``, ``j < draws``."""
    if draws < 1:
        raise ConfigError(f"draws must be >= 1, got {draws}")
    if cfg.chain.imperfections is not None:
        raise ConfigError("imperfection Monte-Carlo needs sampled imperfections, not explicit ones")
    return _map(_mc_one, [_seed_variant(cfg, j) for j in range(draws)], workers)


# ---------------------------------------------------------------------------
# files


def _fmt(v) -> str:
    return repr(float(v))


def write_trace_csv(path, report: RunReport) -> None:
    tr, n = report.trace, report.trace.x.shape[1]
    header = (["step", "X_mm", "F_N"] + [f"x{i}_mm" for i in range(1, n + 1)]
              + [f"C{i}_pF" for i in range(1, n + 1)] + [f"code{i}" for i in range(1, n + 1)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(tr.X)):
            w.writerow([k, _fmt(tr.X[k]), _fmt(tr.F[k])] + [_fmt(v) for v in tr.x[k]]
                       + [_fmt(v) for v in report.capacitance[k]] + [int(c) for c in report.codes[k]])


def read_trace_csv(path) -> dict:
    """Columns of a trace CSV as arrays: X, F, x, C, codes (x/C/codes are (steps, N))."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path} has no data rows")
    header, body = rows[0], rows[1:]
    col = {name: i for i, name in enumerate(header)}
    n = sum(1 for h in header if h.startswith("code"))
    missing = [c for c in ["step", "X_mm", "F_N"] + [f"code{i}" for i in range(1, n + 1)] if c not in col]
    if n == 0 or missing:
        raise ValueError(f"{path} is missing trace columns: {missing or ['code1']}")

    def grab(names, dtype=float):
        return np.array([[dtype(r[col[c]]) for c in names] for r in body])

    out = {
        "step": grab(["step"], int)[:, 0],
        "X": grab(["X_mm"])[:, 0],
        "F": grab(["F_N"])[:, 0],
        "codes": grab([f"code{i}" for i in range(1, n + 1)], int),
    }
    if all(f"C{i}_pF" in col for i in range(1, n + 1)):
        out["C"] = grab([f"C{i}_pF" for i in range(1, n + 1)])
    if all(f"x{i}_mm" in col for i in range(1, n + 1)):
        out["x"] = grab([f"x{i}_mm" for i in range(1, n + 1)])
    return out


def write_events_csv(path, events: Sequence[TransitionEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cell_id", "direction", "X_mm", "F_before_N"])
        for e in events:
            w.writerow([e.step_index, e.cell_id, e.direction.name, _fmt(e.X_at_event), _fmt(e.F_before)])


def read_events_csv(path) -> list[TransitionEvent]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            TransitionEvent(cell_id=int(r["cell_id"]), direction=Direction[r["direction"]],
                            X_at_event=float(r["X_mm"]), F_before=float(r["F_before_N"]),
                            step_index=int(r["step"]))
            for r in reader
        ]


def write_detected_csv(path, events: Sequence[DetectedEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cell_id", "magnitude"])
        for e in events:
            w.writerow([e.step_index, e.cell_id, _fmt(e.magnitude)])


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_outputs(report: RunReport, directory) -> dict[str, Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("trace.csv", "events.csv", "detected.csv", "report.json")}
    write_trace_csv(paths["trace.csv"], report)
    write_events_csv(paths["events.csv"], report.events)
    write_detected_csv(paths["detected.csv"], [e for c in report.cycles for e in c.detected])
    write_json(paths["report.json"], report.to_dict())
    return paths


def write_geometry_csv(path, profile: BeamProfile = BeamProfile(), n: int = 181) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s_mm", "B_mm"])
        for si, bi in sample_profile(profile, n):
            w.writerow([_fmt(si), _fmt(bi)])
