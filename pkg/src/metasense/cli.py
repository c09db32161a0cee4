"""Command-line interface.

Exit codes: 0 on success, 1 for configuration or input errors, 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from metasense import harness
from metasense.acquisition import ConverterConfig, code_to_capacitance
from metasense.detection import DetectionConfig, score_detection, sequence_from_events
from metasense.geometry import BeamProfile
from metasense.mechanics import Direction

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class InputError(Exception):
    """Bad command-line input (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _print(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    out = args.out or cfg.output_dir or "out"
    report = harness.run_scenario(replace(cfg, output_dir=str(out)))
    _print({
        "output_dir": str(out),
        "imperfections": list(report.imperfections),
        "peak_force_N": report.peak_force,
        "cycles": [{"truth": c.truth_sequence, "detected": c.detected_sequence, "match": c.match}
                   for c in report.cycles],
        "all_match": report.all_match,
        "wall_time_s": round(report.wall_time, 3),
    })
    return EXIT_OK


def cmd_detect(args) -> int:
    if args.config:
        cfg = harness.load_config(args.config)
        converter, detection = cfg.converter, cfg.detection
    else:
        converter, detection = ConverterConfig(), DetectionConfig()
    try:
        trace = harness.read_trace_csv(args.trace)
        truth = harness.read_events_csv(args.truth) if args.truth else None
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read input: {exc}") from exc
    if args.source == "codes":
        signal = code_to_capacitance(converter, trace["codes"])
    elif "C" in trace:
        signal = trace["C"]
    else:
        raise InputError("trace has no capacitance columns")

    strokes = harness.loading_strokes(trace["X"])
    detected, flat = [], []
    for start, turn in strokes:
        ev, bad = harness.detect_stroke(signal[start:turn + 1], trace["X"][start:turn + 1], detection, start)
        detected += ev
        flat += [c for c in bad if c not in flat]
    seq = sequence_from_events(detected)
    summary = {
        "sequence": seq.sequence,
        "anomaly": seq.anomaly,
        "duplicates": seq.duplicates,
        "degenerate_channels": flat,
        "loading_strokes": len(strokes),
    }
    if truth is not None:
        steps = trace["step"]
        deploys = [e for e in truth if e.direction is Direction.DEPLOY]
        # map trace step numbers onto row indices
        row = {int(s): i for i, s in enumerate(steps)}
        deploys = [replace(e, step_index=row.get(e.step_index, e.step_index)) for e in deploys]
        score = score_detection(detected, deploys, window=max(2 * detection.window, 5))
        summary["score"] = asdict(score)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_detected_csv(out / "detected.csv", detected)
    harness.write_json(out / "summary.json", summary)
    _print(summary)
    return EXIT_OK


def cmd_sweep_noise(args) -> int:
    cfg = harness.load_config(args.config)
    rows = harness.noise_sweep(cfg, args.sigmas, k=args.k, workers=args.workers)
    data = {
        "rows": [asdict(r) for r in rows],
        "sigma_star": harness.critical_sigma(rows, args.level),
        "level": args.level,
    }
    if args.out:
        harness.write_json(args.out, data)
    _print(data)
    return EXIT_OK


def cmd_sweep_imperfections(args) -> int:
    cfg = harness.load_config(args.config)
    rows = harness.imperfection_mc(cfg, args.draws, workers=args.workers)
    data = {
        "draws": len(rows),
        "match_rate": sum(r.match for r in rows) / len(rows),
        "rows": [asdict(r) | {"imperfections": list(r.imperfections)} for r in rows],
    }
    if args.out:
        harness.write_json(args.out, data)
    _print({k: data[k] for k in ("draws", "match_rate")}
           | {"mismatched_seeds": [r.seed for r in rows if not r.match]})
    return EXIT_OK


def cmd_export_geometry(args) -> int:
    try:
        profile = BeamProfile(h=args.h, l=args.l, s_max=args.s_max)
    except ValueError as exc:
        raise harness.ConfigError(str(exc)) from exc
    if args.n < 2:
        raise harness.ConfigError("--n must be at least 2")
    harness.write_geometry_csv(args.out, profile, args.n)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metasense", description="Bistable chain with capacitive proprioception.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario end to end")
    s.add_argument("config", help="scenario JSON")
    s.add_argument("--out", help="output directory (default: config output_dir or ./out)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("detect", help="detect the deployment sequence in a trace CSV")
    d.add_argument("trace")
    d.add_argument("--truth", help="events CSV to score against")
    d.add_argument("--config", help="scenario JSON supplying converter and detection settings")
    d.add_argument("--source", choices=("codes", "capacitance"), default="codes",
                   help="analyze decoded converter codes (default) or the C columns")
    d.add_argument("--out", default="detect_out", help="output directory")
    d.set_defaults(func=cmd_detect)

    n = sub.add_parser("sweep-noise", help="sequence recovery rate versus noise level")
    n.add_argument("config")
    n.add_argument("--sigmas", type=float, nargs="+", required=True, help="noise levels in pF")
    n.add_argument("--k", type=int, default=20, help="seeds per level (>= 20)")
    n.add_argument("--level", type=float, default=0.95, help="recovery level defining sigma*")
    n.add_argument("--workers", type=int, default=1)
    n.add_argument("--out", help="write the table as JSON")
    n.set_defaults(func=cmd_sweep_noise)

    m = sub.add_parser("sweep-imperfections", help="Monte-Carlo over imperfection draws")
    m.add_argument("config")
    m.add_argument("--draws", type=int, required=True)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out", help="write the table as JSON")
    m.set_defaults(func=cmd_sweep_imperfections)

    g = sub.add_parser("export-geometry", help="write the beam profile B(s) as CSV")
    g.add_argument("--out", default="geometry.csv")
    g.add_argument("--n", type=int, default=181, help="number of samples")
    g.add_argument("--h", type=float, default=BeamProfile.h, help="apex height (mm)")
    g.add_argument("--l", type=float, default=BeamProfile.l, help="beam length (mm)")
    g.add_argument("--s-max", dest="s_max", type=float, default=BeamProfile.s_max)
    g.set_defaults(func=cmd_export_geometry)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
