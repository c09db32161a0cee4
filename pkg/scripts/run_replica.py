#!/usr/bin/env python3
"""Run the four-cell replica scenario and print the force jumps and sequences."""

import argparse
from dataclasses import replace
from pathlib import Path

from metasense import harness

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=ROOT / "configs" / "replica.json")
    p.add_argument("--out", default=None, help="output directory (default: from the config)")
    args = p.parse_args()

    cfg = harness.load_config(args.config)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    report = harness.run_scenario(cfg)
    cycle = report.cycles[0]
    print(f"imperfections : {', '.join(f'{e:+.4f}' for e in report.imperfections)}")
    print(f"peak force    : {report.peak_force:.3f} N")
    print(f"force jumps   : {cycle.force_drops}")
    for e in cycle.truth:
        print(f"  step {e.step_index:5d}  cell {e.cell_id}  {e.direction.name:8s}"
              f"  X={e.X_at_event:7.3f} mm  F={e.F_before:6.3f} N")
    print(f"truth order   : {cycle.truth_sequence}")
    print(f"detected order: {cycle.detected_sequence}  ({'match' if cycle.match else 'MISMATCH'})")
    if cfg.output_dir:
        print(f"outputs in    : {cfg.output_dir}")


if __name__ == "__main__":
    main()
