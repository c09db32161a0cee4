#!/usr/bin/env python3
"""Sequence-recovery rate versus converter noise; reports the critical sigma."""

import argparse
from pathlib import Path

from metasense import harness

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_SIGMAS = [0.0, 0.0005, 0.001, 0.0015, 0.002, 0.003, 0.005]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=ROOT / "configs" / "monte_carlo.json")
    p.add_argument("--sigmas", type=float, nargs="+", default=DEFAULT_SIGMAS, help="pF")
    p.add_argument("--k", type=int, default=20, help="seeds per noise level")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    cfg = harness.load_config(args.config)
    rows = harness.noise_sweep(cfg, args.sigmas, k=args.k, workers=args.workers)
    print(f"{'sigma_pF':>10}  {'recovery':>8}")
    for r in rows:
        print(f"{r.sigma:10.4g}  {r.accuracy:8.2f}")
    star = harness.critical_sigma(rows, args.level)
    print(f"sigma* (first level below {args.level:.0%}): {star if star is not None else 'not reached'}")


if __name__ == "__main__":
    main()
