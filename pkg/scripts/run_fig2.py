#!/usr/bin/env python3
"""Very weak perturbation run (lambda = 0.02): damping dominates the echo.

Writes averaged simulation, theory and difference curves under
results/fig2/.  Pass --threads to parallelise over realizations.
"""

import argparse

from echo_gfa.cli import main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/fig2")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ns = ap.parse_args()
    raise SystemExit(
        main([
            "simulate",
            "--config", "fig2.json",
            "--out", ns.out,
            "--threads", str(ns.threads),
            "--format", ns.format,
        ])
    )
