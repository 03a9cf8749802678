#!/usr/bin/env python3
"""Weak-perturbation ensemble run (lambda = 0.1, four damping rates).

Writes averaged simulation, theory and difference curves under
results/fig1/.  Pass --threads to parallelise over realizations.
"""

import argparse

from echo_gfa.cli import main


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/fig1")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ns = ap.parse_args()
    raise SystemExit(
        main([
            "simulate",
            "--config", "fig1.json",
            "--out", ns.out,
            "--threads", str(ns.threads),
            "--format", ns.format,
        ])
    )
