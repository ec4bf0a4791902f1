#!/usr/bin/env python3
"""Compare feedback modes on the guidance-sensitive benchmark programs.

For each hard-tier satisfiable corpus program, runs the fuzzer under the
hybrid, distance-only, and coverage-only feedback modes across a range of
seeds and reports per-program and pooled medians of executions-to-reach.
"""

import argparse
import importlib.resources
import json
import statistics

from gadgetfuzz.fuzz import FuzzConfig, fuzz_chain
from gadgetfuzz.model import class_hierarchy, load_program
from gadgetfuzz.taint import (
    DEFAULT_SINKS,
    DEFAULT_SOURCES,
    SourceSinkConfig,
    enumerate_chains,
)

PROGRAMS = ("inteq-hard", "streq-hard")
MODES = ("hybrid", "distance", "coverage")


def planted_chain(name):
    corpus = importlib.resources.files("gadgetfuzz") / "data" / "corpus"
    model = load_program((corpus / f"{name}.json").read_text())
    hierarchy = class_hierarchy(model)
    truth = json.loads((corpus / f"{name}.truth.json").read_text())
    config = SourceSinkConfig(sources=DEFAULT_SOURCES, sinks=DEFAULT_SINKS)
    for chain in enumerate_chains(model, hierarchy, config, 15):
        if [f"{c}.{m}" for c, m in chain.methods] == truth["chain"]:
            return model, hierarchy, chain
    raise SystemExit(f"planted chain missing from analysis output for {name}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10, help="number of campaign seeds")
    parser.add_argument("--exec-budget", type=int, default=250_000)
    args = parser.parse_args()

    pooled = {mode: [] for mode in MODES}
    for name in PROGRAMS:
        model, hierarchy, chain = planted_chain(name)
        for mode in MODES:
            vals = []
            for seed in range(args.seeds):
                cfg = FuzzConfig(
                    rng_seed=seed, exec_budget=args.exec_budget, feedback=mode
                )
                res = fuzz_chain(model, hierarchy, chain, cfg)
                vals.append(
                    res.executions_to_hit
                    if res.executions_to_hit is not None
                    else args.exec_budget
                )
            pooled[mode].extend(vals)
            print(
                f"{name:<12} {mode:<9} median={statistics.median(vals)}"
                f" vals={vals}",
                flush=True,
            )
    for mode in MODES:
        print(f"POOLED {mode:<9} median={statistics.median(pooled[mode])}", flush=True)


if __name__ == "__main__":
    main()
