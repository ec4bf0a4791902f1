"""Command-line driver: analyze, fuzz, gen-bench, report.

``analyze`` enumerates candidate chains per model; ``fuzz`` additionally runs
one validation campaign per chain; ``gen-bench`` writes a synthetic corpus;
``report`` re-renders the summary table of a saved report.

Exit status reflects tool health only: 0 on success (whatever the verdicts),
1 on internal errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import sys
from typing import Optional

from . import __version__
from .fuzz import (
    DEFAULT_BUDGET_SECS,
    FEEDBACK_MODES,
    FuzzConfig,
    MUTATION_MODES,
    VERDICT_REACHABLE,
    fuzz_chain,
)
from .interp import execute
from .model import ModelError, class_hierarchy, load_program
from .taint import (
    DEFAULT_MAX_CHAIN_LENGTH,
    DEFAULT_SINKS,
    DEFAULT_SOURCES,
    SourceSinkConfig,
    enumerate_chains,
)

# fields holding wall-clock readings; strip these when comparing reports
TIMESTAMP_FIELDS = ("generated_at", "elapsed_secs")


def strip_timestamps(node):
    """Recursively drop wall-clock fields from a report document."""
    if isinstance(node, dict):
        return {k: strip_timestamps(v) for k, v in node.items() if k not in TIMESTAMP_FIELDS}
    if isinstance(node, list):
        return [strip_timestamps(v) for v in node]
    return node


def _load_sources_sinks(path: Optional[str]) -> SourceSinkConfig:
    if path is None:
        return SourceSinkConfig(sources=DEFAULT_SOURCES, sinks=DEFAULT_SINKS)
    with open(path) as fh:
        return SourceSinkConfig.from_document(json.load(fh))


def _chain_record(chain) -> dict:
    owner, name = chain.sink_target
    return {
        "gadgets": [f"{cls}.{method}" for cls, method in chain.methods],
        "length": chain.length,
        "sink": f"{owner}.{name}" if owner else name,
    }


def _analyze_one(path: str, config: SourceSinkConfig, args) -> dict:
    with open(path) as fh:
        program = load_program(fh.read())
    hierarchy = class_hierarchy(program)
    chains = enumerate_chains(
        program,
        hierarchy,
        config,
        args.max_chain_length,
        serializable_only=args.serializable_only,
    )
    return {
        "model": path,
        "chains": [_chain_record(c) for c in chains],
        "_chains": chains,
        "_program": program,
        "_hierarchy": hierarchy,
    }


def _public(record: dict) -> dict:
    return {k: v for k, v in record.items() if not k.startswith("_")}


def _fuzz_one(path: str, ss_config: SourceSinkConfig, args) -> dict:
    entry = _analyze_one(path, ss_config, args)
    program, hierarchy = entry["_program"], entry["_hierarchy"]
    config = FuzzConfig(
        budget_secs=args.budget_secs,
        exec_budget=args.exec_budget,
        rng_seed=args.rng_seed,
        feedback=args.feedback,
        mutation=args.mutation,
        structure_unaware=args.structure_unaware,
    )
    for chain, record in zip(entry["_chains"], entry["chains"]):
        result = fuzz_chain(program, hierarchy, chain, config)
        record["verdict"] = result.verdict
        record["executions"] = result.executions
        record["executions_to_reach"] = result.executions_to_hit
        record["elapsed_secs"] = round(result.elapsed_secs, 3)
        record["poc"] = None
        record["poc_validated"] = None
        record["param_draws"] = None
        if result.verdict == VERDICT_REACHABLE and result.poc is not None:
            record["poc"] = result.poc.render()
            # self-validation: the emitted object must replay to the sink
            record["poc_validated"] = execute(program, chain, result.poc).sink_hit
    return _public(entry)


def _report_document(command: str, args, programs: list[dict]) -> dict:
    return {
        "tool_version": __version__,
        "command": command,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": {
            "max_chain_length": args.max_chain_length,
            "budget_secs": getattr(args, "budget_secs", None),
            "exec_budget": getattr(args, "exec_budget", None),
            "rng_seed": getattr(args, "rng_seed", None),
            "feedback": getattr(args, "feedback", None),
            "mutation": getattr(args, "mutation", None),
            "structure_unaware": getattr(args, "structure_unaware", False),
            "serializable_only": args.serializable_only,
            "sources_sinks": getattr(args, "sources_sinks", None),
        },
        "programs": programs,
    }


def summary_table(report: dict) -> str:
    """Aligned plain-text table of chains and verdicts."""
    rows = [("MODEL", "CHAIN", "LEN", "VERDICT", "EXECS")]
    for entry in report["programs"]:
        model = entry["model"]
        if not entry["chains"]:
            rows.append((model, "(no chains)", "-", "-", "-"))
        for c in entry["chains"]:
            gadgets = c["gadgets"]
            label = f"{gadgets[0]} .. {c['sink']}" if gadgets else c["sink"]
            rows.append(
                (
                    model,
                    label,
                    str(c["length"]),
                    c.get("verdict", "-"),
                    str(c.get("executions", "-")),
                )
            )
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)


def _emit(report: dict, out: Optional[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(summary_table(report))


def _run_many(worker, paths, ss_config, args) -> list[dict]:
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(worker, p, ss_config, args) for p in paths]
            return [f.result() for f in futures]
    return [worker(p, ss_config, args) for p in paths]


def _cmd_analyze(args) -> int:
    ss_config = _load_sources_sinks(args.sources_sinks)
    programs = [_public(e) for e in _run_many(_analyze_one, args.model or [], ss_config, args)]
    _emit(_report_document("analyze", args, programs), args.out)
    return 0


def _cmd_fuzz(args) -> int:
    ss_config = _load_sources_sinks(args.sources_sinks)
    programs = _run_many(_fuzz_one, args.model or [], ss_config, args)
    _emit(_report_document("fuzz", args, programs), args.out)
    return 0


def _cmd_gen_bench(args) -> int:
    from .bench import CorpusSpec, release_specs, write_corpus

    if args.spec:
        with open(args.spec) as fh:
            records = json.load(fh)
        specs = [
            CorpusSpec(
                name=r["name"],
                chain_depth=r["chain_depth"],
                fanout=r.get("fanout", 1),
                decoy_branches=r.get("decoy_branches", 0),
                guard_kinds=tuple(r.get("guard_kinds", ("null-check",))),
                unsatisfiable=r.get("unsatisfiable", False),
                rng_seed=r.get("rng_seed", 0),
            )
            for r in records
        ]
    else:
        specs = release_specs()
    names = write_corpus(specs, args.out)
    for name in names:
        print(f"wrote {name}.json + {name}.truth.json to {args.out}")
    return 0


def _cmd_report(args) -> int:
    with open(args.report) as fh:
        report = json.load(fh)
    print(summary_table(report))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", action="append", help="model JSON path (repeatable)")
    p.add_argument("--sources-sinks", help="source/sink config JSON")
    p.add_argument("--max-chain-length", type=int, default=DEFAULT_MAX_CHAIN_LENGTH)
    p.add_argument("--serializable-only", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadgetfuzz", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="enumerate candidate gadget chains")
    _add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("fuzz", help="enumerate chains, then fuzz each to a verdict")
    _add_common(p)
    p.add_argument("--budget-secs", type=float, default=DEFAULT_BUDGET_SECS)
    p.add_argument("--exec-budget", type=int, help="per-chain execution cap (deterministic)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--feedback", choices=FEEDBACK_MODES, default="hybrid")
    p.add_argument("--mutation", choices=MUTATION_MODES, default="structured")
    p.add_argument("--structure-unaware", action="store_true")
    p.set_defaults(func=_cmd_fuzz)

    p = sub.add_parser("gen-bench", help="generate a synthetic corpus")
    p.add_argument("--spec", help="corpus spec JSON (defaults to the release corpus)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_bench)

    p = sub.add_parser("report", help="render the summary table of a saved report")
    p.add_argument("report", help="report JSON path")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
