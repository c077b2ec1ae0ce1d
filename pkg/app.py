# app.py
"""
si-lab command line.

    python app.py gen --deployment rs --seed 3 --txn-num 500 --out rs.jsonl
    python app.py check --in rs.jsonl --report rs-report.json
    python app.py oracle --in data/histories/si_not_session_si.jsonl --model session-si
    python app.py mutate --in rs.jsonl --axiom ext --out rs-ext.jsonl
    python app.py script --in data/scripts/speculative_majority.txt --model strong-si
    python app.py pipeline --deployment sc --seed 7

Exit codes: 0 pass, 1 violations found, 2 bad flags or input.
"""
import argparse
import logging
import sys
import time
from typing import List, Optional

import numpy as np
from rich.markup import escape

from si_lab.analyzer import check_deployment
from si_lab.axioms import TARGET_MODELS, Model
from si_lab.config import load_settings, resolve_seed
from si_lab.errors import INPUT_ERRORS, ConfigError
from si_lab.formatter import (print_summary, stats_table, stdout_console, summary_line, violations_table,
                              write_report)
from si_lab.harness import history_stats, run
from si_lab.logs import configure_logging, console
from si_lab.model import History
from si_lab.mutate import TIMESTAMP_MUTATIONS, mutate, mutation_model, parse_axiom
from si_lab.oracle import brute_force_satisfies
from si_lab.parser import dump_history, load_history
from si_lab.script import interleave_directed, load_script
from si_lab.workload import KEY_DISTRIBUTIONS, RUN_REPLICATION_MODES, SimConfig

logger = logging.getLogger("si_lab.cli")

MODEL_CHOICES = ["auto"] + [m.value for m in Model]


def _parse_model(name: str, history: History) -> Model:
    if name == "auto":
        # mutated histories are checked against the model covering the broken axiom
        mutation = history.header.get("mutation")
        if mutation and history.deployment in TARGET_MODELS:
            return mutation_model(history.deployment, parse_axiom(mutation))
        return TARGET_MODELS.get(history.deployment, Model.SI)
    try:
        return Model.parse(name)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--settings", help="settings JSON file (default config/settings.json)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--deployment", choices=["wt", "rs", "sc"], default="wt")
    gen.add_argument("--seed", type=int, help="random seed (default: $SI_LAB_SEED, else 0)")
    gen.add_argument("--txn-num", type=int)
    gen.add_argument("--concurrency", type=int)
    gen.add_argument("--max-txn-len", type=int)
    gen.add_argument("--key-count", type=int)
    gen.add_argument("--max-writes-per-key", type=int)
    gen.add_argument("--key-dist", choices=KEY_DISTRIBUTIONS)
    gen.add_argument("--replica-count", type=int)
    gen.add_argument("--shard-count", type=int)
    gen.add_argument("--replication", choices=RUN_REPLICATION_MODES, dest="replication_mode")

    check = argparse.ArgumentParser(add_help=False)
    check.add_argument("--model", choices=MODEL_CHOICES, default="auto")
    check.add_argument("--rt-tolerance", type=float, metavar="MS", help="real-time tolerance in milliseconds")
    check.add_argument("--report", help="JSON report path; a .txt report is written next to it")
    check.add_argument("--all-violations", action="store_true", help="report every witness, not the first per axiom")
    check.add_argument("--timings", action="store_true", help="include elapsed times in the report file")

    parser = argparse.ArgumentParser(prog="si-lab", description="Snapshot-isolation protocol simulator and checker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common, gen], help="simulate a deployment and write its history")
    p.add_argument("--out", required=True)

    p = sub.add_parser("check", parents=[common, check], help="white-box check of a history")
    p.add_argument("--in", dest="input", required=True)

    p = sub.add_parser("oracle", parents=[common], help="brute-force check of a small history")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", choices=MODEL_CHOICES, default="auto")
    p.add_argument("--cap", type=int, help="largest number of committed transactions searched")

    p = sub.add_parser("mutate", parents=[common], help="break one axiom in a passing history")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--axiom", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="draw the mutated candidate from this seed (default: first candidate)")

    p = sub.add_parser("script", parents=[common, check], help="run a directed interleaving and check it")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="history output path")

    p = sub.add_parser("pipeline", parents=[common, gen, check], help="gen and check in one run")
    p.add_argument("--out", help="history output path")
    return parser


def _tolerance_nanos(args, settings) -> int:
    ms = args.rt_tolerance if args.rt_tolerance is not None else settings["checker"].get("rt_tolerance_ms", 0)
    if ms < 0:
        raise ConfigError("--rt-tolerance must not be negative")
    return int(round(ms * 1_000_000))


def _sim_config(args, settings) -> SimConfig:
    return SimConfig.from_settings(
        settings,
        deployment=args.deployment,
        seed=resolve_seed(args.seed),
        txn_num=args.txn_num,
        concurrency=args.concurrency,
        max_txn_len=args.max_txn_len,
        key_count=args.key_count,
        max_writes_per_key=args.max_writes_per_key,
        key_dist=args.key_dist,
        replica_count=args.replica_count,
        shard_count=args.shard_count,
        replication_mode=args.replication_mode,
    )


def _check_and_report(history, args, settings, source: Optional[str], started: float, command: str) -> int:
    model = _parse_model(args.model, history)
    report = check_deployment(history, model, args.all_violations, _tolerance_nanos(args, settings))
    if args.report:
        extra = {
            "deployment": history.deployment,
            "seed": history.header.get("seed"),
            "config": history.header.get("config", {}),
        }
        if "mutation" in history.header:
            extra["mutation"] = history.header["mutation"]
        write_report(report, args.report, source, args.timings, extra)
    if not report.verdict:
        stdout_console.print(violations_table(report))
    print_summary(summary_line(command, history.deployment, len(history), report.verdict,
                               time.perf_counter() - started))
    return 0 if report.verdict else 1


def cmd_gen(args, settings) -> int:
    started = time.perf_counter()
    history = run(_sim_config(args, settings))
    dump_history(history, args.out)
    stdout_console.print(stats_table(history_stats(history)))
    print_summary(summary_line("gen", history.deployment, len(history), None, time.perf_counter() - started))
    return 0


def cmd_check(args, settings) -> int:
    started = time.perf_counter()
    history = load_history(args.input)
    return _check_and_report(history, args, settings, args.input, started, "check")


def cmd_oracle(args, settings) -> int:
    started = time.perf_counter()
    history = load_history(args.input)
    model = _parse_model(args.model, history)
    cap = args.cap if args.cap is not None else settings["checker"].get("oracle_cap", 6)
    result = brute_force_satisfies(history, model, cap)
    if result.satisfied:
        stdout_console.print(f"{model.display_name} witness ar: " + " ".join(f"T{t}" for t in result.ar))
    print_summary(summary_line(f"oracle {model.display_name}", history.deployment, len(history),
                               result.satisfied, time.perf_counter() - started))
    return 0 if result.satisfied else 1


def cmd_mutate(args, settings) -> int:
    started = time.perf_counter()
    history = load_history(args.input)
    axiom = parse_axiom(args.axiom)
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    mutated = mutate(history, axiom, rng)
    dump_history(mutated, args.out)
    stdout_console.print(f"{axiom.value} mutation written to {args.out}; "
                         f"check uses {mutation_model(history.deployment, axiom).display_name}")
    if axiom in TIMESTAMP_MUTATIONS:
        logger.info("%s mutation moves timestamps only; the brute-force oracle may still accept it", axiom.value)
    print_summary(summary_line("mutate", history.deployment, len(mutated), None, time.perf_counter() - started))
    return 0


def cmd_script(args, settings) -> int:
    started = time.perf_counter()
    result = interleave_directed(load_script(args.input))
    if args.out:
        dump_history(result.history, args.out)
    return _check_and_report(result.history, args, settings, args.input, started, "script")


def cmd_pipeline(args, settings) -> int:
    started = time.perf_counter()
    history = run(_sim_config(args, settings))
    if args.out:
        dump_history(history, args.out)
    stdout_console.print(stats_table(history_stats(history)))
    return _check_and_report(history, args, settings, args.out, started, "pipeline")


COMMANDS = {
    "gen": cmd_gen,
    "check": cmd_check,
    "oracle": cmd_oracle,
    "mutate": cmd_mutate,
    "script": cmd_script,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = load_settings(args.settings)
        configure_logging(args.log_level or settings["logging"].get("level", "WARNING"))
        logger.debug("running %s", args.command)
        return COMMANDS[args.command](args, settings)
    except INPUT_ERRORS as e:
        console.print(f"[red]error:[/red] {escape(str(e))}", highlight=False)
        parser.print_usage(sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
