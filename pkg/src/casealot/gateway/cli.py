"""Command-line interface: generate corpora, run and benchmark batch
distributions, inspect traces, verify replay, and serve the HTTP API.

Environment: CASEALOT_PORT and CASEALOT_AUDIT_PATH supply defaults for
--port and --audit-path; explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

from casealot.auditlog import AuditStore
from casealot.corpus import (
    CorpusConfig,
    default_court,
    export,
    generate,
    load_corpus,
    load_court,
)
from casealot.distributor import ConcurrentRunner, build_platform, run_corpus
from casealot.gateway.api import RunManager, create_app
from casealot.rulekit import load_default_rules, parse_rules

THROUGHPUT_FLOOR = 3.15  # lawsuits per second

_KNOWN_ERRORS = (
    "MalformedCaseNumber", "ParseError", "UnknownFactType", "UnknownDirective",
    "UnboundLabel", "NoRuleMatched", "DuplicateAgent", "AgentUnavailable",
    "UnknownAgent", "NoCompetentBody", "Timeout", "DistributionExhausted",
    "PreventionConflict", "RedistributionOfUnknownCase", "StorageFailure",
    "UnknownDistribution", "CorruptJustification", "InvalidConfig",
    "MalformedRecord",
)


def _env_default(name: str, fallback=None):
    value = os.environ.get(name)
    return value if value else fallback


def _add_platform_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", help="corpus.jsonl path")
    parser.add_argument("--court", help="court.json path")
    parser.add_argument("--rules", help="rule file (.rules); defaults to the shipped four rules")
    parser.add_argument("--seed", type=int, default=0, help="seed root for drawings")
    parser.add_argument("--audit-path", default=None,
                        help="audit log file (default: $CASEALOT_AUDIT_PATH, else in-memory)")
    parser.add_argument("--scheduler", choices=("deterministic", "concurrent"),
                        default="deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casealot",
        description="Auditable lawsuit distribution engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic corpus and court")
    gen.add_argument("--n", type=int, required=True, help="number of lawsuits")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--rule-mix", default="0.0015,0.0504,0.0001",
                     help="fractions for rules 1,2,3 (rule 4 takes the rest)")
    gen.add_argument("--impediment-rate", type=float, default=0.0)
    gen.add_argument("--corpus", default="corpus.jsonl", help="output corpus path")
    gen.add_argument("--court", default="court.json", help="output court path")

    run = sub.add_parser("run", help="distribute a corpus and print rule stats")
    _add_platform_args(run)

    bench = sub.add_parser("bench", help="timed run; reports lawsuits/sec")
    bench.add_argument("--n", type=int, default=10_000)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--impediment-rate", type=float, default=0.0)
    bench.add_argument("--scheduler", choices=("deterministic", "concurrent"),
                       default="concurrent")
    bench.add_argument("--audit-path", default=None)

    trace = sub.add_parser("trace", help="print the audit trail of one distribution")
    trace.add_argument("distribution_id")
    trace.add_argument("--audit-path", default=None)
    trace.add_argument("--offset", type=int, default=0)
    trace.add_argument("--limit", type=int, default=None)

    verify = sub.add_parser("verify", help="replay-verify every recorded distribution")
    verify.add_argument("--audit-path", default=None)

    serve = sub.add_parser("serve", help="serve the HTTP API (and console, if built)")
    _add_platform_args(serve)
    serve.add_argument("--port", type=int, default=None,
                       help="default: $CASEALOT_PORT, else 8000")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--console-dir", default=None,
                       help="static console build to mount at /console")

    return parser


def _resolve_audit_path(value):
    return value if value is not None else _env_default("CASEALOT_AUDIT_PATH")


def _load_rules(path: str | None):
    if path is None:
        return load_default_rules()
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def _print_stats(store: AuditStore, out) -> None:
    stats = store.rule_stats()
    total = sum(count for count, _ in stats.values())
    print("rule  count      frequency", file=out)
    for rule, (count, freq) in stats.items():
        print(f"{rule:<5} {count:<10} {freq * 100:.2f}%", file=out)
    print(f"total outcomes: {total}", file=out)


def _outcome_digest(store: AuditStore) -> str:
    digest = hashlib.sha256()
    for dist_id in store.outcome_ids():
        outcome = store.outcome(dist_id)
        digest.update(
            f"{outcome['distribution_id']}|{outcome['case_number']}|"
            f"{outcome['rule_number']}|{outcome['body']}|{outcome['magistrate']}\n".encode()
        )
    return digest.hexdigest()


def _cmd_gen(args, out) -> int:
    mix = tuple(float(f) for f in args.rule_mix.split(","))
    if len(mix) != 3:
        raise ValueError("--rule-mix needs exactly three fractions")
    config = CorpusConfig(
        n_lawsuits=args.n,
        rule_mix=mix,
        impediment_rate=args.impediment_rate,
        seed=args.seed,
    )
    court, records = generate(config)
    export(court, records, args.corpus, args.court)
    c1, c2, c3, c4 = config.planted_counts()
    print(f"wrote {len(records)} lawsuits to {args.corpus} "
          f"(planted rules 1/2/3/4: {c1}/{c2}/{c3}/{c4})", file=out)
    print(f"wrote court ({len(court.magistrates)} magistrates, "
          f"{len(court.bodies)} bodies, {len(court.protocols)} protocols) to {args.court}",
          file=out)
    return 0


def _build_from_args(args, records_required: bool = True):
    court = load_court(args.court) if args.court else default_court()
    rules = _load_rules(args.rules)
    store = AuditStore(_resolve_audit_path(args.audit_path))
    platform = build_platform(court, rules, seed_root=args.seed, store=store)
    records = load_corpus(args.corpus) if args.corpus else []
    if records_required and not records:
        raise ValueError("a non-empty --corpus is required")
    return platform, records


def _cmd_run(args, out) -> int:
    platform, records = _build_from_args(args)
    t0 = time.perf_counter()
    if args.scheduler == "concurrent":
        ConcurrentRunner(platform).run(records)
    else:
        run_corpus(platform, records)
    elapsed = time.perf_counter() - t0
    store = platform.store
    _print_stats(store, out)
    trace_records = sum(store.trace_sizes().values())
    n = len(records)
    print(f"distributed {n} lawsuits in {elapsed:.2f}s "
          f"({n / elapsed:.2f} lawsuits/sec, {args.scheduler} scheduler)", file=out)
    print(f"trace records: {trace_records} ({trace_records / n:.1f} per lawsuit)", file=out)
    print(f"outcome digest: {_outcome_digest(store)}", file=out)
    return 0


def _cmd_bench(args, out) -> int:
    config = CorpusConfig(n_lawsuits=args.n, seed=args.seed,
                          impediment_rate=args.impediment_rate)
    court, records = generate(config)
    store = AuditStore(_resolve_audit_path(args.audit_path))
    platform = build_platform(court, seed_root=args.seed, store=store)
    t0 = time.perf_counter()
    if args.scheduler == "concurrent":
        ConcurrentRunner(platform).run(records)
    else:
        run_corpus(platform, records)
    elapsed = time.perf_counter() - t0
    rate = len(records) / elapsed
    print(f"{len(records)} lawsuits in {elapsed:.2f}s: {rate:.2f} lawsuits/sec "
          f"({args.scheduler} scheduler)", file=out)
    print(f"floor {THROUGHPUT_FLOOR} lawsuits/sec: "
          f"{'PASS' if rate >= THROUGHPUT_FLOOR else 'FAIL'} "
          f"({rate / THROUGHPUT_FLOOR:.0f}x)", file=out)
    return 0 if rate >= THROUGHPUT_FLOOR else 1


def _open_store(args) -> AuditStore:
    path = _resolve_audit_path(args.audit_path)
    if not path:
        raise ValueError("--audit-path (or CASEALOT_AUDIT_PATH) is required")
    return AuditStore.load(path)


def _cmd_trace(args, out) -> int:
    store = _open_store(args)
    view = store.trace(args.distribution_id)
    records = view.records[args.offset:]
    if args.limit is not None:
        records = records[: args.limit]
    print(f"distribution {args.distribution_id}: {len(view.records)} records"
          + (f", supersedes {view.predecessor}" if view.predecessor else "")
          + (f", superseded by {', '.join(view.successors)}" if view.successors else ""),
          file=out)
    print(f"{'#':<8} {'date':<12} {'time':<14} {'agent':<10} action", file=out)
    from casealot.gateway.api import trace_action_detail

    for r in records:
        date, _, clock = r.ts.partition("T")
        detail = trace_action_detail(r.action, r.payload)
        print(f"{r.seq:<8} {date:<12} {clock.rstrip('Z'):<14} {r.agent:<10} {detail}",
              file=out)
    if view.outcome:
        print(f"outcome: rule {view.outcome['rule_number']} "
              f"({view.outcome['fired_rule']}) -> {view.outcome['body']} / "
              f"{view.outcome['magistrate']}", file=out)
    return 0


def _cmd_verify(args, out) -> int:
    store = _open_store(args)
    ok, failed = store.verify_all()
    total = len(ok) + len(failed)
    if failed:
        print(f"FAILED: {len(failed)}/{total} distributions do not replay: "
              f"{', '.join(failed[:10])}", file=out)
        return 1
    print(f"ok: {len(ok)}/{total} replayed", file=out)
    return 0


def _cmd_serve(args, out) -> int:
    import uvicorn

    platform, records = _build_from_args(args, records_required=False)
    manager = RunManager(platform, scheduler=args.scheduler)
    manager.preloaded = records
    console_dir = args.console_dir or _env_default("CASEALOT_CONSOLE_DIR")
    app = create_app(platform, manager, console_dir=console_dir)
    port = args.port if args.port is not None else int(_env_default("CASEALOT_PORT", "8000"))
    print(f"serving on http://{args.host}:{port} "
          f"({len(records)} lawsuits preloaded)", file=out)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = sys.stdout
    commands = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "bench": _cmd_bench,
        "trace": _cmd_trace,
        "verify": _cmd_verify,
        "serve": _cmd_serve,
    }
    try:
        return commands[args.command](args, out)
    except Exception as e:
        if type(e).__name__ in _KNOWN_ERRORS or isinstance(e, (ValueError, OSError)):
            print(f"error: {e}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
