import argparse
import os
import sys

# 프로젝트 루트 경로를 path에 추가하여 모듈 import가 가능하게 함
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.config_loader import load_settings
from src.constants import DEFAULT_VOLUME_BYTES, EXIT_OK, EXIT_USAGE, REPORT_FORMATS
from src.errors import EcBenchError
from src.logger import configure, get_logger
from src.modules.trace import PROFILES, generate, profile_params, write_trace
from src.services.replay_runner import ReplayRunner, RunSpec
from src.services.report import compare_reports, format_comparison, format_report, load_report
from src.strategies import STRATEGIES
from src.utils.file_validator import validate_output_path, validate_trace_file
from src.utils.input_validator import (
    validate_fail_points,
    validate_flags,
    validate_format,
    validate_profile,
    validate_seed,
    validate_strategies,
)

logger = get_logger(__name__)


class UsageError(Exception):
    pass


def _check(result):
    ok, message, value = result
    if not ok:
        raise UsageError(message)
    if message != "OK":
        print(f"   ⚠️ {message}")
    return value


def run_replay(args):
    settings = load_settings(args.config)
    if args.device_profile:
        settings.config["cluster"]["profile"] = _check(validate_profile(args.device_profile))
    configure(settings.logging_config.get("level"), settings.logging_config.get("dir"))
    if args.dump_config:
        path = settings.save_config(path=args.dump_config)
        print(f"📝 effective config written to {path}")

    strategies = _check(validate_strategies(args.strategy, list(STRATEGIES)))
    flags = _check(validate_flags(args.flags))
    seed = _check(validate_seed(args.seed))
    fmt = _check(validate_format(args.format))
    cluster_size = settings.cluster_config.get("size")
    fail_points = _check(validate_fail_points(args.fail_at, cluster_size))
    trace_path = _check(validate_trace_file(args.trace)) if args.trace else None
    out_path = _check(validate_output_path(args.out)) if args.out else None
    if args.synth and args.synth not in PROFILES:
        raise UsageError(f"unknown profile {args.synth} (choose from {', '.join(PROFILES)})")

    spec = RunSpec(
        strategies=strategies,
        trace_path=trace_path,
        synth_profile=args.synth,
        synth_ops=args.ops,
        seed=seed,
        verify=args.verify,
        flags=flags,
        out_path=out_path,
        fmt=fmt,
        fail_points=fail_points,
        clients=args.clients,
        config_path=args.config,
    )

    print("=" * 50)
    print(f"🚀 ECBench replay: {', '.join(strategies)} on {spec.trace_source} (seed {seed})")
    print("=" * 50)

    runner = ReplayRunner(log_callback=print)
    report, code = runner.run(spec, settings)
    if fmt == "table" or not out_path:
        print(format_report(report))
    return code


def run_compare(args):
    reports = [load_report(path) for path in args.reports]
    comparison = compare_reports(reports, baseline=args.baseline)
    print(format_comparison(comparison))
    return EXIT_OK


def run_gen_trace(args):
    seed = _check(validate_seed(args.seed))
    out_path = _check(validate_output_path(args.out))
    params = profile_params(args.profile, args.ops, seed=seed, volume_bytes=args.volume_bytes)
    count = write_trace(out_path, generate(params))
    print(f"✅ {count} records ({args.profile}, seed {seed}) -> {out_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ecbench",
        description="Erasure-coded update strategy simulator and trace replayer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="replay a trace under one or more strategies")
    replay.add_argument("--config", help="YAML config (default: $ECBENCH_CONFIG or built-ins)")
    replay.add_argument("--strategy", required=True, help="comma list of: " + ",".join(STRATEGIES))
    source = replay.add_mutually_exclusive_group(required=True)
    source.add_argument("--trace", help="trace file (.csv/.txt/.trace, optionally .gz)")
    source.add_argument("--synth", help="synthetic profile: " + ",".join(PROFILES))
    replay.add_argument("--ops", type=int, default=10_000, help="synthetic op count")
    replay.add_argument("--seed", default="0")
    replay.add_argument("--verify", action="store_true", help="check every strategy against the oracle")
    replay.add_argument("--flags", default=None, help="TSUE flags, e.g. o1,o2,o3,o4,o5 ('' turns all off)")
    replay.add_argument("--out", help="report path")
    replay.add_argument("--format", default="json", help="|".join(REPORT_FORMATS))
    replay.add_argument("--fail-at", action="append", default=[], metavar="POS:NODE[:UNTIL]",
                        help="fail NODE before trace position POS and recover it right away, "
                             "or before position UNTIL when given (repeatable)")
    replay.add_argument("--clients", type=int, default=1)
    replay.add_argument("--device-profile", help="override cluster.profile: ssd or hdd")
    replay.add_argument("--dump-config", metavar="PATH", help="write the effective config as YAML")
    replay.set_defaults(func=run_replay)

    compare = sub.add_parser("compare", help="ratio table of two or more reports")
    compare.add_argument("reports", nargs="+")
    compare.add_argument("--baseline", default="tsue")
    compare.set_defaults(func=run_compare)

    gen = sub.add_parser("gen-trace", help="write a synthetic trace")
    gen.add_argument("--profile", required=True, choices=sorted(PROFILES))
    gen.add_argument("--ops", type=int, required=True)
    gen.add_argument("--seed", default="0")
    gen.add_argument("--volume-bytes", type=int, default=DEFAULT_VOLUME_BYTES)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=run_gen_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        return args.func(args)
    except UsageError as e:
        print(f"❌ {e}")
        return EXIT_USAGE
    except EcBenchError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
