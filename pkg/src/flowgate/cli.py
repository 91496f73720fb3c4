"""Command-line entry point.

Exit codes: 0 success, 2 configuration or environment error, 3 a scenario
expectation did not hold.
"""
from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Optional

from .access import AccessList, AccessListError, AddResult, Kind
from .alert_wire import BindFailure
from .controller import ConfigError, ControllerConfig
from .detector import RuleError, format_rule, load_rules
from .events import StoreFormatError, read_log
from .packet import MacAddr, PacketError
from .scenario import ConfigError as ScenarioConfigError
from .scenario import check_expectations, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPECTATION = 3
CONFIG_ENV = "FLOWGATE_CONFIG"


class CliError(Exception):
    """Configuration or environment problem; maps to exit code 2."""


def _config(args) -> ControllerConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return ControllerConfig()
    try:
        return ControllerConfig.load(path)
    except ConfigError as exc:
        raise CliError(str(exc)) from exc


def _store_path(args) -> Path:
    return Path(args.store) if args.store else _config(args).event_store


def cmd_run(args) -> int:
    from .live import start_live

    config = _config(args)
    try:
        live, tap = start_live(config)
    except (BindFailure, AccessListError, OSError) as exc:
        raise CliError(str(exc)) from exc
    print("alert listener on {}:{}".format(*live.alert_address), flush=True)
    print("switch listener on {}:{}".format(*live.switch_address), flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    try:
        while not stop.wait(0.2):
            pass
    finally:
        if tap is not None:
            tap.stop()
        live.drain(timeout=2.0)
        live.stop()
    print("stopped; event store flushed", flush=True)
    return EXIT_OK


def cmd_scenario(args) -> int:
    try:
        spec = load_scenario(args.file, seed=args.seed)
    except (ScenarioConfigError, RuleError, AccessListError, PacketError, OSError) as exc:
        raise CliError(str(exc)) from exc
    store = Path(args.store) if args.store else Path(f"{spec.name}-events.jsonl")
    result = spec.run(event_store=store)
    print(result.summary())
    try:
        failures = check_expectations(result, spec.expect)
    except ScenarioConfigError as exc:
        raise CliError(str(exc)) from exc
    if failures:
        for line in failures:
            print(f"EXPECTATION FAILED: {line}")
        return EXIT_EXPECTATION
    if spec.expect:
        print(f"expectations: {len(spec.expect)} checked, all hold")
    return EXIT_OK


def _load_lists(config: ControllerConfig) -> tuple[AccessList, AccessList]:
    try:
        return (AccessList.load(config.whitelist, Kind.WHITELIST),
                AccessList.load(config.blacklist, Kind.BLACKLIST))
    except AccessListError as exc:
        raise CliError(str(exc)) from exc


def cmd_lists(args) -> int:
    config = _config(args)
    if args.action == "show":
        white, black = _load_lists(config)
        print(f"whitelist ({config.whitelist}):")
        for mac in white.as_strings():
            print(f"  {mac}")
        print(f"blacklist ({config.blacklist}):")
        for mac in black.as_strings():
            print(f"  {mac}")
        return EXIT_OK
    try:
        mac = MacAddr.parse(args.mac)
        black = AccessList.load(config.blacklist, Kind.BLACKLIST)
        result = black.blacklist_add(mac)
    except (PacketError, AccessListError) as exc:
        raise CliError(str(exc)) from exc
    if result is AddResult.INSERTED:
        print(f"MAC {mac} inserted in Blacklist")
    else:
        print(f"MAC {mac} already in Blacklist")
    return EXIT_OK


def _read_store(args):
    path = _store_path(args)
    if not path.exists():
        raise CliError(f"event store {path} does not exist")
    try:
        return read_log(path).events
    except (StoreFormatError, OSError) as exc:
        raise CliError(str(exc)) from exc


def cmd_events(args) -> int:
    events = _read_store(args)
    if args.action == "stats":
        counts = {}
        for ev in events:
            counts[ev.class_] = counts.get(ev.class_, 0) + 1
        for cls in sorted(counts, key=lambda c: (c is None, c or 0)):
            print(f"{'none' if cls is None else cls}:{counts[cls]}")
        return EXIT_OK
    from .events import query

    src = None
    if args.src_mac:
        try:
            src = MacAddr.parse(args.src_mac)
        except PacketError as exc:
            raise CliError(str(exc)) from exc
    for ev in query(events, class_=args.class_, src_mac=src, since=args.since,
                    until=args.until, action=args.action_taken):
        print(ev.to_line())
    return EXIT_OK


def cmd_rules(args) -> int:
    try:
        rules = load_rules(args.file)
    except RuleError as exc:
        raise CliError(f"{args.file}: {exc}") from exc
    except OSError as exc:
        raise CliError(f"cannot read {args.file}: {exc}") from exc
    for rule in rules:
        print(format_rule(rule))
    print(f"{len(rules)} rule(s) OK", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help=f"controller config file (default: ${CONFIG_ENV})")
    common.add_argument("--store", default=argparse.SUPPRESS, help="event log path")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the scenario seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="flowgate", parents=[common],
                                     description="SDN intrusion detection and treatment")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run the live controller")
    run.set_defaults(func=cmd_run)

    scen = sub.add_parser("scenario", parents=[common], help="replay a scenario file")
    scen.add_argument("file", help="scenario file, or the name of a shipped scenario")
    scen.set_defaults(func=cmd_scenario)

    lists = sub.add_parser("lists", parents=[common], help="show or edit access lists")
    lists_sub = lists.add_subparsers(dest="action", required=True)
    lists_sub.add_parser("show", parents=[common])
    add = lists_sub.add_parser("add-black", parents=[common])
    add.add_argument("mac")
    lists.set_defaults(func=cmd_lists)

    events = sub.add_parser("events", parents=[common], help="inspect the event store")
    events_sub = events.add_subparsers(dest="action", required=True)
    q = events_sub.add_parser("query", parents=[common])
    q.add_argument("--class", dest="class_", type=int)
    q.add_argument("--src-mac")
    q.add_argument("--since", type=int)
    q.add_argument("--until", type=int)
    q.add_argument("--action", dest="action_taken")
    events_sub.add_parser("stats", parents=[common])
    events.set_defaults(func=cmd_events)

    rules = sub.add_parser("rules", parents=[common], help="validate rule files")
    rules_sub = rules.add_subparsers(dest="action", required=True)
    check = rules_sub.add_parser("check", parents=[common])
    check.add_argument("file")
    rules.set_defaults(func=cmd_rules)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "store", "seed", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"flowgate: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
