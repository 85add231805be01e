"""Command line entry point (``mutrl``)."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from mutrl.campaign import (FORMATS, HEALTHY, PROFILES, Campaign, CampaignConfig, criterion_from_name,
                            export_report)
from mutrl.errors import ConfigurationError, MutationParseError


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML campaign configuration")
    common.add_argument("--out", help="campaign directory (overrides the config)")
    common.add_argument("--seeds", type=int, metavar="BASE", help="seed base (overrides the config)")
    common.add_argument("--parallelism", type=int, metavar="K", help="concurrent training runs")
    common.add_argument("--profile", choices=sorted(PROFILES), help="defaults for unset config keys")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mutrl", description="Mutation testing for reinforcement learning agents.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train healthy and first-order mutant populations")
    sub.add_parser("gen-envs", parents=[common], help="generate boundary test environments")
    kill = sub.add_parser("kill", parents=[common], help="build kill matrices")
    kill.add_argument("--criterion", required=True, choices=["avg", "r", "dtr"])
    hom = sub.add_parser("hom", parents=[common], help="compose and classify higher-order mutants")
    hom.add_argument("--criterion", choices=["avg", "r", "dtr"], help="default: every configured criterion")
    report = sub.add_parser("report", parents=[common], help="write report tables")
    report.add_argument("--format", choices=FORMATS, action="append", help="default: all formats")
    sub.add_parser("run", parents=[common], help="full pipeline")
    return parser


def _config(args) -> CampaignConfig:
    if args.config:
        config = CampaignConfig.load(args.config, args.profile)
    else:
        config = CampaignConfig.from_dict({}, args.profile)
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seeds is not None:
        changes["seed_base"] = args.seeds
    if args.parallelism is not None:
        changes["parallelism"] = args.parallelism
    return config.replace(**changes) if changes else config


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
        campaign = Campaign(config)
        pairs = [(a, e) for e in config.environments for a in config.algorithms]
        if args.command == "train":
            for algo_id, env_id in pairs:
                names = [HEALTHY] + [m.name for m in campaign.applicable_mutations(algo_id, env_id)]
                pops = campaign.train_populations(algo_id, env_id, names)
                failed = [n for n, p in pops.items() if not p.complete]
                print(f"{env_id}/{algo_id}: {len(pops)} populations, {len(failed)} incomplete")
        elif args.command == "gen-envs":
            for algo_id, env_id in pairs:
                env_set = campaign.environments(algo_id, env_id)
                print(json.dumps({"env_id": env_id, "algo": algo_id, "environments": env_set.to_json()}, indent=2))
        elif args.command == "kill":
            criterion = criterion_from_name(args.criterion)
            for algo_id, env_id in pairs:
                matrix = campaign.kill_matrix(algo_id, env_id, criterion)
                for m in matrix.rows:
                    print(f"{env_id}/{algo_id}/{criterion} {m.name}: {matrix.kill_count(m.name)}/{len(matrix.columns)}")
        elif args.command == "hom":
            criteria = [criterion_from_name(args.criterion)] if args.criterion else list(config.criteria)
            for algo_id, env_id in pairs:
                for criterion in criteria:
                    rep = campaign.homs(algo_id, env_id, criterion)
                    print(f"{env_id}/{algo_id}/{criterion}: {json.dumps(rep.summary(), sort_keys=True)}"
                          + (f" ({rep.reason})" if rep.reason else ""))
        elif args.command == "report":
            report = campaign.report()
            for fmt in args.format or FORMATS:
                for path in export_report(report, fmt, os.path.join(campaign.out, "reports")):
                    print(path)
        else:  # run
            report = campaign.report()
            for path in campaign.write_report(report):
                print(path)
            for gap in report.gaps:
                print(f"gap: {gap}", file=sys.stderr)
    except (ConfigurationError, MutationParseError) as exc:
        print(f"mutrl: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
