"""Command-line driver: ``spect-bayes run`` and ``spect-bayes validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from spect_bayes import config as cfgmod
from spect_bayes.bayes import SamplerError
from spect_bayes.bayes.chains import THREADS_ENV
from spect_bayes.experiments import run_experiment
from spect_bayes.uncertainty import FitError

log = logging.getLogger("spect_bayes")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spect-bayes",
        description="Ray-traced SPECT reconstruction with posterior sampling.",
        epilog=f"{THREADS_ENV} caps the number of worker processes used for chains.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--experiment", choices=cfgmod.EXPERIMENTS, help="override the config's experiment")
    run.add_argument("--seed", type=int, help="override the sampler seed")
    run.add_argument("--out", help="override the output directory")

    val = sub.add_parser("validate", help="check a config and print it with defaults resolved")
    val.add_argument("--config", required=True, help="JSON config file")
    return p


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    if args.command == "run":
        cfg = cfg.with_overrides(experiment=args.experiment, seed=args.seed, output_dir=args.out)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load(args)
    except FileNotFoundError as e:
        log.error("config not found: %s", e.filename)
        return 2
    except cfgmod.ConfigError as e:
        for msg in e.errors:
            log.error("invalid config: %s", msg)
        return 2

    if args.command == "validate":
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0

    log.info("running %s into %s", cfg.experiment, cfg.output_dir)
    try:
        summary = run_experiment(cfg)
    except (SamplerError, FitError, ValueError, OSError) as e:
        log.error("%s failed: %s", cfg.experiment, e)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
