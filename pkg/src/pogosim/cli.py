"""``pogosim`` command line entry point: run one simulation from a YAML
config and write its data file, console log and frame images."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from pogosim.config import ConfigError, load_config_tree, set_path
from pogosim.runtime import ControllerError, run_simulation

log = logging.getLogger("pogosim")


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(
            f"override {text!r} must look like dotted.path=value")
    path, raw = text.split("=", 1)
    return path, yaml.safe_load(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pogosim",
        description="Deterministic headless Pogobot swarm simulator.")
    parser.add_argument("-c", "--config", required=True, help="YAML configuration file")
    parser.add_argument("--controller", default=None,
                        help="registered controller name (defaults to the "
                             "config's 'controller' key)")
    parser.add_argument("-o", "--output-dir", default=".",
                        help="directory output paths are resolved against")
    parser.add_argument("overrides", nargs="*", type=parse_override, metavar="path=value",
                        help="config overrides, e.g. objects.robots.nb=2")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = os.environ.get("POGOSIM_LOG_LEVEL",
                           "DEBUG" if args.verbose else
                           "ERROR" if args.quiet else "INFO")
    logging.basicConfig(level=level, format="%(message)s")

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            tree = yaml.safe_load(fh.read()) or {}
        for path, value in args.overrides:
            set_path(tree, path, value)
        config = load_config_tree(tree)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        log.error("configuration error: %s", exc)
        return 1

    try:
        artifacts = run_simulation(config, controller=args.controller,
                                   base_dir=args.output_dir, write_outputs=True)
    except ControllerError as exc:
        log.error("runtime error: %s", exc)
        return 1
    except (KeyError, ValueError) as exc:
        log.error("runtime error: %s", exc)
        return 1

    if config.enable_data_logging:
        if artifacts.data_path is None or not Path(artifacts.data_path).exists():
            log.error("no result file was produced")
            return 1
        log.info("wrote %s (%d rows)", artifacts.data_path, artifacts.recorder.n_rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
