"""Sweep expansion and parallel batch running.

A config may annotate any leaf with a ``batch_options`` list; the batch
runner expands the full Cartesian product of those options, runs R
independently seeded simulations per combination (in parallel, embedded
or through an external simulator command), and merges each combination's
rows into an output file named by ``result_filename_format``, gaining a
``run`` column and one column per ``result_new_columns`` entry.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import logging
import os
import re
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import pyarrow as pa
import pyarrow.feather as feather
import yaml

from pogosim.config import (
    SimConfig,
    SweepAnnotation,
    extract_sweeps,
    get_path,
    load_config_tree,
    set_path,
)

log = logging.getLogger("pogobatch")

_TOKEN = re.compile(r"\{([A-Za-z0-9_.]+)\}")


class BatchError(RuntimeError):
    pass


def expand(config_tree: dict, annotations: list[SweepAnnotation] | None = None
           ) -> list[dict]:
    """Cartesian product of all sweep options, as resolved raw trees.

    Ordering is deterministic: annotations sorted by path, options kept in
    declaration order, the last annotation varying fastest.
    """
    if annotations is None:
        annotations = extract_sweeps(config_tree)
    annotations = sorted(annotations, key=lambda a: a.path)
    if not annotations:
        tree = copy.deepcopy(config_tree)
        return [tree]
    trees = []
    for combo in itertools.product(*(a.options for a in annotations)):
        tree = copy.deepcopy(config_tree)
        for annotation, value in zip(annotations, combo):
            set_path(tree, annotation.path, value)
        trees.append(tree)
    return trees


def format_result_name(template: str, tree: dict) -> str:
    """Substitute {dotted.path} tokens with values from the config tree."""

    def sub(match):
        return str(get_path(tree, match.group(1)))

    return _TOKEN.sub(sub, template)


@dataclass
class BatchPlan:
    combinations: list[tuple[dict, str]]  # (resolved tree, output file name)
    runs: int
    output_dir: Path
    temp_dir: Path | None = None
    result_new_columns: list[str] = field(default_factory=list)


def make_plan(config_tree: dict, runs: int, output_dir=".", temp_dir=None) -> BatchPlan:
    trees = expand(config_tree)
    log.info("Found %d combination(s) to run.", len(trees))
    template = config_tree.get("result_filename_format", "result.feather")
    new_columns = list(config_tree.get("result_new_columns", []))
    combos = [(tree, format_result_name(template, tree)) for tree in trees]
    return BatchPlan(combinations=combos, runs=runs, output_dir=Path(output_dir),
                     temp_dir=Path(temp_dir) if temp_dir else None,
                     result_new_columns=new_columns)


def _clean_tree(tree: dict) -> dict:
    """Strip batch-only keys so a combination validates as a plain config."""
    tree = copy.deepcopy(tree)
    tree.pop("result_filename_format", None)
    tree.pop("result_new_columns", None)
    return tree


def _run_embedded(args) -> str:
    """One seeded run in a worker process; returns the temp feather path."""
    yaml_text, controller, out_dir, run_index = args
    from pogosim.config import load_config
    from pogosim.runtime import run_simulation

    config = load_config(yaml_text)
    artifacts = run_simulation(config, controller=controller, base_dir=out_dir,
                               write_outputs=False)
    path = Path(out_dir) / f"run_{run_index}.feather"
    artifacts.recorder.write(path)
    return str(path)


def _run_external(sim_command: str, conf_path: Path, out_dir: Path) -> Path:
    cmd = shlex.split(sim_command) + ["-c", str(conf_path), "-o", str(out_dir)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BatchError(f"run failed ({' '.join(cmd)}):\n{proc.stdout}\n{proc.stderr}")
    produced = sorted(out_dir.rglob("*.feather"), key=lambda p: p.stat().st_mtime)
    if not produced:
        raise BatchError(f"run produced no result file ({' '.join(cmd)})")
    return produced[-1]


def _augment(table: pa.Table, run_index: int, new_columns: list[str],
             tree: dict) -> pa.Table:
    n = table.num_rows
    table = table.append_column("run", pa.array([run_index] * n, pa.int32()))
    for path in new_columns:
        name = path.split(".")[-1]
        table = table.append_column(name, pa.array([get_path(tree, path)] * n))
    return table


def run_batch(plan: BatchPlan, sim_command: str | None = None,
              controller: str | None = None, parallelism: int | None = None
              ) -> list[Path]:
    """Run every (combination, run) pair and merge rows per output name."""
    plan.output_dir.mkdir(parents=True, exist_ok=True)

    # a previous invocation may have left same-named outputs behind
    for _, name in plan.combinations:
        target = plan.output_dir / name
        if target.exists():
            target.unlink()
            log.info("Removed stale result file %s", target)

    written: list[Path] = []
    with tempfile.TemporaryDirectory(dir=plan.temp_dir) as tmp:
        tmp = Path(tmp)
        for ci, (tree, name) in enumerate(plan.combinations):
            clean = _clean_tree(tree)
            base_seed = int(clean.get("seed", 0))
            run_dirs = []
            jobs = []
            for r in range(plan.runs):
                run_tree = copy.deepcopy(clean)
                run_tree["seed"] = base_seed + r
                run_dir = tmp / f"combo_{ci}_run_{r}"
                run_dir.mkdir(parents=True)
                run_dirs.append(run_dir)
                jobs.append((run_tree, run_dir, r))

            tables = [None] * plan.runs
            if sim_command is None:
                workers = parallelism or os.cpu_count() or 1
                args = [(yaml.safe_dump(run_tree), controller, str(run_dir), r)
                        for run_tree, run_dir, r in jobs]
                if workers > 1 and plan.runs > 1:
                    with ProcessPoolExecutor(max_workers=workers) as pool:
                        paths = list(pool.map(_run_embedded, args))
                else:
                    paths = [_run_embedded(a) for a in args]
                for r, path in enumerate(paths):
                    tables[r] = feather.read_table(path)
            else:
                for run_tree, run_dir, r in jobs:
                    conf_path = run_dir / "config.yaml"
                    conf_path.write_text(yaml.safe_dump(run_tree), encoding="utf-8")
                    tables[r] = feather.read_table(
                        _run_external(sim_command, conf_path, run_dir))

            merged = pa.concat_tables(
                _augment(t, r, plan.result_new_columns, tree)
                for r, t in enumerate(tables))
            target = plan.output_dir / name
            if target.exists():
                previous = feather.read_table(target)
                merged = pa.concat_tables([previous, merged])
                verb = "Appended"
            else:
                verb = "Created"
            metadata = dict(tables[0].schema.metadata or {})
            merged = merged.replace_schema_metadata(metadata)
            feather.write_feather(merged, target, compression="uncompressed")
            log.info("%s %s with %d rows", verb, target, merged.num_rows)
            written.append(target)

    unique = list(dict.fromkeys(written))
    log.info("Generated output files: %s", ", ".join(str(p) for p in unique))
    return unique


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pogobatch",
        description="Expand sweep options and run seeded simulation batches.")
    parser.add_argument("-c", "--config", required=True)
    parser.add_argument("-S", "--simulator", default=None,
                        help="external simulator command; omit to run embedded")
    parser.add_argument("-r", "--runs", type=int, default=1)
    parser.add_argument("-t", "--temp-dir", default=None)
    parser.add_argument("-o", "--output-dir", default=".")
    parser.add_argument("--controller", default=None)
    parser.add_argument("-p", "--parallelism", type=int, default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("POGOSIM_LOG_LEVEL", "INFO"),
                        format="%(message)s")
    with open(args.config, "r", encoding="utf-8") as fh:
        tree = yaml.safe_load(fh.read()) or {}
    plan = make_plan(tree, runs=args.runs, output_dir=args.output_dir,
                     temp_dir=args.temp_dir)
    try:
        run_batch(plan, sim_command=args.simulator, controller=args.controller,
                  parallelism=args.parallelism)
    except BatchError as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
