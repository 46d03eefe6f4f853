"""Offline black-box optimization of controller parameters.

Parameters annotated with ``optimization_domain`` under ``parameters:``
define a normalized search space in [0,1]^d. Candidates are decoded into
concrete configs, evaluated by seeded simulation runs, and scored with a
pluggable objective (default: mean squared displacement). Three methods:
random search, CMA-ES, and MAP-Elites quality diversity.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.feather as feather
import yaml

from pogosim.config import (
    OptimAnnotation,
    extract_optim_domains,
    set_path,
)

log = logging.getLogger("pogoptim")

NEG_INF = float("-inf")


class OptimError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# search space


@dataclass
class SearchSpace:
    """Bijection between annotated config values and [0,1]^d vectors."""

    dims: list[OptimAnnotation]

    def __post_init__(self):
        if not self.dims:
            raise OptimError("nothing to optimize: no optimization_domain found")

    @property
    def d(self) -> int:
        return len(self.dims)

    def encode(self, values: dict) -> np.ndarray:
        x = np.empty(self.d)
        for k, ann in enumerate(self.dims):
            v = values[ann.path]
            if ann.kind == "categorical":
                i = ann.choices.index(v)
                x[k] = (i + 0.5) / len(ann.choices)
            else:
                x[k] = (float(v) - ann.min) / (ann.max - ann.min)
        return x

    def decode(self, x: np.ndarray) -> dict:
        values = {}
        for k, ann in enumerate(self.dims):
            u = min(max(float(x[k]), 0.0), 1.0)
            if ann.kind == "categorical":
                i = min(int(u * len(ann.choices)), len(ann.choices) - 1)
                values[ann.path] = ann.choices[i]
            elif ann.kind == "int":
                values[ann.path] = int(round(ann.min + u * (ann.max - ann.min)))
            else:
                values[ann.path] = ann.min + u * (ann.max - ann.min)
        return values

    def initial_point(self) -> np.ndarray:
        x = np.full(self.d, 0.5)
        for k, ann in enumerate(self.dims):
            if ann.init is not None:
                x[k] = self._encode_one(k, ann.init)
        return x

    def _encode_one(self, k: int, value) -> float:
        ann = self.dims[k]
        if ann.kind == "categorical":
            return (ann.choices.index(value) + 0.5) / len(ann.choices)
        return (float(value) - ann.min) / (ann.max - ann.min)


def space_from_tree(config_tree: dict) -> SearchSpace:
    return SearchSpace(extract_optim_domains(config_tree))


# ---------------------------------------------------------------------------
# default scoring


def per_agent_msd(table: pa.Table) -> np.ndarray:
    """Mean squared displacement of each agent from its first recorded
    position, averaged over its samples; one value per (run, robot)."""
    df = table.select([c for c in ("time", "robot_id", "x", "y", "run")
                       if c in table.column_names]).to_pandas()
    df = df[df.robot_id < 65534]  # walls/membranes are not agents
    if df.empty:
        return np.empty(0)
    keys = ["run", "robot_id"] if "run" in df.columns else ["robot_id"]
    df = df.sort_values(keys + ["time"])
    out = []
    for _, g in df.groupby(keys, sort=True):
        dx = g.x.to_numpy() - g.x.iloc[0]
        dy = g.y.to_numpy() - g.y.iloc[0]
        out.append(float(np.mean(dx * dx + dy * dy)))
    return np.asarray(out)


def objective_default(table: pa.Table) -> float:
    msd = per_agent_msd(table)
    if msd.size == 0:
        log.warning("objective: empty records, returning -inf")
        return NEG_INF
    return float(msd.mean())


def features_default(table: pa.Table) -> tuple[float, float]:
    msd = per_agent_msd(table)
    if msd.size == 0:
        return (0.0, 0.0)
    return (float(msd.max()), float(msd.std()))  # population stddev


def script_scorer(script_path: str):
    """Objective plugin protocol: the script receives the merged result
    file path and prints one float per line (fitness, then features)."""

    def score(result_path: Path) -> list[float]:
        cmd = ([sys.executable, script_path] if script_path.endswith(".py")
               else [script_path])
        proc = subprocess.run(cmd + [str(result_path)], capture_output=True,
                              text=True)
        if proc.returncode != 0:
            raise OptimError(f"objective script failed:\n{proc.stderr}")
        return [float(line) for line in proc.stdout.split() if line.strip()]

    return score


# ---------------------------------------------------------------------------
# evaluation of one candidate


@dataclass
class Evaluation:
    params: dict
    fitness: float
    features: tuple[float, float] | None = None
    result_path: Path | None = None


def make_evaluator(config_tree: dict, space: SearchSpace, runs_per_eval: int,
                   sim_command: str | None = None, controller: str | None = None,
                   objective=None, features=None, work_dir=None, keep_results=False):
    """Evaluator closure: normalized vector -> Evaluation.

    Each evaluation expands into runs_per_eval seeded runs through the
    batch runner; the merged rows are scored in-process (default MSD
    objective) or by an external script receiving the file path.
    """
    from pogosim.batch import BatchPlan, run_batch

    objective = objective or objective_default
    features = features or features_default
    counter = [0]

    def evaluate(x: np.ndarray) -> Evaluation:
        values = space.decode(x)
        tree = copy.deepcopy(config_tree)
        for path, value in values.items():
            set_path(tree, path, value)
        with tempfile.TemporaryDirectory(dir=work_dir) as tmp:
            name = f"eval_{counter[0]:05d}.feather"
            counter[0] += 1
            plan = BatchPlan(combinations=[(tree, name)], runs=runs_per_eval,
                             output_dir=Path(tmp))
            try:
                out = run_batch(plan, sim_command=sim_command, controller=controller,
                                parallelism=1)[0]
            except Exception as exc:
                log.warning("evaluation failed (%s); fitness -inf", exc)
                return Evaluation(params=values, fitness=NEG_INF)
            table = feather.read_table(out)
            if callable(objective) and not isinstance(objective, str):
                fit = objective(table)
                feats = features(table)
            else:
                scores = script_scorer(objective)(out)
                fit = scores[0] if scores else NEG_INF
                feats = tuple(scores[1:3]) if len(scores) >= 3 else features_default(table)
        if not math.isfinite(fit) and fit != NEG_INF:
            fit = NEG_INF
        return Evaluation(params=values, fitness=fit, features=feats)

    return evaluate


# ---------------------------------------------------------------------------
# CMA-ES (standard (mu/mu_w, lambda) strategy with published defaults)


class CMAES:
    def __init__(self, x0: np.ndarray, sigma0: float = 0.3, popsize: int | None = None,
                 rng: np.random.Generator | None = None):
        n = len(x0)
        self.n = n
        self.rng = rng or np.random.default_rng()
        self.mean = np.asarray(x0, dtype=float).copy()
        self.sigma = sigma0
        self.lam = popsize or 4 + int(3 * math.log(n))
        mu = self.lam // 2
        raw = np.array([math.log(self.lam / 2 + 0.5) - math.log(i + 1)
                        for i in range(mu)])
        self.weights = raw / raw.sum()
        self.mu = mu
        self.mueff = 1.0 / float(np.sum(self.weights ** 2))
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 2 * self.mueff / self.lam + 0.3 + self.cs
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.gen = 0
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    def ask(self, count: int | None = None) -> list[np.ndarray]:
        count = count or self.lam
        vals, vecs = np.linalg.eigh(self.C)
        vals = np.maximum(vals, 1e-20)
        self._sqrt_c = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
        self._inv_sqrt_c = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
        self._asked = [self.mean + self.sigma * (self._sqrt_c @ self.rng.standard_normal(self.n))
                       for _ in range(count)]
        return [x.copy() for x in self._asked]

    def tell(self, solutions: list[np.ndarray], fitnesses: list[float]) -> None:
        order = np.argsort(fitnesses)[::-1]  # maximize
        mu = min(self.mu, len(solutions))
        if mu == 0:
            return
        weights = self.weights[:mu]
        weights = weights / weights.sum()
        selected = np.array([solutions[i] for i in order[:mu]])
        old_mean = self.mean.copy()
        self.mean = weights @ selected

        y = (self.mean - old_mean) / self.sigma
        self.ps = ((1 - self.cs) * self.ps
                   + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (self._inv_sqrt_c @ y))
        hsig = (np.linalg.norm(self.ps)
                / math.sqrt(1 - (1 - self.cs) ** (2 * (self.gen + 1)))
                / self.chi_n) < 1.4 + 2 / (self.n + 1)
        self.pc = ((1 - self.cc) * self.pc
                   + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y)

        artmp = (selected - old_mean) / self.sigma
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc)
                               + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * (artmp.T @ (weights[:, None] * artmp)))
        self.sigma *= math.exp((self.cs / self.damps)
                               * (np.linalg.norm(self.ps) / self.chi_n - 1))
        self.sigma = min(self.sigma, 1.0)
        self.gen += 1


# ---------------------------------------------------------------------------
# MAP-Elites archive


class EliteArchive:
    """Feature-space grid; each cell keeps its best-ever evaluation."""

    def __init__(self, bounds: list[tuple[float, float]], resolution: int = 10):
        self.bounds = bounds
        self.resolution = resolution
        self.cells: dict[tuple, tuple[np.ndarray, Evaluation]] = {}

    def _cell(self, features) -> tuple:
        idx = []
        for (lo, hi), f in zip(self.bounds, features):
            u = 0.0 if hi <= lo else (f - lo) / (hi - lo)
            idx.append(min(max(int(u * self.resolution), 0), self.resolution - 1))
        return tuple(idx)

    def add(self, x: np.ndarray, evaluation: Evaluation) -> bool:
        if evaluation.features is None or evaluation.fitness == NEG_INF:
            return False
        key = self._cell(evaluation.features)
        held = self.cells.get(key)
        if held is None or evaluation.fitness > held[1].fitness:
            self.cells[key] = (x.copy(), evaluation)
            return True
        return False

    def elites(self) -> list[tuple[np.ndarray, Evaluation]]:
        return list(self.cells.values())


# ---------------------------------------------------------------------------
# drivers


@dataclass
class OptimResult:
    best: Evaluation
    history: list[float] = field(default_factory=list)  # best-so-far per generation
    evaluations: int = 0
    archive: EliteArchive | None = None


def optimize(space: SearchSpace, evaluator, method: str = "cmaes",
             max_evals: int = 100, seed: int = 0,
             feature_bounds=None, archive_resolution: int = 10) -> OptimResult:
    if max_evals < 1:
        raise OptimError("max_evals must be >= 1")
    rng = np.random.default_rng(seed)
    best: Evaluation | None = None
    history: list[float] = []
    used = 0

    def consider(x, ev):
        nonlocal best
        if best is None or ev.fitness > best.fitness:
            best = ev

    if method == "random":
        gen = 0
        while used < max_evals:
            pop = min(max(1, space.d * 4), max_evals - used)
            gen += 1
            log.info("gen %03d: pop=%d", gen, pop)
            for _ in range(pop):
                x = rng.random(space.d)
                consider(x, evaluator(x))
                used += 1
            history.append(best.fitness)
        return OptimResult(best=best, history=history, evaluations=used)

    if method == "cmaes":
        es = CMAES(space.initial_point(), sigma0=0.3, rng=rng)
        gen = 0
        while used < max_evals:
            count = min(es.lam, max_evals - used)
            gen += 1
            log.info("gen %03d: pop=%d", gen, count)
            xs = es.ask(count)
            xs = [np.clip(x, 0.0, 1.0) for x in xs]
            evs = [evaluator(x) for x in xs]
            used += count
            for x, ev in zip(xs, evs):
                consider(x, ev)
            fits = [ev.fitness if math.isfinite(ev.fitness) else -1e30
                    for ev in evs]
            es.tell(xs, fits)
            history.append(best.fitness)
        return OptimResult(best=best, history=history, evaluations=used)

    if method == "mapelites":
        bounds = feature_bounds or [(0.0, 1.0), (0.0, 1.0)]
        archive = EliteArchive(bounds, archive_resolution)
        bootstrap = max(1, max_evals // 10)
        gen = 0
        while used < max_evals:
            if used < bootstrap or not archive.cells:
                x = rng.random(space.d)
            else:
                elites = archive.elites()
                parent = elites[rng.integers(len(elites))][0]
                x = np.clip(parent + rng.normal(0.0, 0.1, space.d), 0.0, 1.0)
            ev = evaluator(x)
            used += 1
            consider(x, ev)
            archive.add(x, ev)
            gen += 1
            if gen % 10 == 0 or used == max_evals:
                log.info("gen %03d: pop=1 archive=%d", gen, len(archive.cells))
            history.append(best.fitness)
        return OptimResult(best=best, history=history, evaluations=used,
                           archive=archive)

    raise OptimError(f"unknown optimizer {method!r} (random, cmaes, mapelites)")


# ---------------------------------------------------------------------------
# CLI


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pogoptim",
        description="Optimize controller parameters over simulation runs.")
    parser.add_argument("-c", "--config", required=True)
    parser.add_argument("-S", "--simulator", default=None,
                        help="external simulator command; omit to run embedded")
    parser.add_argument("-r", "--runs", type=int, default=1,
                        help="simulation runs per evaluation")
    parser.add_argument("--max-evals", type=int, default=100)
    parser.add_argument("--optimizer", default="cmaes",
                        choices=("random", "cmaes", "mapelites"))
    parser.add_argument("--objective", default=None,
                        help="external scorer script (gets the merged result "
                             "file path, prints one float per line)")
    parser.add_argument("--controller", default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("POGOSIM_LOG_LEVEL", "INFO"),
                        format="%(message)s")
    with open(args.config, "r", encoding="utf-8") as fh:
        tree = yaml.safe_load(fh.read()) or {}

    try:
        space = space_from_tree(tree)
        log.info("Optimizing %d parameter(s): %s, max_evals=%d (normalized space)",
                 space.d, [a.path for a in space.dims], args.max_evals)
        evaluator = make_evaluator(tree, space, runs_per_eval=args.runs,
                                   sim_command=args.simulator,
                                   controller=args.controller,
                                   objective=args.objective or None)
        result = optimize(space, evaluator, method=args.optimizer,
                          max_evals=args.max_evals, seed=args.seed)
    except OptimError as exc:
        log.error("%s", exc)
        return 1
    log.info("Best fitness: %s", result.best.fitness)
    log.info("Best values: %s", result.best.params)
    return 0


if __name__ == "__main__":
    sys.exit(main())
