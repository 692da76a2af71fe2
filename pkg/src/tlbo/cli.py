"""Experiment harness: ``tlbo generate-historic | run | analyze``.

Output directory layout::

    config.json                 resolved configuration
    tasks.csv                   cartpole physical parameters (cartpole only)
    historic/<task>__h<k>.csv   standard-BO datasets, k = historic seed index
    records/<cell>.json         one run record per (method, task, seed)
    timings/<cell>.json         wall-clock seconds per evaluation
    index.jsonl                 append-only completion log
    analysis/*.csv              regret, rank, overlap and cluster tables
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

from tlbo import analysis
from tlbo.acquisition import AcquisitionConfig
from tlbo.benchmarks import (
    CartpoleSettings,
    cartpole_params_from_csv,
    cartpole_params_to_csv,
    cartpole_tasks,
    load_grid_tasks,
    sample_cartpole_family,
    synthetic_family,
)
from tlbo.dataset import read_dataset, write_dataset
from tlbo.pipeline import MethodSpec, RunRecord, generate_historic, run_bo, run_seed
from tlbo.seeding import derive_seed
from tlbo.space import SearchSpace

log = logging.getLogger("tlbo")

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: dict
    methods: tuple
    seeds: tuple
    historic_n_evals: int = 50
    historic_seeds: int = 1
    historic_n_init: int = 10
    historic_acquisition: AcquisitionConfig = AcquisitionConfig()
    master_seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentConfig":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {d.get('schema_version')!r}")
        unknown = set(d) - {"schema_version", "benchmark", "methods", "seeds", "historic", "master_seed", "out"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        bench = dict(d.get("benchmark") or {})
        kind = bench.get("kind")
        if kind not in ("cartpole", "synthetic", "grid"):
            raise ConfigError(f"benchmark.kind must be cartpole, synthetic or grid, got {kind!r}")
        for key in ("params_file",) if kind == "cartpole" else ():
            if bench.get(key):
                bench[key] = str((base / bench[key]).resolve())
                if not Path(bench[key]).exists():
                    raise ConfigError(f"cartpole params file not found: {bench[key]}")
        if kind == "grid":
            files = [str((base / f).resolve()) for f in bench.get("files", [])]
            missing = [f for f in files if not Path(f).exists()]
            if missing:
                raise ConfigError(f"grid file not found: {missing[0]}")
            if len(files) < 2:
                raise ConfigError("grid benchmark needs at least 2 files")
            bench["files"] = files
            SearchSpace.from_dict(bench["space"])
        methods = tuple(MethodSpec.from_dict(m) for m in d.get("methods", []))
        if not methods:
            raise ConfigError("at least one method is required")
        names = [m.name for m in methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method names must be unique: {names}")
        for n in names:
            if not n or any(c in n for c in "/\\ ") or "__" in n:
                raise ConfigError(f"method name {n!r} must be non-empty without '/', spaces or '__'")
        seeds = d.get("seeds", 15)
        seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(int(s) for s in seeds)
        hist = d.get("historic", {})
        return cls(
            bench, methods, seeds,
            int(hist.get("n_evals", 50)), int(hist.get("seeds", 1)), int(hist.get("n_init", 10)),
            AcquisitionConfig(**hist.get("acquisition", {})),
            int(d.get("master_seed", 0)), d.get("out"),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "benchmark": self.benchmark,
            "methods": [m.to_dict() for m in self.methods],
            "seeds": list(self.seeds),
            "historic": {
                "n_evals": self.historic_n_evals,
                "seeds": self.historic_seeds,
                "n_init": self.historic_n_init,
                "acquisition": self.historic_acquisition.to_dict(),
            },
            "master_seed": self.master_seed,
            "out": self.out,
        }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw, path.parent)


def build_tasks(cfg: ExperimentConfig, out: Path | None = None):
    """Benchmark tasks of the configured family; cartpole parameters are
    read from ``out/tasks.csv`` when present so every stage agrees."""
    b = cfg.benchmark
    if b["kind"] == "cartpole":
        settings = CartpoleSettings(**b.get("settings", {}))
        stored = out / "tasks.csv" if out is not None else None
        if b.get("params_file"):
            params = cartpole_params_from_csv(Path(b["params_file"]).read_text(encoding="utf-8"))
        elif stored is not None and stored.exists():
            params = cartpole_params_from_csv(stored.read_text(encoding="utf-8"))
        else:
            params = sample_cartpole_family(int(b.get("n_tasks", 9)), derive_seed(cfg.master_seed, "family"))
        return cartpole_tasks(params, settings), params
    if b["kind"] == "synthetic":
        tasks = synthetic_family(
            b.get("function", "shifted_quadratic"), int(b.get("n_tasks", 6)),
            float(b.get("shift_range", 0.2)), derive_seed(cfg.master_seed, "family"), int(b.get("dim", 2)),
        )
        return tasks, None
    return load_grid_tasks(b["files"], SearchSpace.from_dict(b["space"])), None


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _historic_path(out: Path, task_id: str, k: int) -> Path:
    return out / "historic" / f"{task_id}__h{k}.csv"


def cmd_generate_historic(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "historic").mkdir(exist_ok=True)
    tasks, params = build_tasks(cfg, out)
    if params is not None:
        _atomic_write(out / "tasks.csv", cartpole_params_to_csv(params))
    _atomic_write(out / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    seeds = [derive_seed(cfg.master_seed, "historic", k) for k in range(cfg.historic_seeds)]
    for task in tasks:
        for k, s in enumerate(seeds):
            (data,) = generate_historic(
                [task], cfg.historic_n_evals, [s], cfg.historic_n_init, cfg.historic_acquisition
            )
            header = [f"task={task.id}", f"historic_seed_index={k}", f"seed={s}",
                      f"master_seed={cfg.master_seed}", f"n_evals={cfg.historic_n_evals}", "method=standard_bo"]
            write_dataset(_historic_path(out, task.id, k), task.space, data, header)
            log.info("wrote historic dataset %s (seed index %d)", task.id, k)
    return 0


def load_historic(out: Path, tasks, seed_index: int = 0):
    datasets = []
    for task in tasks:
        path = _historic_path(out, task.id, seed_index)
        if not path.exists():
            raise FileNotFoundError(f"historic dataset missing: {path} (run generate-historic first)")
        datasets.append(read_dataset(path, task.space, task.id))
    return datasets


# Per-process context for worker cells.
_CTX: dict = {}


def _init_worker(cfg_dict: dict, out: str) -> None:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    out = Path(out)
    tasks, _ = build_tasks(cfg, out)
    needs_historic = any(not m.is_standard for m in cfg.methods)
    historic = load_historic(out, tasks) if needs_historic else None
    _CTX.update(cfg=cfg, tasks=tasks, historic=historic)


def cell_key(method: str, task: str, seed: int) -> str:
    return f"{method}__{task}__s{seed}"


def _run_cell(cell):
    m_idx, t_idx, seed = cell
    cfg, tasks, historic = _CTX["cfg"], _CTX["tasks"], _CTX["historic"]
    method, task = cfg.methods[m_idx], tasks[t_idx]
    sources = [] if method.is_standard else [d for j, d in enumerate(historic) if j != t_idx]
    rec = run_bo(method, task, sources, run_seed(derive_seed(cfg.master_seed, "seed", seed), task.id))
    rec.seed = int(seed)
    return rec.key, rec.to_json(), rec.timings(), rec.status


def _completed(out: Path) -> set:
    index = out / "index.jsonl"
    done = set()
    if index.exists():
        for line in index.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry["status"] == "complete" and (out / "records" / f"{entry['key']}.json").exists():
                done.add(entry["key"])
    return done


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    (out / "records").mkdir(parents=True, exist_ok=True)
    (out / "timings").mkdir(exist_ok=True)
    tasks, params = build_tasks(cfg, out)
    if params is not None and not (out / "tasks.csv").exists():
        _atomic_write(out / "tasks.csv", cartpole_params_to_csv(params))
    if any(not m.is_standard for m in cfg.methods):
        load_historic(out, tasks)  # fail fast
    done = _completed(out)
    cells = []
    for mi, m in enumerate(cfg.methods):
        for ti, t in enumerate(tasks):
            for s in cfg.seeds:
                if cell_key(m.name, t.id, s) not in done:
                    cells.append((mi, ti, s))
    log.info("%d cells to run, %d already complete", len(cells), len(done))
    failed = 0
    cfg_dict = cfg.to_dict()

    def handle(result):
        nonlocal failed
        key, text, timings, status = result
        _atomic_write(out / "records" / f"{key}.json", text)
        _atomic_write(out / "timings" / f"{key}.json", json.dumps(timings) + "\n")
        with open(out / "index.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"key": key, "status": status}) + "\n")
        if status != "complete":
            failed += 1
            log.error("cell %s failed", key)

    if workers <= 1 or len(cells) <= 1:
        _init_worker(cfg_dict, str(out))
        for cell in cells:
            handle(_run_cell(cell))
    else:
        with multiprocessing.get_context("spawn").Pool(
            workers, initializer=_init_worker, initargs=(cfg_dict, str(out))
        ) as pool:
            for result in pool.imap_unordered(_run_cell, cells):
                handle(result)
    return 1 if failed else 0


def load_records(out: Path) -> list[RunRecord]:
    files = sorted((out / "records").glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no run records in {out / 'records'}")
    return [RunRecord.from_dict(json.loads(f.read_text(encoding="utf-8"))) for f in files]


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> int:
    records = load_records(out)
    tasks, _ = build_tasks(cfg, out)
    adir = out / "analysis"
    adir.mkdir(exist_ok=True)
    known = {t.id: t.known_range for t in tasks}
    ranges = analysis.task_ranges(records, known)
    curves = analysis.normalized_regret(records, ranges)
    _atomic_write(adir / "regret_curves.csv", analysis.regret_table(curves))

    if len({r.method for r in records}) < 2:
        warnings.warn("only one method in the records; rank table omitted")
    else:
        try:
            _atomic_write(adir / "rank_curves.csv", analysis.rank_table(analysis.ranking_curves(records)))
        except ValueError as exc:
            warnings.warn(f"incomplete method x (task, seed) grid; rank table omitted: {exc}")

    historic = []
    for task in tasks:
        for k in range(cfg.historic_seeds):
            path = _historic_path(out, task.id, k)
            if path.exists():
                historic.append((task.id, k, read_dataset(path, task.space, task.id)))
    if len({h[0] for h in historic}) >= 2:
        agg, spec, overlap = analysis.minima_analysis(historic, tasks[0].space)
        _atomic_write(adir / "overlap_probability.csv", analysis.overlap_table(overlap, cfg.historic_seeds))
        _atomic_write(adir / "cluster_scatter.csv", analysis.cluster_table(agg, spec, tasks[0].space))
    else:
        warnings.warn("fewer than 2 tasks with historic data; overlap and cluster tables omitted")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlbo", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("generate-historic", "run standard BO on every task to build historic datasets"),
        ("run", "run every (method, task, seed) cell, leave-one-task-out"),
        ("analyze", "export regret, rank, overlap and cluster tables"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="experiment JSON file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "master_seed": args.seed})
    out = args.out or cfg.out
    if not out:
        print("error: no output directory (use --out or set 'out' in the config)", file=sys.stderr)
        return 2
    out = Path(out)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "generate-historic":
            return cmd_generate_historic(cfg, out)
        if args.command == "run":
            return cmd_run(cfg, out, args.workers)
        return cmd_analyze(cfg, out)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
