"""Command-line front end: ``run``, ``sweep`` and ``report``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure,
3 sweep finished with at least one failed cell.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import MISSING, dataclass, fields, is_dataclass
from pathlib import Path
from typing import Any

import yaml

from .config import (
    ConfigError,
    MarketplaceConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    dump_config,
    parse_override,
)
from .engine import run_experiment, write_trace
from .metrics import SCALAR_KEYS, compute_report, mean_series, metrics_csv, milestone_keys, summarize_reports

OUT_ENV = "DGMBENCH_OUT"
DEFAULT_MAX_CELLS = 256


def write_atomic(path: Path, text: str) -> None:
    """Write through a temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_out(flag: str | None, fallback: str) -> Path:
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(fallback)


def read_config_file(path: str | Path, overrides: list[str] = (), seed: int | None = None) -> MarketplaceConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    pairs = [parse_override(o) for o in overrides]
    if seed is not None:
        pairs.append(("seed", seed))
    return config_from_dict(apply_overrides(raw, pairs))


# ---------------------------------------------------------------- run


def _repeat_worker(args):
    raw, repeat = args
    cfg = config_from_dict(raw)
    trace = run_experiment(cfg, repeat)
    return trace, compute_report(trace, cfg.milestones)


def _metric_keys(cfg: MarketplaceConfig) -> list[str]:
    keys = list(SCALAR_KEYS)
    for m in cfg.milestones:
        keys.extend(milestone_keys(m))
    return keys


def execute_run(cfg: MarketplaceConfig, out: Path, jobs: int = 1) -> dict:
    """Run every repeat, write traces, ``metrics.csv`` and ``summary.json``.

    Returns the summary dictionary.
    """
    work = [(cfg.to_dict(), r) for r in range(cfg.repeats)]
    if jobs > 1 and cfg.repeats > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.repeats)) as pool:
            results = list(pool.map(_repeat_worker, work))
    else:
        results = [_repeat_worker(w) for w in work]

    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for r, (trace, rep) in enumerate(results):
        tmp = out / f".trace-{r:03d}.jsonl.tmp"
        write_trace(trace, tmp)
        os.replace(tmp, out / f"trace-{r:03d}.jsonl")
        reports.append(rep)

    keys = _metric_keys(cfg)
    mean, std = summarize_reports(reports, keys)
    summary = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "num_sellers": cfg.num_sellers,
        "num_malicious": cfg.num_malicious,
        "aggregator": cfg.aggregator.kind,
        "attack": cfg.attack.kind,
        "adversary_fraction": cfg.attack.adversary_fraction,
        "milestones": list(cfg.milestones),
        "repeats": [
            {"repeat": r, "seed": rep.seed, "malicious_ids": rep.malicious, **rep.summary}
            for r, rep in enumerate(reports)
        ],
        "mean": mean,
        "std": std,
        "series_mean": {name: mean_series(reports, name) for name in ("accuracy", "asr", "cost", "msr_fraction")},
    }
    write_atomic(out / "config.yaml", dump_config(cfg))
    write_atomic(out / "metrics.csv", metrics_csv(reports))
    write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.4f}"


def cmd_run(args) -> int:
    try:
        cfg = read_config_file(args.config, args.set or [], args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = resolve_out(args.out, f"runs/{config_hash(cfg)}")
    try:
        summary = execute_run(cfg, out, args.jobs)
    except Exception as exc:  # noqa: BLE001 - any failure inside a run maps to exit 2
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    m = summary["mean"]
    print(
        f"final_accuracy={_fmt(m['final_accuracy'])} final_asr={_fmt(m['final_asr'])} "
        f"total_cost={_fmt(m['total_cost'])} repeats={cfg.repeats} out={out}"
    )
    return 0


# ---------------------------------------------------------------- sweep


@dataclass
class SweepSpec:
    base: Path
    axes: list[tuple[str, list]]
    out: Path | None = None
    max_cells: int = DEFAULT_MAX_CELLS

    def cells(self) -> list[dict[str, Any]]:
        if not self.axes:
            return [{}]
        names = [a for a, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]


def _field_exists(path: str) -> bool:
    node: Any = MarketplaceConfig
    for part in path.split("."):
        if not (isinstance(node, type) and is_dataclass(node)):
            return False
        match = {f.name: f for f in fields(node)}.get(part)
        if match is None:
            return False
        factory = match.default_factory
        node = factory if factory is not MISSING and is_dataclass(factory) else None
    return True


def load_sweep(path: str | Path) -> SweepSpec:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed sweep document {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("sweep document must be a mapping")
    unknown = set(raw) - {"base", "axes", "out", "max_cells"}
    if unknown:
        raise ConfigError("unknown key", sorted(unknown)[0])
    if "base" not in raw:
        raise ConfigError("base config path required", "base")
    base = Path(raw["base"])
    if not base.is_absolute():
        base = path.parent / base
    axes_raw = raw.get("axes") or []
    if isinstance(axes_raw, dict):
        axes = [(str(k), list(v)) for k, v in axes_raw.items()]
    else:
        axes = [(str(a["field"]), list(a["values"])) for a in axes_raw]
    for name, _ in axes:
        if not _field_exists(name):
            raise ConfigError("does not resolve to a configuration field", name)
    # an axis without values contributes nothing to the grid
    axes = [(name, values) for name, values in axes if values]
    spec = SweepSpec(base, axes, Path(raw["out"]) if raw.get("out") else None, int(raw.get("max_cells", DEFAULT_MAX_CELLS)))
    n = len(spec.cells())
    if n > spec.max_cells:
        raise ConfigError(f"{n} cells exceed the cap of {spec.max_cells}", "max_cells")
    return spec


def _cell_worker(args) -> tuple[str, dict | None, str | None]:
    raw, cell_dir = args
    try:
        cfg = config_from_dict(raw)
        summary = execute_run(cfg, Path(cell_dir), jobs=1)
        return "ok", summary, None
    except Exception:  # noqa: BLE001 - recorded per cell
        return "failed", None, traceback.format_exc(limit=3)


def _cell_cached(cell_dir: Path, chash: str) -> dict | None:
    p = cell_dir / "summary.json"
    if not p.exists():
        return None
    try:
        summary = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    return summary if summary.get("config_hash") == chash else None


def grid_rows(cells: list[dict], axis_names: list[str], keys: list[str]) -> str:
    """One row per (cell, repeat) plus a mean row per cell carrying ``*_std`` columns."""
    header = ["cell", "status", "repeat", *axis_names, "config_hash", "seed", *keys, *[f"{k}_std" for k in keys]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)

    def cell_val(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    for c in cells:
        axis_vals = [cell_val(c["axes"][a]) for a in axis_names]
        s = c["summary"]
        if c["status"] != "ok" or s is None:
            w.writerow([c["name"], c["status"], "", *axis_vals, c["hash"], "", *[""] * (2 * len(keys))])
            continue
        for rep in s["repeats"]:
            w.writerow([
                c["name"], "ok", rep["repeat"], *axis_vals, c["hash"], rep["seed"],
                *[cell_val(rep.get(k)) for k in keys], *[""] * len(keys),
            ])
        w.writerow([
            c["name"], "ok", "mean", *axis_vals, c["hash"], "",
            *[cell_val(s["mean"].get(k)) for k in keys], *[cell_val(s["std"].get(k)) for k in keys],
        ])
    return buf.getvalue()


def execute_sweep(spec: SweepSpec, out: Path, jobs: int = 1, overrides: list[str] = ()) -> tuple[int, list[dict]]:
    base_text = spec.base.read_text()
    base_raw = yaml.safe_load(base_text) or {}
    extra = [parse_override(o) for o in overrides]
    cells, todo = [], []
    milestones: tuple = ()
    for k, axis_vals in enumerate(spec.cells()):
        raw = apply_overrides(base_raw, extra + list(axis_vals.items()))
        cfg = config_from_dict(raw)
        milestones = cfg.milestones
        chash = config_hash(cfg)
        cell_dir = out / f"cell-{k:03d}"
        cell = {"name": cell_dir.name, "axes": axis_vals, "hash": chash, "status": "ok", "summary": None}
        cached = _cell_cached(cell_dir, chash)
        if cached is not None:
            cell["summary"] = cached
        else:
            todo.append((len(cells), (cfg.to_dict(), str(cell_dir))))
        cells.append(cell)

    if todo:
        payload = [w for _, w in todo]
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(todo))) as pool:
                results = list(pool.map(_cell_worker, payload))
        else:
            results = [_cell_worker(p) for p in payload]
        for (idx, _), (status, summary, err) in zip(todo, results):
            cells[idx]["status"] = status
            cells[idx]["summary"] = summary
            if err:
                cells[idx]["error"] = err
                write_atomic(out / cells[idx]["name"] / "error.txt", err)

    keys = list(SCALAR_KEYS)
    for m in milestones:
        keys.extend(milestone_keys(m))
    write_atomic(out / "grid.csv", grid_rows(cells, [a for a, _ in spec.axes], keys))
    failed = sum(c["status"] != "ok" for c in cells)
    return failed, cells


def cmd_sweep(args) -> int:
    try:
        spec = load_sweep(args.spec)
        out = resolve_out(args.out or (str(spec.out) if spec.out else None), "runs/sweep")
        # validate every cell before running anything
        base_raw = yaml.safe_load(spec.base.read_text()) or {}
        extra = [parse_override(o) for o in (args.set or [])]
        for axis_vals in spec.cells():
            config_from_dict(apply_overrides(base_raw, extra + list(axis_vals.items())))
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        failed, cells = execute_sweep(spec, out, args.jobs, args.set or [])
    except Exception as exc:  # noqa: BLE001
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 2
    print(f"cells={len(cells)} failed={failed} grid={out / 'grid.csv'}")
    return 3 if failed else 0


# ---------------------------------------------------------------- report


def cmd_report(args) -> int:
    from .report import ReportError, make_report

    inputs = [Path(p) for p in args.inputs]
    out = resolve_out(args.out, str(inputs[0].parent if inputs[0].is_file() else inputs[0]))
    try:
        written = make_report(inputs, out)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} files under {out / 'plots'}")
    return 0


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgmbench", description="Distributed gradient marketplace simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment (all repeats)")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/<config-hash>)")
    r.add_argument("--jobs", type=int, default=1, help="parallel repeats")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid of configurations")
    s.add_argument("spec")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override applied to every cell")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1, help="parallel cells")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="plot grid.csv or summary.json files")
    rp.add_argument("inputs", nargs="+")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
