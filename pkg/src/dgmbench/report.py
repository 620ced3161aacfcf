"""Static plots from sweep grids and run summaries.

Every plot is written as ``plots/<name>.svg`` next to ``plots/<name>.csv``
holding the plotted numbers in tidy form (one value per row).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .svgplot import bar_chart, line_chart

PREFERRED_X = "attack.adversary_fraction"


class ReportError(ValueError):
    pass


@dataclass
class Record:
    label: str
    x: float | None
    series: str
    metrics: dict[str, float | None]
    curves: dict[str, list] = field(default_factory=dict)


def _num(v):
    if v is None or v == "":
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _x_label(v: float) -> str:
    return f"{v:g}"


def _read_grid(path: Path) -> tuple[list[Record], str | None]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            rows = list(reader)
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise ReportError(f"{path}: {exc}") from exc
    for needed in ("cell", "status", "repeat", "config_hash"):
        if needed not in cols:
            raise ReportError(f"{path}: missing column {needed!r}")
    axes = cols[cols.index("repeat") + 1:cols.index("config_hash")]
    if PREFERRED_X in axes:
        x_axis = PREFERRED_X
    else:
        x_axis = next((a for a in axes if rows and all(_num(r[a]) is not None for r in rows if r["status"] == "ok")), None)
    others = [a for a in axes if a != x_axis]
    records = []
    for r in rows:
        if r["repeat"] != "mean" or r["status"] != "ok":
            continue
        x = _num(r[x_axis]) if x_axis else None
        series = ", ".join(f"{a}={r[a]}" for a in others)
        if x is not None:
            label = _x_label(x) + (f" | {series}" if series else "")
        else:
            label = series or r["cell"]
        metrics = {k: _num(v) for k, v in r.items() if k not in axes and k not in ("cell", "status", "repeat")}
        records.append(Record(label, x, series, metrics))
    return records, x_axis


def _read_summary(path: Path) -> Record:
    try:
        s = json.loads(path.read_text())
        mean = s["mean"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ReportError(f"{path}: not a run summary ({exc})") from exc
    label = path.parent.name or str(path)
    x = _num(s.get("adversary_fraction"))
    return Record(label, x, label, {k: _num(v) for k, v in mean.items()}, s.get("series_mean", {}))


def _resolve(p: Path) -> Path:
    if p.is_dir():
        for name in ("grid.csv", "summary.json"):
            if (p / name).exists():
                return p / name
        raise ReportError(f"{p}: no grid.csv or summary.json inside")
    if not p.exists():
        raise ReportError(f"{p}: no such file")
    return p


def _tidy(rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["plot", "group", "series", "x", "metric", "value"])
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _milestones(records: list[Record], prefix: str) -> list[str]:
    keys = []
    for r in records:
        for k in r.metrics:
            if k.startswith(prefix) and not k.endswith("_std") and k not in keys:
                keys.append(k)
    return sorted(keys)


def make_report(inputs: list[Path], out: Path) -> list[Path]:
    """Render all plots for the given grid/summary files; returns written paths."""
    if not inputs:
        raise ReportError("no inputs")
    grid_records, summary_records, x_axis = [], [], None
    for p in inputs:
        p = _resolve(Path(p))
        if p.suffix == ".csv":
            recs, xa = _read_grid(p)
            grid_records.extend(recs)
            x_axis = x_axis or xa
        elif p.suffix == ".json":
            summary_records.append(_read_summary(p))
        else:
            raise ReportError(f"{p}: expected grid.csv or summary.json")
    records = grid_records + summary_records
    if not records:
        raise ReportError("inputs contain no completed results")

    plots: dict[str, tuple[str, list[tuple]]] = {}
    groups = [r.label for r in records]

    # accuracy / ASR
    tidy = []
    if grid_records and all(r.x is not None for r in grid_records):
        series = {}
        for metric, name in (("final_accuracy", "accuracy"), ("final_asr", "ASR")):
            by_series: dict[str, list[Record]] = {}
            for r in grid_records:
                by_series.setdefault(r.series, []).append(r)
            for s_label, recs in by_series.items():
                recs = sorted(recs, key=lambda r: r.x)
                ys = [r.metrics.get(metric) for r in recs]
                if all(y is None for y in ys):
                    continue
                key = f"{name} ({s_label})" if s_label else name
                series[key] = ([r.x for r in recs], ys)
                tidy += [("accuracy_asr", r.label, key, r.x, metric, y) for r, y in zip(recs, ys)]
        svg = line_chart("Accuracy and ASR", x_axis or "x", "rate", series, ylim=(0.0, 1.0))
    else:
        series = {}
        for r in records:
            for metric, name in (("accuracy", "accuracy"), ("asr", "ASR")):
                ys = r.curves.get(metric) or []
                if not ys or all(y is None for y in ys):
                    continue
                key = f"{name} ({r.label})" if len(records) > 1 else name
                xs = list(range(1, len(ys) + 1))
                series[key] = (xs, ys)
                tidy += [("accuracy_asr", r.label, key, x, metric, y) for x, y in zip(xs, ys)]
        svg = line_chart("Accuracy and ASR per round", "round", "rate", series, ylim=(0.0, 1.0))
    plots["accuracy_asr"] = (svg, tidy)

    def bars(name, title, ylabel, spec, stacked=False):
        spec = [(m, lab) for m, lab in spec if any(r.metrics.get(m) is not None for r in records)]
        values = [[r.metrics.get(m) for m, _ in spec] for r in records]
        rows = [(name, r.label, lab, r.x, m, r.metrics.get(m)) for r in records for m, lab in spec]
        svg = bar_chart(title, x_axis or "run", ylabel, groups, [lab for _, lab in spec], values, stacked=stacked)
        plots[name] = (svg, rows)

    bars("selection_rate", "Per-seller selection rate by group", "rate",
         [("bsr", "benign"), ("msr_rate", "malicious")])
    bars("milestone_cost", "Gradients purchased to reach milestone", "gradients",
         [(k, k.replace("coc_", "acc ")) for k in _milestones(records, "coc_")])
    bars("milestone_rounds", "Rounds to reach milestone", "rounds",
         [(k, k.replace("tstar_", "acc ")) for k in _milestones(records, "tstar_")])
    bars("cost_composition", "Average cost per round", "selected gradients / round",
         [("cost_benign", "benign"), ("cost_malicious", "malicious")], stacked=True)

    if grid_records and all(r.x is not None for r in grid_records):
        by_series: dict[str, list[Record]] = {}
        for r in grid_records:
            by_series.setdefault(r.series, []).append(r)
        series, tidy = {}, []
        for s_label, recs in by_series.items():
            recs = sorted(recs, key=lambda r: r.x)
            key = s_label or "benign payment Gini"
            series[key] = ([r.x for r in recs], [r.metrics.get("payment_gini") for r in recs])
            tidy += [("gini", r.label, key, r.x, "payment_gini", r.metrics.get("payment_gini")) for r in recs]
        plots["gini"] = (line_chart("Payment Gini (benign sellers)", x_axis or "x", "Gini", series, ylim=(0.0, 1.0)), tidy)
    else:
        bars("gini", "Payment Gini (benign sellers)", "Gini", [("payment_gini", "Gini")])

    out_dir = out / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (svg, rows) in plots.items():
        (out_dir / f"{name}.svg").write_text(svg)
        (out_dir / f"{name}.csv").write_text(_tidy(rows))
        written += [out_dir / f"{name}.svg", out_dir / f"{name}.csv"]
    return written
