import csv
import json
import xml.etree.ElementTree as ET

import pytest

from dgmbench.report import ReportError, make_report
from dgmbench.svgplot import bar_chart, line_chart

NS = {"s": "http://www.w3.org/2000/svg"}
KEYS = ["final_accuracy", "final_asr", "bsr", "msr_rate", "payment_gini", "cost_benign", "cost_malicious",
        "coc_0.70", "tstar_0.70"]


def _grid(path, rates, asr=True):
    keys = [k for k in KEYS if asr or k != "final_asr"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "status", "repeat", "attack.adversary_fraction", "config_hash", "seed", *keys])
        for k, r in enumerate(rates):
            row = {"final_accuracy": 0.9 - r / 10, "final_asr": r * 2, "bsr": 0.3, "msr_rate": 0.4,
                   "payment_gini": 0.2, "cost_benign": 2.0, "cost_malicious": r * 10,
                   "coc_0.70": 50, "tstar_0.70": 5}
            vals = [row[key] for key in keys]
            w.writerow([f"cell-{k:03d}", "ok", 0, r, "h", 1, *vals])
            w.writerow([f"cell-{k:03d}", "ok", "mean", r, "h", "", *vals])


def _svg(path):
    return ET.parse(path).getroot()


def test_report_three_rates(tmp_path):
    _grid(tmp_path / "grid.csv", [0.1, 0.2, 0.3])
    written = make_report([tmp_path / "grid.csv"], tmp_path)
    names = {p.name for p in written}
    for plot in ("accuracy_asr", "selection_rate", "milestone_cost", "milestone_rounds", "cost_composition", "gini"):
        assert f"{plot}.svg" in names and f"{plot}.csv" in names
    root = _svg(tmp_path / "plots/selection_rate.svg")
    groups = root.findall(".//s:g[@class='group']", NS)
    assert [g.get("data-label") for g in groups] == ["0.1", "0.2", "0.3"]
    lines = _svg(tmp_path / "plots/accuracy_asr.svg").findall(".//s:g[@class='series']", NS)
    assert {g.get("data-label") for g in lines} == {"accuracy", "ASR"}
    tidy = list(csv.DictReader(open(tmp_path / "plots/selection_rate.csv")))
    assert len(tidy) == 6 and {r["metric"] for r in tidy} == {"bsr", "msr_rate"}


def test_report_without_asr_column(tmp_path):
    _grid(tmp_path / "grid.csv", [0.0, 0.5], asr=False)
    make_report([tmp_path], tmp_path)
    lines = _svg(tmp_path / "plots/accuracy_asr.svg").findall(".//s:g[@class='series']", NS)
    assert [g.get("data-label") for g in lines] == ["accuracy"]


def test_report_from_summary(tmp_path):
    run = tmp_path / "run1"
    run.mkdir()
    summary = {"adversary_fraction": 0.2, "mean": {k: 0.5 for k in KEYS},
               "series_mean": {"accuracy": [0.5, 0.7, 0.8], "asr": [None, None, None]}}
    (run / "summary.json").write_text(json.dumps(summary))
    make_report([run], tmp_path)
    lines = _svg(tmp_path / "plots/accuracy_asr.svg").findall(".//s:g[@class='series']", NS)
    assert [g.get("data-label") for g in lines] == ["accuracy"]


def test_report_errors(tmp_path):
    with pytest.raises(ReportError):
        make_report([], tmp_path)
    with pytest.raises(ReportError):
        make_report([tmp_path / "missing.csv"], tmp_path)
    (tmp_path / "g.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ReportError):
        make_report([tmp_path / "g.csv"], tmp_path)


def test_charts_escape_labels_and_parse():
    svg = line_chart("a < b & c", "x", "y", {"<s>": ([0, 1], [0.5, None])})
    root = ET.fromstring(svg)
    assert root.find(".//s:g[@class='series']", NS).get("data-label") == "<s>"
    svg = bar_chart("t", "x", "y", ["g&1"], ["b1", "b2"], [[1.0, None]], stacked=True)
    assert len(ET.fromstring(svg).findall(".//s:rect[@data-bar]", NS)) == 1
