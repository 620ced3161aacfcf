"""Model-centric and marketplace-centric metrics computed from a run trace.

Each metric returns ``None`` when it is undefined for the trace (no
selections, zero variance, milestone never reached, ...). Writers turn
``None`` into an empty CSV cell or JSON ``null``.
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .engine import RunTrace, settle
from .model import Architecture, predict

__all__ = [
    "MetricsReport",
    "cost_of_convergence",
    "malicious_selection_rate",
    "per_seller_selection_rate",
    "divergence_selection_correlation",
    "payment_gini",
    "selection_diversity",
    "selection_stability",
    "attack_success_rate",
    "cost_composition",
    "round_msr",
    "compute_report",
    "summarize_reports",
    "metrics_csv",
    "SCALAR_KEYS",
    "milestone_keys",
]


def cost_of_convergence(acc, costs, milestone: float):
    """``(CoC, T*)`` for the first round whose accuracy reaches ``milestone``."""
    if len(acc) != len(costs):
        raise ValueError("accuracy and cost series differ in length")
    total = 0
    for t, (a, c) in enumerate(zip(acc, costs), start=1):
        total += c
        if a >= milestone:
            return total, t
    return None


def malicious_selection_rate(trace: RunTrace):
    """Fraction of all selected gradients that came from malicious sellers."""
    bad = set(trace.malicious)
    total = sum(len(led.selected) for led in trace.ledgers)
    if total == 0:
        return None
    return sum(len(bad.intersection(led.selected)) for led in trace.ledgers) / total


def per_seller_selection_rate(trace: RunTrace, sellers):
    """Average per-round, per-seller selection probability of a seller group."""
    group = set(sellers)
    T = len(trace.ledgers)
    if T == 0 or not group:
        return None
    hits = sum(len(group.intersection(led.selected)) for led in trace.ledgers)
    return hits / (T * len(group))


def divergence_selection_correlation(trace: RunTrace):
    """Pearson r between ``||g_i - g_B||`` and selection, pooled over all submissions."""
    div, sel = [], []
    for led in trace.ledgers:
        chosen = set(led.selected)
        for i in led.sampled:
            div.append(led.divergence[i])
            sel.append(1.0 if i in chosen else 0.0)
    if len(div) < 2:
        return None
    x, y = np.asarray(div), np.asarray(sel)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(xc @ xc), math.sqrt(yc @ yc)
    if sx == 0 or sy == 0 or np.ptp(x) == 0:
        return None
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def payment_gini(payments) -> float:
    """Mean-absolute-difference Gini; 0 when every payment is 0."""
    x = np.asarray(list(payments), dtype=np.float64)
    if len(x) == 0:
        raise ValueError("payment Gini needs at least one seller")
    mu = x.mean()
    if mu == 0:
        return 0.0
    # sum_ij |x_i - x_j| via sorted cumulative form
    s = np.sort(x)
    n = len(s)
    pair_sum = 2.0 * np.sum((2 * np.arange(1, n + 1) - n - 1) * s)
    return float(pair_sum / (2.0 * n * n * mu))


def selection_diversity(trace: RunTrace):
    """Shannon entropy (bits) of selected seller ids and its ``log2 N`` normalisation."""
    counts = Counter(i for led in trace.ledgers for i in led.selected)
    total = sum(counts.values())
    if total == 0:
        return None
    p = np.array(list(counts.values()), dtype=np.float64) / total
    h = float(-(p * np.log2(p)).sum()) + 0.0
    n = trace.num_sellers
    return h, (h / math.log2(n) if n > 1 else 0.0)


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def selection_stability(trace: RunTrace):
    """Mean Jaccard overlap of consecutive selection sets."""
    sets = [set(led.selected) for led in trace.ledgers]
    if len(sets) < 2:
        return None
    return sum(_jaccard(a, b) for a, b in zip(sets, sets[1:])) / (len(sets) - 1)


def attack_success_rate(arch: Architecture, theta: np.ndarray, X_triggered: np.ndarray, target: int):
    if X_triggered is None or len(X_triggered) == 0:
        return None
    return float((predict(arch, theta, X_triggered) == target).mean())


def cost_composition(trace: RunTrace):
    """Mean benign and malicious selections per round."""
    T = len(trace.ledgers)
    if T == 0:
        return None
    bad = set(trace.malicious)
    mal = sum(len(bad.intersection(led.selected)) for led in trace.ledgers)
    total = sum(len(led.selected) for led in trace.ledgers)
    return (total - mal) / T, mal / T


def round_msr(led, malicious) -> float | None:
    if not led.selected:
        return None
    return len(set(malicious).intersection(led.selected)) / len(led.selected)


# ---------------------------------------------------------------- report


def milestone_keys(m: float) -> tuple[str, str]:
    return f"coc_{m:.2f}", f"tstar_{m:.2f}"


SCALAR_KEYS = [
    "final_accuracy",
    "final_asr",
    "total_cost",
    "mean_cost",
    "msr_fraction",
    "bsr",
    "msr_rate",
    "divergence_corr",
    "payment_gini",
    "entropy_bits",
    "entropy_norm",
    "jaccard",
    "cost_benign",
    "cost_malicious",
]


@dataclass
class MetricsReport:
    seed: int
    series: dict[str, list]
    summary: dict[str, float | int | None]
    malicious: list[int] = field(default_factory=list)
    payments: dict[int, int] = field(default_factory=dict)


def compute_report(trace: RunTrace, milestones=(0.70, 0.80, 0.85)) -> MetricsReport:
    leds = trace.ledgers
    acc = [led.accuracy for led in leds]
    costs = [led.cost for led in leds]
    series = {
        "round": [led.round for led in leds],
        "cost": costs,
        "accuracy": acc,
        "asr": [led.asr for led in leds],
        "msr_fraction": [round_msr(led, trace.malicious) for led in leds],
        "selected": [list(led.selected) for led in leds],
    }
    pay = settle(trace)
    benign = trace.benign
    div = selection_diversity(trace)
    comp = cost_composition(trace)
    s: dict[str, float | int | None] = {
        "final_accuracy": acc[-1] if acc else None,
        "final_asr": leds[-1].asr if leds else None,
        "total_cost": sum(costs),
        "mean_cost": (sum(costs) / len(costs)) if costs else None,
        "msr_fraction": malicious_selection_rate(trace),
        "bsr": per_seller_selection_rate(trace, benign),
        "msr_rate": per_seller_selection_rate(trace, trace.malicious),
        "divergence_corr": divergence_selection_correlation(trace),
        "payment_gini": payment_gini([pay[i] for i in benign]) if benign else None,
        "entropy_bits": div[0] if div else None,
        "entropy_norm": div[1] if div else None,
        "jaccard": selection_stability(trace),
        "cost_benign": comp[0] if comp else None,
        "cost_malicious": comp[1] if comp else None,
    }
    for m in milestones:
        hit = cost_of_convergence(acc, costs, m)
        k_coc, k_t = milestone_keys(m)
        s[k_coc] = hit[0] if hit else None
        s[k_t] = hit[1] if hit else None
    return MetricsReport(trace.seed, series, s, list(trace.malicious), pay)


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def summarize_reports(reports: list[MetricsReport], keys: list[str]) -> tuple[dict, dict]:
    """Mean and population standard deviation over repeats, skipping ``None``."""
    mean, std = {}, {}
    for k in keys:
        mean[k], std[k] = _mean_std([r.summary.get(k) for r in reports])
    return mean, std


def mean_series(reports: list[MetricsReport], name: str) -> list:
    if not reports:
        return []
    out = []
    for t in range(len(reports[0].series[name])):
        mu, _ = _mean_std([r.series[name][t] for r in reports])
        out.append(mu)
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def metrics_csv(reports: list[MetricsReport]) -> str:
    """Per-round rows for every repeat as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repeat", "round", "cost", "accuracy", "asr", "msr_fraction", "selected_ids"])
    for r_idx, rep in enumerate(reports):
        s = rep.series
        for k in range(len(s["round"])):
            w.writerow([
                r_idx,
                s["round"][k],
                s["cost"][k],
                _cell(s["accuracy"][k]),
                _cell(s["asr"][k]),
                _cell(s["msr_fraction"][k]),
                ";".join(str(i) for i in s["selected"][k]),
            ])
    return buf.getvalue()
