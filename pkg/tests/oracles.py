"""Deliberately naive reference implementations of the run metrics.

They loop over raw ledger records and share no code with dgmbench.metrics.
"""
import math
import statistics


def coc(acc, costs, milestone):
    for t in range(1, len(acc) + 1):
        if acc[t - 1] >= milestone:
            return sum(costs[:t]), t
    return None


def msr_fraction(trace):
    num = den = 0
    for led in trace.ledgers:
        for i in led.selected:
            den += 1
            if i in trace.malicious:
                num += 1
    return None if den == 0 else num / den


def group_rate(trace, group):
    if not trace.ledgers or not group:
        return None
    hits = 0
    for led in trace.ledgers:
        for i in group:
            if i in led.selected:
                hits += 1
    return hits / (len(trace.ledgers) * len(group))


def pearson(trace):
    xs, ys = [], []
    for led in trace.ledgers:
        for i in led.sampled:
            xs.append(led.divergence[i])
            ys.append(1.0 if i in led.selected else 0.0)
    if len(xs) < 2 or len(set(xs)) == 1 or len(set(ys)) == 1:
        return None
    return statistics.correlation(xs, ys)


def gini(values):
    values = list(values)
    n = len(values)
    mu = sum(values) / n
    if mu == 0:
        return 0.0
    total = 0.0
    for a in values:
        for b in values:
            total += abs(a - b)
    return total / (2 * n * n * mu)


def entropy(trace):
    counts = {}
    for led in trace.ledgers:
        for i in led.selected:
            counts[i] = counts.get(i, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return None
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h, (h / math.log2(trace.num_sellers) if trace.num_sellers > 1 else 0.0)


def jaccard(trace):
    T = len(trace.ledgers)
    if T < 2:
        return None
    acc = 0.0
    for t in range(T - 1):
        a, b = set(trace.ledgers[t].selected), set(trace.ledgers[t + 1].selected)
        union = a | b
        acc += 1.0 if not union else len(a & b) / len(union)
    return acc / (T - 1)


def composition(trace):
    T = len(trace.ledgers)
    ben = mal = 0
    for led in trace.ledgers:
        for i in led.selected:
            if i in trace.malicious:
                mal += 1
            else:
                ben += 1
    return ben / T, mal / T


def payments(trace):
    pay = [0] * trace.num_sellers
    for led in trace.ledgers:
        for i in led.selected:
            pay[i] += 1
    return pay


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    import numpy as np

    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(len(x)):
        old = x[k]
        x[k] = old + h
        up = f(x)
        x[k] = old - h
        down = f(x)
        x[k] = old
        g[k] = (up - down) / (2 * h)
    return g


def rel_err(analytic, numeric, floor=1e-9):
    import numpy as np

    diff = np.linalg.norm(analytic - numeric)
    return diff / max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)


def naive_xent(W, b, X, y):
    """Softmax cross-entropy of a linear model, one sample at a time."""
    total = 0.0
    for x, label in zip(X, y):
        z = [sum(W[k][j] * x[j] for j in range(len(x))) + b[k] for k in range(len(b))]
        m = max(z)
        lse = m + math.log(sum(math.exp(v - m) for v in z))
        total += lse - z[label]
    return total / len(y)
