import random

import numpy as np
import pytest

from dgmbench.engine import RoundLedger, RunTrace

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_trace(selections, sampled=None, divergence=None, num_sellers=6, malicious=(), accuracy=None):
    """Build a RunTrace from per-round selection lists."""
    ledgers = []
    for t, sel in enumerate(selections, start=1):
        samp = sorted(set(sampled[t - 1]) if sampled else set(sel))
        div = divergence[t - 1] if divergence else {i: 1.0 for i in samp}
        chosen = sorted(set(sel))
        ledgers.append(RoundLedger(
            round=t,
            sampled=samp,
            selected=chosen,
            weights={i: 1.0 / len(chosen) for i in chosen},
            scores={i: 0.0 for i in samp},
            payments={i: int(i in chosen) for i in samp},
            divergence=div,
            cost=len(chosen),
            accuracy=accuracy[t - 1] if accuracy else 0.5,
            asr=None,
        ))
    return RunTrace("test", 0, num_sellers, sorted(malicious), [], ledgers, np.zeros(1), np.zeros(1))


def random_trace(rng: random.Random):
    """Random small trace: <= 6 sellers, <= 10 rounds."""
    n = rng.randint(1, 6)
    T = rng.randint(1, 10)
    malicious = [i for i in range(n) if rng.random() < 0.3]
    sampled, selected, divergence, acc = [], [], [], []
    for _ in range(T):
        samp = sorted(rng.sample(range(n), rng.randint(1, n)))
        sel = [i for i in samp if rng.random() < 0.6]
        # a few repeated divergence values exercise ties
        div = {i: rng.choice([0.5, 1.0, rng.uniform(0, 3)]) for i in samp}
        sampled.append(samp)
        selected.append(sel)
        divergence.append(div)
        acc.append(rng.choice([0.6, 0.75, 0.82, 0.9, rng.random()]))
    return make_trace(selected, sampled, divergence, n, malicious, acc)


@pytest.fixture
def trace_factory():
    return make_trace
