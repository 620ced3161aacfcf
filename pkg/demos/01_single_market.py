"""
One marketplace, start to finish
================================

Build a config in code, run a single repeat and look at what the buyer
bought each round.
"""
import numpy as np

from dgmbench.config import load_config
from dgmbench.engine import run_experiment, settle
from dgmbench.metrics import compute_report

cfg = load_config("""
seed: 1
num_rounds: 40
aggregator: {kind: martfl}
""")
print("sellers:", cfg.num_sellers, "sampled per round:", cfg.sampled_per_round)

trace = run_experiment(cfg)

# the ledger keeps one record per round
for led in trace.ledgers[:5]:
    print(f"round {led.round:3d}  bought {led.cost:2d}  acc {led.accuracy:.3f}  selected {led.selected}")

# accuracy climbs while the cost per round stays bounded by the sample size
acc = np.array([led.accuracy for led in trace.ledgers])
print("accuracy after 10/20/40 rounds:", acc[[9, 19, 39]].round(3))

# payments: one unit per selected gradient
pay = settle(trace)
print("total paid:", sum(pay.values()), "top earners:", sorted(pay, key=pay.get, reverse=True)[:5])

rep = compute_report(trace, cfg.milestones)
for k in ("coc_0.70", "coc_0.85", "bsr", "payment_gini", "entropy_norm", "jaccard"):
    print(f"{k:>14}: {rep.summary[k]}")
