"""
Marketplace metrics on a toy ledger
===================================

Three sellers, three rounds, seller 2 malicious. Everything below can be
checked by hand.
"""
import numpy as np

from dgmbench import metrics
from dgmbench.engine import RoundLedger, RunTrace, settle

rounds = [
    # (selected, accuracy)
    ([0, 1, 2], 0.55),
    ([0, 2], 0.72),
    ([1, 2], 0.81),
]
ledgers = []
for t, (sel, acc) in enumerate(rounds, start=1):
    ledgers.append(RoundLedger(
        round=t, sampled=[0, 1, 2], selected=sel,
        weights={i: 1 / len(sel) for i in sel}, scores={i: 0.0 for i in range(3)},
        payments={i: int(i in sel) for i in range(3)},
        divergence={0: 0.4, 1: 0.5, 2: 1.5},
        cost=len(sel), accuracy=acc, asr=None,
    ))
trace = RunTrace("toy", 0, 3, [2], [], ledgers, np.zeros(1), np.zeros(1))

acc = [led.accuracy for led in ledgers]
cost = [led.cost for led in ledgers]
print("CoC(0.70):", metrics.cost_of_convergence(acc, cost, 0.70))   # (5, 2)
print("MSR fraction:", metrics.malicious_selection_rate(trace))       # 3/7
print("BSR:", metrics.per_seller_selection_rate(trace, [0, 1]))      # 4/6
print("payments:", settle(trace))
print("benign Gini:", metrics.payment_gini([2, 2]))                  # 0
print("entropy (bits, normalized):", metrics.selection_diversity(trace))
print("Jaccard stability:", metrics.selection_stability(trace))     # (2/3 + 1/3) / 2
print("divergence vs selection r:", metrics.divergence_selection_correlation(trace))
