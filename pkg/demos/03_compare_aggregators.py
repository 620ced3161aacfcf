"""
Who gets bought?
================

Same market and attack, four buyers. FedAvg pays everyone it samples;
the filtering aggregators try to leave the malicious sellers out.
"""
from dgmbench.config import load_config
from dgmbench.engine import run_experiment
from dgmbench.metrics import compute_report

template = """
seed: 3
num_rounds: 60
dataset: {{classes: 4, dim: 16, samples: 8000}}
aggregator: {{kind: {agg}, mask_steps: 10}}
attack: {{kind: backdoor, adversary_fraction: 0.3, poison_rate: 0.5}}
"""

print(f"{'aggregator':>10} {'acc':>6} {'ASR':>6} {'msr_frac':>9} {'bsr':>6} {'msr_rate':>9} {'gini':>6}")
for agg in ("fedavg", "fltrust", "martfl", "skymask"):
    cfg = load_config(template.format(agg=agg))
    s = compute_report(run_experiment(cfg)).summary
    print(f"{agg:>10} {s['final_accuracy']:6.3f} {s['final_asr']:6.3f} {s['msr_fraction']:9.3f} "
          f"{s['bsr']:6.3f} {s['msr_rate']:9.3f} {s['payment_gini']:6.3f}")

# note the fairness side: benign Gini is computed over benign sellers only
