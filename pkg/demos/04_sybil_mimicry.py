"""
Sybil mimicry
=============

Colluding sellers blend their poisoned delta with the previous global
update: lambda=1 is the raw attack, lambda=0 is a pure copy.
"""
from pathlib import Path

from dgmbench.cli import read_config_file
from dgmbench.engine import run_experiment
from dgmbench.metrics import compute_report

base = Path(__file__).parent / "configs" / "sybil.yaml"

for lam in (1.0, 0.75, 0.5, 0.25):
    cfg = read_config_file(base, [f"attack.mimicry_lambda={lam}", "num_rounds=50"])
    s = compute_report(run_experiment(cfg, repeat=0)).summary
    print(f"lambda {lam:.2f}: msr_rate {s['msr_rate']:.3f} vs bsr {s['bsr']:.3f}, ASR {s['final_asr']:.3f}")
