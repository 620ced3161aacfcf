"""
Backdoor poisoning against plain averaging
==========================================

Triggered test inputs get pulled toward the target label as the share of
malicious sellers grows, while clean accuracy barely moves.
"""
from pathlib import Path

from dgmbench.cli import read_config_file
from dgmbench.engine import run_experiment

base = Path(__file__).parent / "configs" / "backdoor.yaml"

for frac in (0.0, 0.2, 0.4):
    kind = "backdoor" if frac else "none"
    cfg = read_config_file(base, [f"attack.adversary_fraction={frac}", f"attack.kind={kind}", "num_rounds=60"])
    trace = run_experiment(cfg, repeat=0)
    last = trace.ledgers[-1]
    asr = "n/a" if last.asr is None else f"{last.asr:.3f}"
    print(f"adversaries {frac:.1f} ({len(trace.malicious):2d} sellers): accuracy {last.accuracy:.3f}  ASR {asr}")
