"""
A small ablation table
======================

Retrain a handful of variants from scratch on the same synthetic split and
compare WA and W-F1. Absolute values depend on the synthetic calibration.
"""

from aamtsa.experiment import ExperimentConfig, run_ablation_suite, synthetic_bundle
from aamtsa.variants import OutOfScopeVariant, resolve_variant

bundle = synthetic_bundle(n=1000, seed=0)
table, _ = run_ablation_suite(["Var-T", "Var-A", "Var-VD", "Var-TA", "full"],
                              ExperimentConfig(seed=0, train={"max_epochs": 15}), bundle)
print(table.render())

try:
    resolve_variant("Var-JI")
except OutOfScopeVariant as exc:
    print(exc)
