"""Squared-error risk at fixed theta vectors, and the Baranchik check.

With equal variances the sample mean has total risk kV everywhere. A minimax
shrinkage rule never does worse, and does much better when the theta_j are
close together. The Baranchik conditions give a direct check for the ADM
rule with known mean.
"""

import numpy as np

from admshp import SimSpec, baranchik_check, simulate_risk
from admshp.cli import theta_with_spread

k, V = 10, 1.0
spreads = (0.0, 1.0, 10.0, 100.0)
configs = [theta_with_spread(k, s * k * V) for s in spreads]
spec = SimSpec(k=k, V=V, reps=5000, seed=7, theta_configs=configs,
               procedures=("SAMPLE_MEAN", "JS_PLUS", "ADM_SHP", "EXACT_SHP"))
rep = simulate_risk(spec)
print(f"total risk (kV = {k * V:g}); spread in units of kV")
print(f"{'procedure':>12} " + " ".join(f"{s:>8g}" for s in spreads))
for p in spec.procedures:
    print(f"{p.name:>12} " + " ".join(f"{rep.row(p, c).risk:8.3f}" for c in range(len(spreads))))

b = baranchik_check(k, V, np.linspace(0.1, 500.0, 5000))
print(f"\nBaranchik: tau nondecreasing={b.nondecreasing}, max tau={b.max_tau:.3f} "
      f"(bound {b.bound:g}) -> {'minimax' if b.passed else 'not shown'}")
