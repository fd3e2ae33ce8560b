"""How close is ADM to the exact flat-prior posterior?

For equal variances the posterior of the shrinkage factor B is proportional
to ``B**((k-5)/2) exp(-S B / 2V)`` on (0, 1). ADM multiplies it by B(1 - B),
takes the mode and curvature of that curve, and reads off a Beta
distribution whose mean is the adjusted mode. Here we set the Beta fit next
to the exact posterior and compare the two sets of intervals.
"""

import numpy as np

from admshp import Dataset, adm_shp_fit, build_posterior, exact_theta_inference
from admshp.cli import adm_demo_table

k, V, S = 10, 1.0, 18.0
B, post, adjusted, beta_fit, est, B_exact = adm_demo_table(k, V, S)
B_adm = V / (est.A_hat + V)
print(f"k={k}, V={V}, S={S}: A_adm={est.A_hat:.4f}, B_adm={B_adm:.4f}, exact E[B]={B_exact:.4f}")
print(f"argmax of adjusted curve on the grid: {B[np.argmax(adjusted)]:.3f}")
print(f"max |posterior - Beta fit| density gap: {np.max(np.abs(post - beta_fit)):.3f}")

# intervals for every group of a simulated dataset
rng = np.random.default_rng(1)
theta = rng.normal(0.0, 1.0, k)
y = theta + rng.normal(0.0, np.sqrt(V), k)
d = Dataset.from_arrays(y, V)
grid = build_posterior(d)
_, _, adm = adm_shp_fit(d)
print(f"\n{'j':>2} {'y':>7} {'ADM interval':>20} {'exact interval':>20} {'gap/half':>9}")
for j in range(k):
    ex = exact_theta_inference(grid, d, j)
    half = 0.5 * (ex.hi - ex.lo)
    gap = max(abs(adm[j].lo - ex.lo), abs(adm[j].hi - ex.hi)) / half
    print(f"{j:2d} {y[j]:7.3f}  [{adm[j].lo:7.3f}, {adm[j].hi:7.3f}]  [{ex.lo:7.3f}, {ex.hi:7.3f}] {gap:9.3f}")
