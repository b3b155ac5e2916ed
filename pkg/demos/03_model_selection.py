"""Select the bandwidth and the number of factors by cross-validation."""

import numpy as np

from tvcov import FitConfig, SimulationSpec, SplitPlan, select_K, simulate
from tvcov.selection import default_bandwidth_grid

spec = SimulationSpec(n_times=150, n_outputs=40, n_factors=3, gamma=3,
                      s2=0.5, seed=3)
times, y, truth = simulate(spec)

grid = default_bandwidth_grid(times, 5)
print("bandwidth grid:", np.round(grid, 1))

# For each candidate K and each random split: fit on the training part
# (re-selecting the bandwidth as the EM runs) and score the held-out part.
result = select_K(
    y, times, candidates=range(1, 7),
    plan=SplitPlan(mode="random", ratio=0.2, count=6, seed=0),
    config=FitConfig(max_iter=60, rel_tol=1e-5, seed=0),
    bandwidth_grid=grid, refresh=5, n_jobs=2,
)

print("\nsplit-averaged validation log-likelihood:")
for k, v in sorted(result.v_table.items()):
    marker = "  <- chosen" if k == result.k_hat else ""
    print(f"  K={k}: {v:10.1f}{marker}")
print(f"\ntrue K = {spec.n_factors}, selected K = {result.k_hat}, "
      f"refit bandwidth = {result.h_hat:.1f}")
