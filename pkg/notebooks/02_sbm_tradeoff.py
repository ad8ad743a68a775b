"""
Utility-fairness trade-off on a stochastic block model
======================================================

Groups are correlated with the planted clusters, so the most modular partition
is unbalanced. A sweep over the fairness weight traces the trade-off between
modularity Q and average balance B, and the ideal-point rule picks lambda*.
"""

import numpy as np

from dfnmf import GraphDataset, SbmSpec, build_fairness_matrix, generate_sbm, homophily, run_sweep

# %% planted clusters with skewed group shares (0.8 / 0.5 / 0.2 of group 0)
base = generate_sbm(SbmSpec(300, 3, 2, 0.25, 0.03, (0.5, 0.5), seed=0))
rng = np.random.default_rng(0)
share = np.array([0.8, 0.5, 0.2])[base.planted_clusters]
groups = (rng.random(base.n) >= share).astype(int)
g = GraphDataset(base.adjacency, [groups], ["group"], planted_clusters=base.planted_clusters)
print(f"n={g.n} edges={g.n_edges} density={g.density():.3f} group homophily={homophily(g, 0):.3f}")

# %% sweep lambda over the default decade grid, 4 seeds each
F = build_fairness_matrix(g)
res = run_sweep(g, F, (300, 16, 3), seeds=range(4))
print(f"{'lambda':>8} {'Q':>7} {'B':>7} {'ARI':>7}  front")
for i, p in enumerate(res.points):
    print(f"{p.lam:8g} {p.Q:7.3f} {p.B_bar:7.3f} {p.ARI:7.3f}  {'*' if i in res.pareto else ''}")

# %% the selected weight and the bracket for a finer follow-up grid
print("lambda* =", res.lambda_star, "bracket =", res.bracket)
