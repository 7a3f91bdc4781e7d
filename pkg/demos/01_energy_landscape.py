"""
The p=1 QAOA energy landscape
=============================

Builds one graph from each family, evaluates the depth-1 objective on a grid
over (beta, gamma) in [-pi, pi]^2 and reports where the maximum sits.  The
grid for the ladder is also written to ``ladder_landscape.csv``.
"""

import numpy as np

from rlqaoa import qsim
from rlqaoa.graphs import brute_force_maxcut, gen_barbell, gen_caveman, gen_erdos_renyi, gen_ladder

graphs = [gen_erdos_renyi(12, 0.5, 1), gen_ladder(6), gen_barbell(6), gen_caveman(2, 6)]

for g in graphs:
    d = qsim.cost_diagonal(g)
    betas, gammas, f = qsim.landscape_grid(d, 81)
    i, j = np.unravel_index(np.argmax(f), f.shape)
    c_opt = brute_force_maxcut(g).value
    print(f"{g.label:28s} |E|={g.m:3d}  C_opt={c_opt:3d}  "
          f"max f={f[i, j]:7.3f} at beta={betas[i]:+.3f} gamma={gammas[j]:+.3f}  ratio={f[i, j] / c_opt:.3f}")

# the landscape repeats every pi in beta, so the top and bottom rows agree
assert np.allclose(f[0], f[-1])

d = qsim.cost_diagonal(graphs[1])
betas, gammas, f = qsim.landscape_grid(d, 65)
with open("ladder_landscape.csv", "w") as fh:
    qsim.write_landscape_csv(betas, gammas, f, fh)
print("wrote ladder_landscape.csv")
