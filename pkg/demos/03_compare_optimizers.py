"""
Nelder-Mead, RL and RLNM on unseen graphs
=========================================

Loads the policy written by ``02_train_policy.py`` (or trains a short one if
it is missing) and gives each optimizer the same 10 start points and a
budget of 192 circuit evaluations per attempt.
"""

import os

import numpy as np

from rlqaoa import qsim
from rlqaoa.graphs import gen_barbell, gen_caveman, gen_erdos_renyi, gen_ladder
from rlqaoa.optimizers import make_optimizer, multi_start
from rlqaoa.ppo import TrainConfig, load_checkpoint, train

if os.path.exists("policy_p1.json"):
    ck = load_checkpoint("policy_p1.json", p=1)
else:
    ck, _ = train(TrainConfig(epochs=10, seed=0), gen_erdos_renyi(8, 0.5, 1), 1)
print(f"policy trained for {ck.epoch} epochs on {ck.training_graph_label}")

for g in [gen_erdos_renyi(12, 0.6, 2), gen_ladder(6), gen_barbell(5), gen_caveman(3, 4)]:
    d = qsim.cost_diagonal(g)
    runs = {name: multi_start(make_optimizer(name, ck), d, 1, attempts=10, budget=192, seed=1)
            for name in ("NM", "RL", "RLNM")}
    f_opt = max(r.best_f for r in runs.values())
    # expected optimality ratio: mean over attempts of best f / best known f
    taus = {name: np.mean(r.attempt_best) / f_opt for name, r in runs.items()}
    print(f"{g.label:24s} " + "  ".join(f"{k} {v:.4f}" for k, v in taus.items()))

# the RLNM trace is the RL half followed by the Nelder-Mead half
rec = runs["RLNM"].records[0]
best = rec.best_so_far()
print(f"RLNM attempt 0: best after 96 evals {best[95]:.4f}, after 192 {best[-1]:.4f}")
