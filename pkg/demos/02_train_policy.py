"""
Training the update policy
==========================

Runs PPO on the 8-vertex Erdos-Renyi training graph at p=1.  The full
protocol is 750 epochs of 8192 simulations; here a few epochs are enough to
see the mean episode return move.  Pass an epoch count on the command line to
train longer.
"""

import sys

from rlqaoa.graphs import gen_erdos_renyi
from rlqaoa.ppo import TrainConfig, save_checkpoint, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
g = gen_erdos_renyi(8, 0.5, 1)
cfg = TrainConfig(epochs=epochs, seed=0)
print(f"training on {g.label} ({g.m} edges), {cfg.sims_per_epoch} simulations per epoch")


def show(ck, m):
    print(f"epoch {m.epoch:3d}  mean return {m.mean_return:+.4f}  best f {m.best_f:.4f}  "
          f"kl {m.mean_kl:.4f}  gradient epochs {m.grad_epochs}")


ck, history = train(cfg, g, p=1, on_epoch=show)
save_checkpoint(ck, "policy_p1.json")
print("saved policy_p1.json")
