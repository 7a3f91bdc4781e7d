"""Reinforcement-learning-assisted QAOA parameter optimization for Max-Cut.

Modules:

* ``graphs``     graph families, text format, brute-force Max-Cut
* ``qsim``       exact QAOA statevector simulation and objective
* ``rlenv``      the parameter-update MDP
* ``neural``     numpy MLPs with backprop and Adam
* ``ppo``        PPO training of the Gaussian update policy
* ``optimizers`` Nelder-Mead, policy rollout and the RL + Nelder-Mead hybrid
* ``bench``      test suite, metrics and optimizer comparison
* ``cli``        command-line entry point
"""

from .graphs import Graph, brute_force_maxcut, gen_barbell, gen_caveman, gen_erdos_renyi, gen_ladder
from .qsim import QaoaParams, cost_diagonal, evaluate, evolve
from .ppo import PolicyCheckpoint, TrainConfig, load_checkpoint, save_checkpoint, train
from .optimizers import multi_start, nelder_mead, rl_rollout_opt, rlnm
from .bench import build_g_test, run_benchmark

__version__ = "0.1.0"
