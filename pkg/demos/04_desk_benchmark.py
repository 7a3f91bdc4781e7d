"""
Desk-scale benchmark on the 97-graph suite
==========================================

Trains for 100 epochs at p=1, then compares NM, RL and RLNM on every suite
graph with 10 attempts and B=192.  Reports the median expected optimality
ratio and the median gap-reduction factor of RLNM over Nelder-Mead for each
subgroup, and writes ``report.csv`` and ``summary.csv``.  Expect roughly an
hour and a half on one core; most of it goes to the 20- to 22-qubit graphs.
"""

import numpy as np

from rlqaoa import bench
from rlqaoa.graphs import gen_erdos_renyi
from rlqaoa.ppo import TrainConfig, train

ck, _ = train(TrainConfig(epochs=100, seed=0), gen_erdos_renyi(8, 0.5, 1), 1)
suite = bench.build_g_test()
report = bench.run_benchmark(suite, ck, depths=(1,), attempts=10, budget=192, seed=0)

for family in bench.FAMILIES:
    med = {o: np.median(list(report.expected("tau", family, 1, o).values())) for o in bench.OPTIMIZERS}
    gr = report.gap_reduction(family, 1, "RLNM")
    print(f"{family:9s} median tau  NM {med['NM']:.4f}  RL {med['RL']:.4f}  RLNM {med['RLNM']:.4f}"
          f"   gap reduction RLNM/NM {gr:.2f}")

with open("report.csv", "w") as fh:
    report.write_report_csv(fh)
with open("summary.csv", "w") as fh:
    report.write_summary_csv(fh)
