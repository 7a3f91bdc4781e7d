"""Test-suite construction, optimizer comparison and ratio metrics.

Ratios reported per run:

* approximation ratio  eta = f / C_opt   (C_opt from brute force)
* optimality ratio     tau = f / f_opt   (f_opt = best f any optimizer found
  for that instance and depth)

The gap-reduction factor compares per-instance optimality gaps ``1 - E[tau]``
of two optimizers over a subgroup.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .graphs import CutResult, Graph, SplitMix64, brute_force_maxcut, gen_barbell, gen_caveman, gen_erdos_renyi, gen_ladder
from .optimizers import make_optimizer, multi_start
from .ppo import PolicyCheckpoint

log = logging.getLogger(__name__)

OPTIMIZERS = ("NM", "RL", "RLNM")
FAMILIES = ("random", "community", "ladder")
REPORT_FIELDS = ("instance_label", "family", "n", "p", "optimizer", "attempt", "best_f", "c_opt", "f_opt", "eta", "tau")
SUMMARY_FIELDS = ("family", "p", "optimizer", "mean_tau", "median_tau", "q1", "q3", "gap_reduction_vs_nm")

ER_SIZES = (8, 12, 16, 20)
ER_PROBS = (0.5, 0.6, 0.7, 0.8)
ER_SEEDS = (1, 2, 3, 4)
LADDER_LENGTHS = tuple(range(2, 12))
BARBELL_SIZES = tuple(range(3, 12))
CAVEMAN_PARAMS = ((3, 4), (4, 4), (5, 4), (3, 3), (5, 3), (7, 3)) + tuple((2, k) for k in range(3, 11))


@dataclass
class SuiteInstance:
    graph: Graph
    kind: str  # erdos_renyi | ladder | barbell | caveman
    family: str  # random | community | ladder

    @property
    def label(self) -> str:
        return self.graph.label


@dataclass
class TestSuite:
    __test__ = False  # not a pytest class

    instances: list[SuiteInstance]
    _c_opt: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.instances)

    def c_opt(self, inst: SuiteInstance) -> CutResult:
        if inst.label not in self._c_opt:
            self._c_opt[inst.label] = brute_force_maxcut(inst.graph)
        return self._c_opt[inst.label]

    def select(self, families=None, kinds=None) -> TestSuite:
        keep = [
            i for i in self.instances
            if (families is None or i.family in families) and (kinds is None or i.kind in kinds)
        ]
        return TestSuite(keep, self._c_opt)

    def count(self, family: str) -> int:
        return sum(1 for i in self.instances if i.family == family)


def build_g_test(families=None) -> TestSuite:
    """The 97-graph benchmark suite: 64 random, 23 community, 10 ladder instances."""
    out = []
    for n in ER_SIZES:
        for e_p in ER_PROBS:
            for seed in ER_SEEDS:
                out.append(SuiteInstance(gen_erdos_renyi(n, e_p, seed), "erdos_renyi", "random"))
    out += [SuiteInstance(gen_ladder(n), "ladder", "ladder") for n in LADDER_LENGTHS]
    out += [SuiteInstance(gen_barbell(n), "barbell", "community") for n in BARBELL_SIZES]
    out += [SuiteInstance(gen_caveman(c, k), "caveman", "community") for c, k in CAVEMAN_PARAMS]
    suite = TestSuite(out)
    return suite if families is None else suite.select(families)


def approximation_ratio(f: float, c_opt) -> float:
    value = c_opt.value if isinstance(c_opt, CutResult) else c_opt
    if value <= 0:
        raise ValueError("approximation ratio undefined for a graph with zero maximum cut")
    return f / value


def optimality_ratio(f: float, f_opt: float) -> float:
    if f_opt <= 0:
        raise ValueError(f"f_opt must be positive, got {f_opt}")
    if f > f_opt:
        raise ValueError(f"f={f!r} exceeds f_opt={f_opt!r}; the best-known value is stale")
    return f / f_opt


# gaps this small are rounding noise between runs that reached the same optimum
GAP_TOL = 1e-9


def gap_reduction(tau_baseline, tau_method, tol: float = GAP_TOL) -> float:
    """Median over instances of ``(1 - tau_baseline) / (1 - tau_method)``.

    Gaps at or below ``tol`` count as zero. Instances where both gaps are zero
    are dropped; a zero method gap against a positive baseline gap counts as
    ``+inf``.
    """
    tb = np.asarray(tau_baseline, dtype=np.float64)
    tm = np.asarray(tau_method, dtype=np.float64)
    if tb.shape != tm.shape:
        raise ValueError(f"paired tau lists differ in length: {tb.shape} vs {tm.shape}")
    gb, gm = 1.0 - tb, 1.0 - tm
    gb[gb <= tol] = 0.0
    gm[gm <= tol] = 0.0
    ratios = []
    for b, m in zip(gb, gm):
        if m == 0.0:
            if b == 0.0:
                continue
            ratios.append(math.inf)
        else:
            ratios.append(b / m)
    if not ratios:
        raise ValueError("no instance with a nonzero optimality gap in the subgroup")
    return float(np.median(ratios))


def cell_seed(seed: int, label: str, p: int) -> int:
    """Start-point seed of one (instance, depth) cell; independent of suite order."""
    return SplitMix64((seed << 40) ^ (zlib.crc32(label.encode()) << 8) ^ p).next_u64()


@dataclass
class BenchRow:
    instance_label: str
    family: str
    n: int
    p: int
    optimizer: str
    attempt: int
    best_f: float
    c_opt: int
    f_opt: float
    eta: float
    tau: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    seed: int = 0
    notes: list[str] = field(default_factory=list)
    partial: bool = False
    records: dict = field(default_factory=dict, repr=False)

    def select(self, family=None, p=None, optimizer=None) -> list[BenchRow]:
        return [
            r for r in self.rows
            if (family is None or r.family == family) and (p is None or r.p == p)
            and (optimizer is None or r.optimizer == optimizer)
        ]

    def expected(self, metric: str, family=None, p=None, optimizer=None) -> dict[str, float]:
        """Per-instance mean of ``metric`` (``"tau"`` or ``"eta"``) over attempts."""
        acc: dict[str, list[float]] = {}
        for r in self.select(family, p, optimizer):
            acc.setdefault(r.instance_label, []).append(getattr(r, metric))
        return {k: float(np.mean(v)) for k, v in acc.items()}

    def best_expected_eta(self, family=None, p=None) -> dict[str, float]:
        """Per instance, the highest expected eta over optimizers."""
        out: dict[str, float] = {}
        for opt in sorted({r.optimizer for r in self.select(family, p)}):
            for k, v in self.expected("eta", family, p, opt).items():
                out[k] = max(out.get(k, -math.inf), v)
        return out

    def depths(self) -> list[int]:
        return sorted({r.p for r in self.rows})

    def optimizers(self) -> list[str]:
        present = {r.optimizer for r in self.rows}
        return [o for o in OPTIMIZERS if o in present] + sorted(present - set(OPTIMIZERS))

    def gap_reduction(self, family: str, p: int, method: str, baseline: str = "NM") -> float:
        tb = self.expected("tau", family, p, baseline)
        tm = self.expected("tau", family, p, method)
        keys = sorted(tb.keys() & tm.keys())
        return gap_reduction([tb[k] for k in keys], [tm[k] for k in keys])

    def summary(self) -> list[dict]:
        out = []
        for family in FAMILIES:
            for p in self.depths():
                for opt in self.optimizers():
                    taus = np.array(list(self.expected("tau", family, p, opt).values()))
                    if taus.size == 0:
                        continue
                    try:
                        gr = self.gap_reduction(family, p, opt) if any(r.optimizer == "NM" for r in self.rows) else math.nan
                    except ValueError:
                        gr = math.nan
                    out.append({
                        "family": family,
                        "p": p,
                        "optimizer": opt,
                        "mean_tau": float(taus.mean()),
                        "median_tau": float(np.median(taus)),
                        "q1": float(np.percentile(taus, 25)),
                        "q3": float(np.percentile(taus, 75)),
                        "gap_reduction_vs_nm": gr,
                    })
        return out

    def _header(self, fh) -> None:
        fh.write(f"# seed={self.seed}\n")
        if self.partial:
            fh.write("# partial=true\n")
        for note in self.notes:
            fh.write(f"# note: {note}\n")

    def write_report_csv(self, fh) -> None:
        self._header(fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.rows:
            w.writerow([
                r.instance_label, r.family, r.n, r.p, r.optimizer, r.attempt,
                _fmt(r.best_f), r.c_opt, _fmt(r.f_opt), _fmt(r.eta), _fmt(r.tau),
            ])

    def write_summary_csv(self, fh) -> None:
        self._header(fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for s in self.summary():
            w.writerow([s["family"], s["p"], s["optimizer"]] + [_fmt(s[k]) for k in SUMMARY_FIELDS[3:]])

    def report_csv(self) -> str:
        buf = io.StringIO()
        self.write_report_csv(buf)
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        self.write_summary_csv(buf)
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def read_report_csv(fh) -> list[dict]:
    lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _run_cell(inst: SuiteInstance, p: int, checkpoint, optimizers, attempts: int, budget: int, seed: int):
    d = qsim.cost_diagonal(inst.graph)
    s = cell_seed(seed, inst.label, p)
    return {
        name: multi_start(make_optimizer(name, checkpoint), d, p, attempts, budget, s, label=name).records
        for name in optimizers
    }


def _cell_rows(inst: SuiteInstance, p: int, c_opt: int, res: dict, optimizers) -> list[BenchRow]:
    f_opt = max(r.best_f for recs in res.values() for r in recs)
    rows = []
    for name in optimizers:
        for r in res[name]:
            rows.append(BenchRow(
                instance_label=inst.label,
                family=inst.family,
                n=inst.graph.n,
                p=p,
                optimizer=name,
                attempt=r.attempt,
                best_f=r.best_f,
                c_opt=c_opt,
                f_opt=f_opt,
                eta=approximation_ratio(r.best_f, c_opt),
                tau=optimality_ratio(r.best_f, f_opt),
            ))
    return rows


def _checkpoint_for(checkpoints, p: int):
    if checkpoints is None:
        return None
    if isinstance(checkpoints, PolicyCheckpoint):
        checkpoints = {checkpoints.p: checkpoints}
    return checkpoints.get(p)


def run_benchmark(
    suite: TestSuite,
    checkpoints=None,
    depths=(1, 2, 4),
    attempts: int = 10,
    budget: int = 192,
    seed: int = 0,
    optimizers=OPTIMIZERS,
    jobs: int = 1,
    max_qubits: int = 22,
    keep_records: bool = False,
) -> BenchReport:
    """Run every optimizer on every (instance, depth) cell with shared start points.

    ``checkpoints`` is one :class:`PolicyCheckpoint` or a mapping ``p -> checkpoint``;
    the policy-based optimizers need one trained at each requested depth.
    """
    optimizers = tuple(optimizers)
    for p in depths:
        ck = _checkpoint_for(checkpoints, p)
        if any(o != "NM" for o in optimizers):
            if ck is None:
                raise ValueError(f"no policy checkpoint trained at depth p={p}")
            if ck.p != p:
                raise ValueError(f"checkpoint trained at p={ck.p} supplied for depth {p}")
    report = BenchReport(seed=seed)
    cells = []
    for inst in suite.instances:
        if inst.graph.n > max_qubits:
            report.notes.append(f"skipped {inst.label}: {inst.graph.n} qubits exceeds capacity {max_qubits}")
            continue
        for p in depths:
            cells.append((inst, p))

    args = [(inst, p, _checkpoint_for(checkpoints, p), optimizers, attempts, budget, seed) for inst, p in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, *a) for a in args]
            results = []
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # reported, not fatal
                    results.append(exc)
    else:
        results = []
        for a in args:
            try:
                results.append(_run_cell(*a))
            except Exception as exc:
                results.append(exc)
            log.info("cell %s p=%d done", a[0].label, a[1])

    for (inst, p), res in zip(cells, results):
        if isinstance(res, Exception):
            report.partial = True
            report.notes.append(f"failed {inst.label} p={p}: {type(res).__name__}: {res}")
            continue
        try:
            rows = _cell_rows(inst, p, suite.c_opt(inst).value, res, optimizers)
        except ValueError as exc:  # e.g. an edgeless graph has no defined ratio
            report.partial = True
            report.notes.append(f"failed {inst.label} p={p}: {exc}")
            continue
        report.rows += rows
        if keep_records:
            for name in optimizers:
                report.records[(inst.label, p, name)] = res[name]
    return report
