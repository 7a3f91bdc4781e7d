import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlqaoa import qsim
from rlqaoa.graphs import complete_graph, gen_erdos_renyi
from rlqaoa.optimizers import (
    OptRunRecord,
    make_optimizer,
    multi_start,
    nelder_mead,
    rl_rollout_opt,
    rlnm,
    start_points,
)
from rlqaoa.ppo import TrainConfig, init_checkpoint, train

G8 = gen_erdos_renyi(8, 0.5, 1)
D8 = qsim.cost_diagonal(G8)
DK2 = qsim.cost_diagonal(complete_graph(2))


@pytest.fixture(scope="module")
def ck1():
    cfg = TrainConfig(epochs=3, episodes_per_epoch=16, horizon=16, minibatch_size=64, seed=0)
    return train(cfg, G8, 1)[0]


def quad(x):
    return -float(np.sum((np.asarray(x) - 0.5) ** 2))


# --- Nelder-Mead -------------------------------------------------------------------


def test_nm_quadratic():
    rec = nelder_mead(quad, np.zeros(2), 192)
    assert rec.evals == 192 and np.all(np.abs(rec.best_x - 0.5) < 1e-3)


@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_nm_quadratic_any_start(a, b):
    rec = nelder_mead(quad, np.array([a, b]), 192)
    assert np.max(np.abs(rec.best_x - 0.5)) < 1e-3


def test_nm_matches_reference_recursion():
    # the standard recursion, written as minimisation of -f with explicit simplex bookkeeping
    def reference(f, x0, budget):
        fx = lambda x: -f(x)
        dim = len(x0)
        pts = [np.array(x0, float)] + [x0 + 0.25 * e for e in np.eye(dim)]
        vals = [fx(p) for p in pts]
        seen = list(vals)
        while True:
            o = np.argsort(vals, kind="stable")
            pts, vals = [pts[i] for i in o], [vals[i] for i in o]
            c = np.mean(pts[:-1], axis=0)
            def q(x):
                if len(seen) >= budget:
                    raise StopIteration
                v = fx(x)
                seen.append(v)
                return v
            try:
                xr = c + (c - pts[-1])
                fr = q(xr)
                if vals[0] <= fr < vals[-2]:
                    pts[-1], vals[-1] = xr, fr
                    continue
                if fr < vals[0]:
                    xe = c + 2 * (xr - c)
                    fe = q(xe)
                    pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
                    continue
                if fr < vals[-1]:
                    xc = c + 0.5 * (xr - c)
                    fc = q(xc)
                    if fc <= fr:
                        pts[-1], vals[-1] = xc, fc
                        continue
                else:
                    xc = c + 0.5 * (pts[-1] - c)
                    fc = q(xc)
                    if fc < vals[-1]:
                        pts[-1], vals[-1] = xc, fc
                        continue
                for i in range(1, dim + 1):
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0])
                    vals[i] = q(pts[i])
            except StopIteration:
                return [-v for v in seen]

    f = qsim.qaoa_objective(D8)
    x0 = np.array([0.3, -1.1, 2.0, 0.4])
    rec = nelder_mead(f, x0, 150)
    assert np.allclose(rec.values, reference(f, x0, 150), atol=0)


def test_nm_minimum_budget_returns_best_vertex():
    f = qsim.qaoa_objective(D8)
    x0 = np.array([0.2, 0.9])
    rec = nelder_mead(f, x0, 3)
    vertices = [x0, x0 + [0.25, 0], x0 + [0, 0.25]]
    vals = [f(v) for v in vertices]
    assert rec.evals == 3 and rec.best_f == max(vals)
    assert np.array_equal(rec.best_x, vertices[int(np.argmax(vals))])
    with pytest.raises(ValueError):
        nelder_mead(f, x0, 2)


def test_k2_multistart():
    res = multi_start("NM", DK2, 1, attempts=10, budget=192, seed=0)
    assert len(res.records) == 10 and res.best_f >= 0.999


# --- RL rollout and hybrid ------------------------------------------------------------


def test_rl_budget_one(ck1):
    x0 = np.array([0.4, 0.1])
    rec = rl_rollout_opt(ck1, D8, x0, 1)
    assert rec.evals == 1 and np.array_equal(rec.best_x, x0)
    assert rec.best_f == qsim.evaluate(D8, qsim.QaoaParams.from_vector(x0))


def test_rl_exact_budget_and_determinism(ck1):
    x0 = np.array([0.4, 0.1])
    counter = qsim.EvalCounter(50)
    a = rl_rollout_opt(ck1, D8, x0, 50, counter)
    b = rl_rollout_opt(ck1, D8, x0, 50)
    assert a.evals == 50 and counter.used == 50
    assert a.values == b.values


def test_rl_rejects_mismatch(ck1):
    with pytest.raises(ValueError):
        rl_rollout_opt(ck1, D8, np.zeros(4), 10)
    with pytest.raises(ValueError):
        rl_rollout_opt(ck1, D8, np.zeros(2), 10, L=5)
    with pytest.raises(ValueError):
        rl_rollout_opt(ck1, D8, np.zeros(2), 0)


def test_rl_beats_random_search_on_training_graph(ck1):
    seeds, x0s = start_points(1, 10, 123)
    rl = [rl_rollout_opt(ck1, D8, x0, 192).best_f for x0 in x0s]
    rand = [qsim.evaluate(D8, qsim.QaoaParams.from_vector(x0)) for x0 in x0s]
    assert np.median(rl) >= np.median(rand)


def test_rlnm_split_and_monotone(ck1):
    x0 = np.array([-1.0, 2.0])
    counter = qsim.EvalCounter(192)
    rec = rlnm(ck1, D8, x0, 192, counter)
    first = rl_rollout_opt(ck1, D8, x0, 96)
    assert rec.evals == 192 and counter.used == 192
    assert rec.values[:96] == first.values
    assert rec.best_f >= first.best_f
    best = rec.best_so_far()
    assert np.all(np.diff(best) >= 0) and best[-1] == rec.best_f
    # phase two starts its simplex at the phase-one best point
    assert np.array_equal(rec.points[96], first.best_x)
    with pytest.raises(ValueError):
        rlnm(ck1, D8, x0, 191)
    with pytest.raises(ValueError):
        rlnm(ck1, D8, x0, 4)


# --- multi-start -------------------------------------------------------------------


def test_start_points_shared_and_in_domain(ck1):
    s1, x1 = start_points(2, 10, 9)
    s2, x2 = start_points(2, 10, 9)
    assert s1 == s2 and all(np.array_equal(a, b) for a, b in zip(x1, x2))
    assert all(np.all(np.abs(x) <= np.pi) and x.shape == (4,) for x in x1)
    nm = multi_start(make_optimizer("NM"), D8, 1, 10, 30, seed=4)
    rl = multi_start(make_optimizer("RL", ck1), D8, 1, 10, 30, seed=4)
    assert all(np.array_equal(a.x0, b.x0) for a, b in zip(nm.records, rl.records))
    assert [r.attempt for r in nm.records] == list(range(10))
    assert nm.best_f == max(nm.attempt_best)
    assert all(r.evals == 30 for r in nm.records + rl.records)


def test_make_optimizer_errors():
    with pytest.raises(ValueError):
        make_optimizer("RL")
    with pytest.raises(ValueError):
        make_optimizer("SPSA")
    with pytest.raises(ValueError):
        multi_start("NM", D8, 1, attempts=0)


def test_record_json_schema():
    rec = nelder_mead(quad, np.zeros(2), 5)
    rec.attempt, rec.seed = 3, 17
    d = json.loads(json.dumps(rec.to_json()))
    assert set(d) == {"optimizer", "attempt", "seed", "evals", "best_f", "best_params", "trace"}
    assert d["evals"] == 5 and len(d["trace"]) == 5 and d["best_f"] == max(t["f"] for t in d["trace"])


def test_record_best_tracking():
    rec = OptRunRecord("x", np.zeros(1))
    for v in [0.1, 0.5, 0.3]:
        rec.add([v], v)
    assert rec.best_f == 0.5 and list(rec.best_so_far()) == [0.1, 0.5, 0.5]


def test_untrained_policy_still_spends_budget():
    ck = init_checkpoint(TrainConfig(seed=1), 2)
    rec = rlnm(ck, D8, np.zeros(4), 20)
    assert rec.evals == 20
