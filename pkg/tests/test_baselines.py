import numpy as np
import pytest

from cemnet import baselines as bl
from cemnet.constraints import check_feasibility
from cemnet.simulate import SimConfig, simulate
from cemnet.trace import Episode, build_episodes, pair_counts, trace_from_string
from conftest import random_episodes


def test_star_on_toy_trace(t1):
    eps = build_episodes(t1)
    g = bl.star_graph(eps, t1.n_users)
    u = t1.uid_index
    assert g.edges == {
        (u["U1"], u["U2"]), (u["U1"], u["U3"]),
        (u["U2"], u["U3"]), (u["U2"], u["U1"]),
    }


def test_star_single_episode():
    eps = [Episode("r", (0, 1, 2), (1.0, 2.0, 3.0))]
    assert bl.star_graph(eps, 3).edges == {(0, 1), (0, 2)}


def test_chain_on_toy_trace(t1):
    eps = build_episodes(t1)
    g = bl.chain_graph(eps, t1.n_users)
    u = t1.uid_index
    assert g.edges == {
        (u["U1"], u["U2"]), (u["U2"], u["U3"]), (u["U3"], u["U1"]),
    }


def test_chain_two_user_episode():
    eps = [Episode("r", (0, 1), (1.0, 2.0))]
    assert bl.chain_graph(eps, 2).edges == {(0, 1)}


def test_star_chain_always_feasible_and_within_active_pairs(rng):
    for _ in range(10):
        eps = random_episodes(rng)
        table = pair_counts(eps, 8)
        active = {tuple(p) for p in table.pairs.tolist()}
        for builder in (bl.star_graph, bl.chain_graph):
            g = builder(eps, 8)
            assert check_feasibility(g, eps).fraction == 1.0
            assert g.edges <= active


def test_saito_single_parent_in_window():
    # author at t, resharer at t + 1: the one explained trial earns full credit
    eps = [Episode("r", (0, 1), (5.0, 6.0))]
    res = bl.saito_em(eps, 2, max_iters=50)
    k = res.table.index[(0, 1)]
    assert res.kappa[k] == pytest.approx(1.0)
    assert res.graph.edges == {(0, 1)}


def test_saito_out_of_window_reshare_unexplained():
    # the reshare lags two units; nobody gets credit and no edge appears
    eps = [Episode("r", (0, 1), (5.0, 7.0))]
    res = bl.saito_em(eps, 2, max_iters=50)
    assert res.graph.n_edges == 0


def test_saito_symmetric_two_parents():
    eps = [Episode(f"r{i}", (0, 1, 2), (5.0, 5.0, 6.0)) for i in range(3)]
    for iters in (1, 2, 5, 30):
        res = bl.saito_em(eps, 3, max_iters=iters, init_kappa=0.5)
        ka = res.kappa[res.table.index[(0, 2)]]
        kb = res.kappa[res.table.index[(1, 2)]]
        assert ka == kb


def test_saito_failure_opportunities_dilute():
    # one explained reshare, then four episodes where 0 acted and 1 stayed out
    eps = [Episode("r0", (0, 1), (5.0, 6.0))]
    eps += [Episode(f"r{k}", (0, 2), (5.0, 6.0)) for k in range(1, 5)]
    res = bl.saito_em(eps, 3, max_iters=100)
    k01 = res.table.index[(0, 1)]
    assert res.kappa[k01] == pytest.approx(1.0 / 5.0, abs=1e-6)
    assert (0, 1) not in res.graph.edges


def test_saito_kappa_stays_probability(rng):
    eps = random_episodes(rng, n_episodes=20)
    for iters in (1, 2, 3, 10):
        res = bl.saito_em(eps, 8, max_iters=iters, seed=4)
        assert np.all(res.kappa >= 0.0) and np.all(res.kappa <= 1.0)


def test_newman_direct_evidence_pair():
    rows = ["pid,t,uid,rid"]
    pid = 0
    for k in range(6):
        rows.append(f"p{pid},{10 * k},A,-1")
        rows.append(f"p{pid + 1},{10 * k + 1},B,p{pid}")
        pid += 2
    t = trace_from_string("\n".join(rows) + "\n")
    eps = build_episodes(t)
    res = bl.newman_em(eps, t.n_users, seed=3)
    a, b = t.uid_index["A"], t.uid_index["B"]
    assert res.q[res.table.index[(a, b)]] > 0.5
    assert (a, b) in res.graph.edges


def test_newman_no_direct_evidence_pair():
    # i precedes j often but never as the author: direct counts stay zero
    rows = ["pid,t,uid,rid"]
    pid = 0
    for k in range(8):
        base = 100 * k
        rows.append(f"p{pid},{base},A,-1")
        rows.append(f"p{pid + 1},{base + 1},I,p{pid}")
        rows.append(f"p{pid + 2},{base + 2},J,p{pid + 1}")
        pid += 3
    t = trace_from_string("\n".join(rows) + "\n")
    eps = build_episodes(t)
    res = bl.newman_em(eps, t.n_users, seed=3)
    i, j = t.uid_index["I"], t.uid_index["J"]
    direct = res.direct[res.table.index[(i, j)]]
    assert direct == 0.0
    assert res.q[res.table.index[(i, j)]] < 0.5
    a = t.uid_index["A"]
    assert (a, i) in res.graph.edges


def test_newman_q_stays_probability(rng):
    eps = random_episodes(rng, n_episodes=25)
    for iters in (1, 2, 3, 10, 40):
        res = bl.newman_em(eps, 8, seed=2, max_iters=iters)
        assert np.all(res.q >= 0.0) and np.all(res.q <= 1.0)
        for value in (res.alpha, res.beta, res.rho):
            assert 0.0 <= value <= 1.0


def test_baselines_on_synthetic_trace():
    out = simulate(SimConfig(seed=1, n_events=20_000))
    eps = build_episodes(out.trace)
    star = bl.star_graph(eps, out.trace.n_users)
    chain = bl.chain_graph(eps, out.trace.n_users)
    assert check_feasibility(star, eps).fraction == 1.0
    assert check_feasibility(chain, eps).fraction == 1.0
    saito = bl.saito_em(eps, out.trace.n_users, seed=1)
    assert saito.graph.n_edges <= 0.05 * out.truth_graph.n_edges
    newman = bl.newman_em(eps, out.trace.n_users, seed=1)
    assert check_feasibility(newman.graph, eps).fraction < 0.90
