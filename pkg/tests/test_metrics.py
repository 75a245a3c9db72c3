import numpy as np
import pytest

from cemnet.graph import InferredGraph
from cemnet.metrics import classification_scores, graph_stats, roc_auc


def _random_graph(rng, n, density):
    edges = [
        (i, j) for i in range(n) for j in range(n)
        if i != j and rng.uniform() < density
    ]
    return InferredGraph(n, edges)


def test_perfect_prediction(rng):
    truth = _random_graph(rng, 10, 0.2)
    rep = classification_scores(truth, truth)
    assert rep.precision == rep.recall == 1.0
    assert rep.auc == 1.0
    assert rep.fp == rep.fn == 0


def test_complement_prediction():
    n = 6
    truth = InferredGraph(n, [(0, 1), (2, 3)])
    complement = InferredGraph(
        n,
        [
            (i, j) for i in range(n) for j in range(n)
            if i != j and (i, j) not in truth.edges
        ],
    )
    rep = classification_scores(complement, truth)
    assert rep.precision == 0.0 and rep.recall == 0.0


def test_user_set_mismatch():
    with pytest.raises(ValueError, match="user sets differ"):
        classification_scores(InferredGraph(3, []), InferredGraph(4, []))


def test_auc_of_truth_indicator_is_one(rng):
    truth = _random_graph(rng, 12, 0.15)
    rep = classification_scores(truth, truth, scores=None)
    assert rep.auc == 1.0


def _trapezoid_auc(labels, scores):
    order = np.argsort(-scores, kind="stable")
    labels = labels[order]
    scores = scores[order]
    p = labels.sum()
    n = len(labels) - p
    tps = fps = 0
    pts = [(0.0, 0.0)]
    k = 0
    while k < len(labels):
        j = k
        while j + 1 < len(labels) and scores[j + 1] == scores[k]:
            j += 1
        tps += int(labels[k : j + 1].sum())
        fps += (j - k + 1) - int(labels[k : j + 1].sum())
        pts.append((fps / n, tps / p))
        k = j + 1
    xs, ys = zip(*pts)
    return float(np.trapezoid(ys, xs))


def test_rank_auc_equals_trapezoid(rng):
    for _ in range(30):
        n = 200
        labels = rng.uniform(size=n) < 0.3
        if labels.sum() in (0, n):
            continue
        scores = np.round(rng.uniform(size=n), 1)  # coarse grid forces ties
        assert roc_auc(labels, scores) == pytest.approx(
            _trapezoid_auc(labels, scores), abs=1e-9
        )


def test_stats_three_cycle():
    g = InferredGraph(3, [(0, 1), (1, 2), (2, 0)])
    st = graph_stats(g)
    assert st.diameter == 2
    assert st.avg_shortest_path == pytest.approx(1.5)
    assert st.max_scc_pct == 100.0
    assert st.max_scc_size == 3


def test_stats_star():
    g = InferredGraph(4, [(0, 1), (0, 2), (0, 3)])
    st = graph_stats(g)
    assert st.max_out_degree == 3
    assert st.max_in_degree == 1
    assert st.diameter == 1
    assert st.avg_shortest_path == pytest.approx(1.0)
    assert st.max_scc_pct == 0.0


def test_stats_edgeless():
    st = graph_stats(InferredGraph(5, []))
    assert st.n_edges == 0
    assert st.diameter == 0
    assert st.avg_shortest_path is None
    assert st.max_scc_pct == 0.0


def _floyd_warshall(n, edges):
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for i, j in edges:
        d[i][j] = 1
    for k in range(n):
        for i in range(n):
            dik = d[i][k]
            if dik == inf:
                continue
            row = d[i]
            for j in range(n):
                alt = dik + d[k][j]
                if alt < row[j]:
                    row[j] = alt
    return d


def test_distances_match_floyd_warshall(rng):
    for _ in range(10):
        n = int(rng.integers(5, 50))
        g = _random_graph(rng, n, float(rng.uniform(0.02, 0.2)))
        st = graph_stats(g)
        d = _floyd_warshall(n, g.edges)
        finite = [
            d[i][j] for i in range(n) for j in range(n)
            if i != j and d[i][j] != float("inf")
        ]
        if finite:
            assert st.diameter == max(finite)
            assert st.avg_shortest_path == pytest.approx(np.mean(finite))
        else:
            assert st.diameter == 0 and st.avg_shortest_path is None
        # SCC oracle from mutual reachability
        mutual = {
            frozenset(c)
            for c in _scc_bruteforce(n, d)
            if len(c) >= 2
        }
        want = max((len(c) for c in mutual), default=0)
        assert st.max_scc_size == want


def _scc_bruteforce(n, d):
    comp = {}
    for i in range(n):
        key = frozenset(
            j for j in range(n)
            if d[i][j] != float("inf") and d[j][i] != float("inf")
        ) | {i}
        comp.setdefault(key, set()).add(i)
    out = []
    seen = set()
    for i in range(n):
        if i in seen:
            continue
        members = {i} | {
            j for j in range(n)
            if d[i][j] != float("inf") and d[j][i] != float("inf")
        }
        members = {
            j for j in members
            if j == i or (d[i][j] != float("inf") and d[j][i] != float("inf"))
        }
        out.append(members)
        seen |= members
    return out


def test_confusion_counts_consistent(rng):
    n = 9
    inferred = _random_graph(rng, n, 0.2)
    truth = _random_graph(rng, n, 0.2)
    rep = classification_scores(inferred, truth)
    assert rep.tp + rep.fn == truth.n_edges
    assert rep.tp + rep.fp == inferred.n_edges
    assert rep.tp + rep.fp + rep.fn + rep.tn == n * (n - 1)
    if rep.tp + rep.fp:
        assert rep.precision == pytest.approx(rep.tp / (rep.tp + rep.fp))


def test_scores_shape_validation():
    with pytest.raises(ValueError, match="scores"):
        classification_scores(
            InferredGraph(3, []), InferredGraph(3, []), scores=np.zeros((2, 2))
        )
