"""Constrained EM loop (CEM-er / CEM-sbm) over the active-pair table.

One iteration, in the listed order: posterior edge probabilities Q from the
previous parameters, then the parameter block, then the diffusion
probabilities sigma from the covering LP whose objective weight per pair is

    W_ij = M_ij * (Q_ij * log(a/(1-a)) + (1 - Q_ij) * log(b/(1-b)))

shifted by ``-lambda * max W``.  The LP objective deliberately uses the
*previous* iteration's utilization rates, matching the update schedule the
posterior derivation prescribes.  Under the block-model prior the group
labels are refreshed each iteration by thresholding Q at 0.5 and running
Louvain on the symmetrized result.

Pairs that never co-occur are not materialized: their posterior equals the
prior, which enters the prior updates, the convergence norm, and the final
thresholding in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp
from .community import louvain_graph
from .constraints import ConstraintSystem, build_constraints
from .graph import InferredGraph
from .trace import Episode, PairTable, Trace, build_episodes, pair_counts

log = logging.getLogger("cemnet.em")

EPS_CLAMP = 1e-12

PRIOR_ER = "er"
PRIOR_SBM = "sbm"


def clamp(p: float) -> float:
    """Keep probabilities away from {0, 1}; the W logits diverge at the edges."""
    return min(max(float(p), EPS_CLAMP), 1.0 - EPS_CLAMP)


@dataclass
class ParamSet:
    prior: str  # "er" | "sbm"
    alpha: float
    beta: float
    rho: float | None = None  # ER edge prior
    p_in: float | None = None  # SBM intra-community prior
    q_out: float | None = None  # SBM inter-community prior
    lam: float = 1.0
    beta_fixed: float | None = None

    def prior_values(self) -> tuple[float, ...]:
        if self.prior == PRIOR_ER:
            return (self.rho,)
        return (self.p_in, self.q_out)


@dataclass
class EmState:
    params: ParamSet
    table: PairTable
    groups: np.ndarray | None
    n_users: int
    iteration: int = 0
    delta_q: float = math.inf
    converged: bool = False
    # prior values that generated the current Q (implicit posterior of M=0 pairs)
    q_prior_used: tuple[float, ...] = field(default=())
    # full prior descriptor for the final Q, as threshold_graph/score_matrix take it
    prior_spec: tuple = field(default=())

    def to_json(self) -> dict:
        out = {
            "prior": self.params.prior,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "lambda": self.params.lam,
            "iterations": self.iteration,
            "delta_q": self.delta_q if math.isfinite(self.delta_q) else None,
            "converged": self.converged,
        }
        if self.params.prior == PRIOR_ER:
            out["rho"] = self.params.rho
        else:
            out["p"] = self.params.p_in
            out["q"] = self.params.q_out
        if self.params.beta_fixed is not None:
            out["beta_fixed"] = self.params.beta_fixed
        return out


# ---------------------------------------------------------------------------
# E-step


def _posterior(table: PairTable, prior_logit: np.ndarray | float,
               alpha: float, beta: float) -> np.ndarray:
    """Q = sigmoid(logit(prior) + M s log(a/b) + M (1-s) log((1-a)/(1-b)))."""
    ms = table.m * table.sigma
    mns = table.m - ms
    gap = prior_logit + ms * (math.log(alpha) - math.log(beta)) \
        + mns * (math.log1p(-alpha) - math.log1p(-beta))
    out = np.empty_like(gap)
    pos = gap >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-gap[pos]))
    ez = np.exp(gap[~pos])
    out[~pos] = ez / (1.0 + ez)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite posterior; parameters not clamped?")
    return out


def update_q_er(state: EmState) -> np.ndarray:
    p = state.params
    return _posterior(state.table, math.log(p.rho) - math.log1p(-p.rho),
                      p.alpha, p.beta)


def update_q_sbm(state: EmState) -> np.ndarray:
    p = state.params
    g = state.groups
    same = g[state.table.pairs[:, 0]] == g[state.table.pairs[:, 1]]
    logit_in = math.log(p.p_in) - math.log1p(-p.p_in)
    logit_out = math.log(p.q_out) - math.log1p(-p.q_out)
    prior_logit = np.where(same, logit_in, logit_out)
    return _posterior(state.table, prior_logit, p.alpha, p.beta)


# ---------------------------------------------------------------------------
# M-step


def update_alpha_beta(state: EmState, q: np.ndarray) -> tuple[float, float]:
    """alpha = sum(M s Q) / sum(M Q); beta analogous with 1-Q weights."""
    table = state.table
    ms = table.m * table.sigma
    num_a = float(np.dot(ms, q))
    den_a = float(np.dot(table.m, q))
    if den_a > 0.0:
        alpha = clamp(num_a / den_a)
    else:
        alpha = state.params.alpha
        log.warning("alpha update skipped: zero denominator")
    if state.params.beta_fixed is not None:
        return alpha, clamp(state.params.beta_fixed)
    num_b = float(np.dot(ms, 1.0 - q))
    den_b = float(np.dot(table.m, 1.0 - q))
    if den_b > 0.0:
        beta = clamp(num_b / den_b)
    else:
        beta = state.params.beta
        log.warning("beta update skipped: zero denominator")
    return alpha, beta


def update_prior_er(state: EmState, q: np.ndarray) -> float:
    """Mean posterior over all N(N-1) ordered pairs.

    Inactive pairs carry the prior that generated the current Q, so their
    mass folds in without materializing them.
    """
    n = state.n_users
    if n < 2:
        raise ValueError("need at least two users for an edge prior")
    total = n * (n - 1)
    inactive = total - state.table.n_pairs
    rho_used = state.q_prior_used[0] if state.q_prior_used else state.params.rho
    return clamp((float(q.sum()) + inactive * rho_used) / total)


def update_prior_sbm(state: EmState, q: np.ndarray) -> tuple[float, float]:
    """Mean posterior over same-community and cross-community ordered pairs."""
    n = state.n_users
    if n < 2:
        raise ValueError("need at least two users for an edge prior")
    g = state.groups
    _, counts = np.unique(g, return_counts=True)
    same_total = int((counts * (counts - 1)).sum())
    cross_total = n * (n - 1) - same_total

    same = g[state.table.pairs[:, 0]] == g[state.table.pairs[:, 1]]
    same_active = int(same.sum())
    cross_active = state.table.n_pairs - same_active
    if state.q_prior_used:
        p_used, q_used = state.q_prior_used
    else:
        p_used, q_used = state.params.p_in, state.params.q_out

    if same_total > 0:
        acc = float(q[same].sum()) + (same_total - same_active) * p_used
        p_new = clamp(acc / same_total)
    else:
        p_new = state.params.p_in
        log.warning("p update skipped: no same-community pairs")
    if cross_total > 0:
        acc = float(q[~same].sum()) + (cross_total - cross_active) * q_used
        q_new = clamp(acc / cross_total)
    else:
        q_new = state.params.q_out
        log.warning("q update skipped: no cross-community pairs")
    return p_new, q_new


def build_w(state: EmState, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair LP weights W and the shifted objective ``W - lambda * max W``."""
    p = state.params
    logit_a = math.log(p.alpha) - math.log1p(-p.alpha)
    logit_b = math.log(p.beta) - math.log1p(-p.beta)
    w = state.table.m * (q * logit_a + (1.0 - q) * logit_b)
    if w.size == 0:
        return w, w
    c = float(w.max())
    return w, w - p.lam * c


# ---------------------------------------------------------------------------
# thresholding and scoring


def threshold_graph(
    table: PairTable,
    q: np.ndarray,
    n_users: int,
    prior_spec: tuple | None = None,
) -> InferredGraph:
    """Edges where the posterior strictly exceeds 0.5.

    ``prior_spec`` describes the implicit posterior of non-materialized
    pairs — ``("er", rho)`` or ``("sbm", p, q, groups)``; those pairs join
    the graph only when that prior itself exceeds 0.5.
    """
    edges: list[tuple[int, int]] = []
    scores: dict[tuple[int, int], float] = {}
    hot = np.flatnonzero(q > 0.5)
    for k in hot:
        i, j = int(table.pairs[k, 0]), int(table.pairs[k, 1])
        edges.append((i, j))
        scores[(i, j)] = float(q[k])
    if prior_spec is not None:
        if prior_spec[0] == PRIOR_ER:
            hot_prior = prior_spec[1] > 0.5
            prior_of = lambda i, j: prior_spec[1]  # noqa: E731
        else:
            _, p_in, q_out, groups = prior_spec
            hot_prior = max(p_in, q_out) > 0.5
            prior_of = lambda i, j: p_in if groups[i] == groups[j] else q_out  # noqa: E731
        if hot_prior:
            active = set(map(tuple, table.pairs.tolist()))
            for i in range(n_users):
                for j in range(n_users):
                    if i == j or (i, j) in active:
                        continue
                    val = prior_of(i, j)
                    if val > 0.5:
                        edges.append((i, j))
                        scores[(i, j)] = float(val)
    return InferredGraph(n_users, edges, scores)


def score_matrix(
    table: PairTable, q: np.ndarray, n_users: int, prior_spec: tuple
) -> np.ndarray:
    """Dense (n, n) score matrix: posterior for active pairs, prior elsewhere."""
    if prior_spec[0] == PRIOR_ER:
        out = np.full((n_users, n_users), prior_spec[1], dtype=np.float64)
    else:
        _, p_in, q_out, groups = prior_spec
        g = np.asarray(groups)
        same = g[:, None] == g[None, :]
        out = np.where(same, p_in, q_out)
    out[table.pairs[:, 0], table.pairs[:, 1]] = q
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# convergence norm over the full pair matrix


def _delta_q_sq_inactive_er(n_users: int, n_active: int,
                            rho_prev: float, rho_curr: float) -> float:
    inactive = n_users * (n_users - 1) - n_active
    return inactive * (rho_curr - rho_prev) ** 2


def _same_pair_count(labels: np.ndarray) -> int:
    _, counts = np.unique(labels, return_counts=True)
    return int((counts * (counts - 1)).sum())


def _delta_q_sq_inactive_sbm(
    n_users: int,
    pairs: np.ndarray,
    g_prev: np.ndarray,
    g_curr: np.ndarray,
    pq_prev: tuple[float, float],
    pq_curr: tuple[float, float],
) -> float:
    """Exact inactive-pair mass of ||Q_t - Q_{t-1}||^2 without materializing.

    Ordered pairs split into four classes by (same under previous labels,
    same under current labels); class sizes come from label histograms and
    the joint-label contingency, minus the directly counted active pairs.
    """
    total = n_users * (n_users - 1)
    same_prev_all = _same_pair_count(g_prev)
    same_curr_all = _same_pair_count(g_curr)
    joint = g_prev.astype(np.int64) * (int(g_curr.max()) + 1) + g_curr
    same_both_all = _same_pair_count(joint)

    sp = g_prev[pairs[:, 0]] == g_prev[pairs[:, 1]]
    sc = g_curr[pairs[:, 0]] == g_curr[pairs[:, 1]]
    act_ss = int(np.sum(sp & sc))
    act_sp = int(np.sum(sp))
    act_sc = int(np.sum(sc))
    n_active = len(pairs)

    ss = same_both_all - act_ss
    s_then_c = (same_prev_all - same_both_all) - (act_sp - act_ss)
    c_then_s = (same_curr_all - same_both_all) - (act_sc - act_ss)
    cc = (total - same_prev_all - same_curr_all + same_both_all) - (
        n_active - act_sp - act_sc + act_ss
    )
    p0, q0 = pq_prev
    p1, q1 = pq_curr
    return (
        ss * (p1 - p0) ** 2
        + s_then_c * (q1 - p0) ** 2
        + c_then_s * (p1 - q0) ** 2
        + cc * (q1 - q0) ** 2
    )


# ---------------------------------------------------------------------------
# driver


@dataclass
class Preprocessed:
    """Trace derivatives shared by all inference runs on one input."""

    episodes: list[Episode]
    table: PairTable
    constraints: ConstraintSystem
    reduced: lp.ReducedCovering
    n_users: int
    users: tuple[str, ...]


def preprocess(trace: Trace, *, retweeted_only: bool = True,
               n_threads: int = 1) -> Preprocessed:
    episodes = build_episodes(trace, retweeted_only=retweeted_only)
    table = pair_counts(episodes, trace.n_users, n_threads=n_threads)
    constraints = build_constraints(episodes, table)
    reduced = lp.reduce_covering(table.n_pairs, constraints.rows())
    return Preprocessed(episodes, table, constraints, reduced,
                        trace.n_users, trace.users)


def run_cem(
    data: Trace | Preprocessed,
    prior: str,
    lam: float,
    *,
    beta_fixed: float | None = None,
    max_iters: int = 100,
    epsilon: float = 1e-3,
    seed: int = 0,
    fixed_groups: Sequence[int] | None = None,
    dump_lp_path: str | None = None,
) -> tuple[EmState, InferredGraph]:
    """Run the constrained EM loop until ||Q_new - Q_old||_2 < epsilon.

    All randomness (parameter initialization and Louvain visiting order)
    derives from ``seed`` through independent child streams, so runs are
    reproducible bit for bit.  ``fixed_groups`` pins the block assignment,
    which disables the per-iteration Louvain refresh.
    """
    if prior not in (PRIOR_ER, PRIOR_SBM):
        raise ValueError(f"unknown prior {prior!r}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    prep = data if isinstance(data, Preprocessed) else preprocess(data)
    table = prep.table
    n = prep.n_users

    ss = np.random.SeedSequence(seed)
    s_scalar, s_prior, s_sigma, s_groups, s_louvain = ss.spawn(5)
    rng_scalar = np.random.default_rng(s_scalar)
    rng_prior = np.random.default_rng(s_prior)
    rng_sigma = np.random.default_rng(s_sigma)

    # Random start on the identifiable branch: the true-positive rate above
    # one half, the false-positive rate below.  An unconstrained draw admits
    # a label-switched mirror solution and, when both logits start positive,
    # an absorbing sigma = 1 ridge with alpha = beta.
    params = ParamSet(
        prior=prior,
        alpha=clamp(0.5 + 0.5 * rng_scalar.uniform()),
        beta=clamp(0.5 * rng_scalar.uniform()),
        lam=lam,
        beta_fixed=beta_fixed,
    )
    if beta_fixed is not None:
        params.beta = clamp(beta_fixed)
    if prior == PRIOR_ER:
        params.rho = clamp(rng_prior.uniform())
        groups = None
    else:
        params.p_in = clamp(rng_prior.uniform())
        params.q_out = clamp(rng_prior.uniform())
        if fixed_groups is not None:
            groups = np.asarray(fixed_groups, dtype=np.int64)
            if groups.shape != (n,):
                raise ValueError("fixed_groups must assign every user")
        else:
            rng_groups = np.random.default_rng(s_groups)
            n_blocks = max(1, math.isqrt(n - 1) + 1) if n > 1 else 1
            groups = rng_groups.integers(0, n_blocks, size=n)
    # one Louvain seed per run: a fresh draw each iteration lets tie-breaks
    # flip labels forever and the Q norm never settles
    louvain_seed = int(np.random.default_rng(s_louvain).integers(0, 2**31 - 1))

    table.sigma = rng_sigma.uniform(size=table.n_pairs)
    state = EmState(params, table, groups, n)

    q_prev: np.ndarray | None = None
    prior_used_prev: tuple[float, ...] | None = None
    groups_used_prev: np.ndarray | None = None

    for it in range(1, max_iters + 1):
        prior_used = params.prior_values()
        groups_used = None if groups is None else groups.copy()
        state.q_prior_used = prior_used
        q_new = update_q_er(state) if prior == PRIOR_ER else update_q_sbm(state)

        if q_prev is not None:
            acc = float(np.sum((q_new - q_prev) ** 2))
            if prior == PRIOR_ER:
                acc += _delta_q_sq_inactive_er(
                    n, table.n_pairs, prior_used_prev[0], prior_used[0]
                )
            else:
                acc += _delta_q_sq_inactive_sbm(
                    n, table.pairs, groups_used_prev, groups_used,
                    prior_used_prev, prior_used,
                )
            state.delta_q = math.sqrt(acc)

        # LP objective uses the previous iteration's utilization rates
        _, coeffs = build_w(state, q_new)
        if dump_lp_path and it == 1:
            lp.dump_problem(
                lp.LpProblem(coeffs, tuple(prep.constraints.rows())), dump_lp_path
            )
        sol = lp.solve_reduced(prep.reduced, coeffs)
        if sol.status != lp.STATUS_OPTIMAL:
            raise RuntimeError(f"sigma LP failed with status {sol.status!r}")

        alpha_new, beta_new = update_alpha_beta(state, q_new)
        if prior == PRIOR_ER:
            params.rho = update_prior_er(state, q_new)
        else:
            params.p_in, params.q_out = update_prior_sbm(state, q_new)
        params.alpha, params.beta = alpha_new, beta_new
        table.q = q_new
        table.sigma = sol.x
        state.iteration = it

        if prior == PRIOR_SBM and fixed_groups is None:
            interim = threshold_graph(
                table, q_new, n,
                (PRIOR_SBM, prior_used[0], prior_used[1], groups_used),
            )
            groups = louvain_graph(interim, seed=louvain_seed).labels
            state.groups = groups

        if q_prev is not None and state.delta_q < epsilon:
            state.converged = True
            break
        q_prev = q_new
        prior_used_prev = prior_used
        groups_used_prev = groups_used

    if not state.converged:
        log.warning("EM stopped at iteration cap (%d); delta_q=%.3g",
                    state.iteration, state.delta_q)

    state.prior_spec = (
        (PRIOR_ER, state.q_prior_used[0])
        if prior == PRIOR_ER
        else (PRIOR_SBM, state.q_prior_used[0], state.q_prior_used[1], groups_used)
    )
    graph = threshold_graph(table, table.q, n, state.prior_spec)
    return state, graph
