"""Reference inference methods: Star, Chain, Saito-style IC EM, Newman EM.

Star links every episode author to each of its resharers; Chain links
consecutive resharers.  The Saito baseline runs discrete-time
independent-cascade EM, so a reshare can only be credited to members
active one time unit earlier.  The Newman baseline is the unconstrained
noisy-measurement EM fed with direct author-to-resharer counts only.
Neither sees hidden multi-hop paths, which is exactly what costs them
feasibility.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import InferredGraph
from .trace import Episode, PairTable, pair_counts

log = logging.getLogger("cemnet.baselines")

_PROB_FLOOR = 1e-12


def star_graph(episodes: Sequence[Episode], n_users: int) -> InferredGraph:
    """Directed edge from each episode author to every other participant."""
    edges = set()
    for ep in episodes:
        author = ep.users[0]
        for j in ep.users[1:]:
            edges.add((author, j))
    return InferredGraph(n_users, edges)


def chain_graph(episodes: Sequence[Episode], n_users: int) -> InferredGraph:
    """Directed path along each episode's chronological order."""
    edges = set()
    for ep in episodes:
        users = ep.users
        for a in range(len(users) - 1):
            edges.add((users[a], users[a + 1]))
    return InferredGraph(n_users, edges)


@dataclass
class SaitoResult:
    table: PairTable
    kappa: np.ndarray  # influence probability per active pair
    graph: InferredGraph
    iterations: int
    converged: bool


def saito_em(
    episodes: Sequence[Episode],
    n_users: int,
    *,
    max_iters: int = 100,
    epsilon: float = 1e-6,
    threshold: float = 0.5,
    seed: int = 0,
    init_kappa: float | None = None,
) -> SaitoResult:
    """Discrete-time independent-cascade EM over influence probabilities.

    Under the IC model a user activated at time t gets a single chance to
    infect each susceptible neighbor at t + 1.  Candidate parents of a
    reshare are therefore the episode members active exactly one time unit
    earlier; reshares with no such member are unexplained and earn nobody
    credit.  E-step: the credit for an explained reshare splits among its
    window parents i proportionally to kappa_ij / (1 - prod(1 - kappa)).
    M-step: kappa_ij is the summed credit over the trials where i had a
    chance at j, i.e. episodes containing i in which j was still
    susceptible one unit after i acted.  Unexplained reshares are why this
    baseline stays extremely sparse on reshare traces.
    """
    table = pair_counts(episodes, n_users)
    p_count = table.n_pairs
    flat: list[int] = []
    ptr = [0]
    participation = np.zeros(n_users)
    # per ordered pair: episodes where j activated simultaneously with i,
    # so i's single chance at t_i + 1 was never tested
    no_trial = np.zeros(p_count)
    for ep in episodes:
        users = ep.users
        times = ep.times
        k = len(users)
        for u in users:
            participation[u] += 1.0
        for pos in range(1, k):
            j = users[pos]
            tj = times[pos]
            window = [
                users[a] for a in range(pos) if times[a] == tj - 1.0
            ]
            if window:
                flat.extend(table.index[(i, j)] for i in window)
                ptr.append(len(flat))
            # trials require j susceptible at t_i + 1: simultaneous
            # activations (t_i == t_j) present no chance at all
            for a in range(pos):
                if times[a] > tj - 1.0 and (users[a], j) in table.index:
                    no_trial[table.index[(users[a], j)]] += 1.0
        # pairs where j acted strictly before i never present a trial
        # either; those episodes are subtracted via the reverse counts
    flat_ids = np.array(flat, dtype=np.int64)
    starts = np.array(ptr[:-1], dtype=np.int64)
    row_of_slot = np.repeat(
        np.arange(len(starts)), np.diff(np.array(ptr, dtype=np.int64))
    )

    m_rev = np.array(
        [table.m_of(int(j), int(i)) for i, j in table.pairs], dtype=np.float64
    )
    # trials(i, j) = episodes containing i, minus those where j was already
    # infected when i acted (reverse order) or activated inside i's window
    # without being attributable (no_trial above).
    denom = participation[table.pairs[:, 0]] - m_rev - no_trial
    denom = np.maximum(denom, 1.0)

    if init_kappa is not None:
        kappa = np.full(p_count, float(init_kappa))
    else:
        kappa = np.random.default_rng(seed).uniform(size=p_count)
    kappa = np.clip(kappa, _PROB_FLOOR, 1.0 - _PROB_FLOOR)

    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if len(flat_ids):
            probs = kappa[flat_ids]
            log_fail = np.log1p(-np.minimum(probs, 1.0 - _PROB_FLOOR))
            activation = 1.0 - np.exp(np.add.reduceat(log_fail, starts))
            activation = np.maximum(activation, _PROB_FLOOR)
            resp = probs / activation[row_of_slot]
            credit = np.bincount(flat_ids, weights=resp, minlength=p_count)
        else:
            credit = np.zeros(p_count)
        new_kappa = np.clip(credit / denom, 0.0, 1.0)
        delta = float(np.max(np.abs(new_kappa - kappa))) if p_count else 0.0
        kappa = new_kappa
        if delta < epsilon:
            converged = True
            break
    if not converged:
        log.warning("saito EM hit iteration cap (%d)", max_iters)

    edges = {
        (int(table.pairs[k, 0]), int(table.pairs[k, 1]))
        for k in np.flatnonzero(kappa > threshold)
    }
    scores = {e: float(kappa[table.index[e]]) for e in edges}
    return SaitoResult(table, kappa, InferredGraph(n_users, edges, scores), it, converged)


@dataclass
class NewmanResult:
    table: PairTable
    direct: np.ndarray  # author->resharer evidence count per active pair
    q: np.ndarray
    alpha: float
    beta: float
    rho: float
    graph: InferredGraph
    iterations: int
    converged: bool


def newman_em(
    episodes: Sequence[Episode],
    n_users: int,
    *,
    max_iters: int = 100,
    epsilon: float = 1e-3,
    threshold: float = 0.5,
    seed: int = 0,
) -> NewmanResult:
    """Noisy-measurement EM on direct observations.

    Per ordered pair the trial count is M_ij and the success count E_ij is
    the number of episodes authored by i in which j reshared.  Posteriors,
    utilization rates, and the flat prior follow the same fixed-point form
    as the constrained method, with E_ij/M_ij in place of M_ij sigma_ij.
    """
    table = pair_counts(episodes, n_users)
    p_count = table.n_pairs
    direct = np.zeros(p_count)
    for ep in episodes:
        author = ep.users[0]
        for j in ep.users[1:]:
            direct[table.index[(author, j)]] += 1.0

    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    # identifiable branch, as in the constrained method: start the
    # true-positive rate above one half and the false-positive rate below
    alpha = _clamp(0.5 + 0.5 * rng.uniform())
    beta = _clamp(0.5 * rng.uniform())
    rho = _clamp(rng.uniform())

    n_total = n_users * (n_users - 1)
    n_inactive = n_total - p_count
    q = np.full(p_count, rho)
    rho_used_prev: float | None = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        rho_used = rho
        gap = (
            (math.log(rho) - math.log1p(-rho))
            + direct * (math.log(alpha) - math.log(beta))
            + (table.m - direct) * (math.log1p(-alpha) - math.log1p(-beta))
        )
        q_new = _sigmoid(gap)
        den_a = float(np.dot(table.m, q_new))
        if den_a > 0:
            alpha = _clamp(float(np.dot(direct, q_new)) / den_a)
        den_b = float(np.dot(table.m, 1.0 - q_new))
        if den_b > 0:
            beta = _clamp(float(np.dot(direct, 1.0 - q_new)) / den_b)
        rho = _clamp(
            (float(q_new.sum()) + n_inactive * rho_used) / n_total
        )
        if rho_used_prev is not None:
            delta_sq = float(np.sum((q_new - q) ** 2))
            delta_sq += n_inactive * (rho_used - rho_used_prev) ** 2
            if math.sqrt(delta_sq) < epsilon:
                q = q_new
                converged = True
                break
        q = q_new
        rho_used_prev = rho_used
    if not converged:
        log.warning("newman EM hit iteration cap (%d)", max_iters)

    edges = {
        (int(table.pairs[k, 0]), int(table.pairs[k, 1]))
        for k in np.flatnonzero(q > threshold)
    }
    if rho > threshold:
        active = set(map(tuple, table.pairs.tolist()))
        for i in range(n_users):
            for j in range(n_users):
                if i != j and (i, j) not in active:
                    edges.add((i, j))
    scores = {
        e: float(q[table.index[e]]) if e in table.index else rho for e in edges
    }
    return NewmanResult(
        table, direct, q, alpha, beta, rho,
        InferredGraph(n_users, edges, scores), it, converged,
    )


def _clamp(p: float) -> float:
    return min(max(float(p), _PROB_FLOOR), 1.0 - _PROB_FLOOR)


def _sigmoid(gap: np.ndarray) -> np.ndarray:
    out = np.empty_like(gap)
    pos = gap >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-gap[pos]))
    ez = np.exp(gap[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
