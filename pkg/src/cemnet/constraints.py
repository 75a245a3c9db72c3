"""Per-episode covering constraints and trace-vs-graph feasibility checks.

Every non-author participant of an episode must have received the post from
somebody who shared it earlier, which yields one covering row per
(episode, resharer): the sigma variables of the pairs preceding that user
must sum to at least one.  A graph explains an episode exactly when each
such row is covered by an actual edge; following any predecessor edge
strictly decreases episode position, so this local test is equivalent to
the existence of a time-respecting path from the author.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .graph import InferredGraph
from .trace import Episode, PairTable


@dataclass(frozen=True)
class FeasibilityConstraint:
    episode_id: int
    target_user: int
    pair_ids: tuple[int, ...]  # indices into the PairTable, all with target_user as dst


@dataclass(frozen=True)
class ConstraintSystem:
    constraints: tuple[FeasibilityConstraint, ...]
    n_vars: int  # number of sigma variables = active pairs

    def __len__(self) -> int:
        return len(self.constraints)

    def rows(self) -> list[tuple[int, ...]]:
        return [c.pair_ids for c in self.constraints]


def build_constraints(
    episodes: Sequence[Episode], table: PairTable
) -> ConstraintSystem:
    """One covering row per (episode, non-author user) over active-pair ids."""
    out: list[FeasibilityConstraint] = []
    index = table.index
    for eid, ep in enumerate(episodes):
        users = ep.users
        for pos in range(1, len(users)):
            j = users[pos]
            pair_ids = tuple(index[(users[a], j)] for a in range(pos))
            out.append(FeasibilityConstraint(eid, j, pair_ids))
    return ConstraintSystem(tuple(out), table.n_pairs)


@dataclass(frozen=True)
class FeasibilityReport:
    fraction: float
    n_feasible: int
    n_episodes: int
    per_episode: tuple[bool, ...]

    def to_json(self) -> dict:
        return {
            "fraction": self.fraction,
            "n_feasible": self.n_feasible,
            "n_episodes": self.n_episodes,
        }


def _episode_feasible(graph: InferredGraph, ep: Episode) -> bool:
    ins = graph.in_sets
    seen = {ep.users[0]}
    for j in ep.users[1:]:
        preds = ins.get(j)
        if preds is None or seen.isdisjoint(preds):
            return False
        seen.add(j)
    return True


def check_feasibility(
    graph: InferredGraph, episodes: Sequence[Episode], *, n_threads: int = 1
) -> FeasibilityReport:
    """Fraction of episodes the graph can explain (local predecessor test)."""
    if n_threads > 1 and len(episodes) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            flags = tuple(pool.map(lambda ep: _episode_feasible(graph, ep), episodes))
    else:
        flags = tuple(_episode_feasible(graph, ep) for ep in episodes)
    n_ok = sum(flags)
    total = len(episodes)
    fraction = n_ok / total if total else 1.0
    return FeasibilityReport(fraction, n_ok, total, flags)
