"""Interaction-log parsing, episode derivation, and temporal pair counts.

A trace is a CSV of post/repost rows ``pid,t,uid,rid`` where ``rid = -1``
marks an original post and otherwise points at the reposted instance
(possibly itself a repost).  From the trace we derive *episodes*: for each
original post, the author followed by the users that reshared it, in
chronological order.  ``M[i, j]`` counts the episodes in which user ``i``
appears strictly before user ``j``; only pairs with a positive count are
ever stored.
"""

from __future__ import annotations

import csv as _csv
import io
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

log = logging.getLogger("cemnet.trace")

ORIGINAL_RID = "-1"


class TraceFormatError(ValueError):
    """Malformed or inconsistent trace input (bad row, duplicate pid, ...)."""


@dataclass(frozen=True)
class TraceRecord:
    pid: str
    t: float
    uid: str
    rid: str | None  # None for original posts


@dataclass(frozen=True)
class Episode:
    """Time-ordered participants of one original post.

    ``users[0]`` is the author; the remaining entries are the resharers in
    chronological order (ties broken by trace row order).  A uid appears at
    most once.
    """

    root_pid: str
    users: tuple[int, ...]
    times: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.users)


class Trace:
    """Parsed trace with uids/pids interned to dense integer indices."""

    def __init__(self, records: Sequence[TraceRecord]):
        if not records:
            raise TraceFormatError("empty trace")
        self.records: tuple[TraceRecord, ...] = tuple(records)
        seen: dict[str, int] = {}
        by_pid: dict[str, int] = {}
        for row, rec in enumerate(self.records):
            if rec.pid in by_pid:
                raise TraceFormatError(f"duplicate pid {rec.pid!r} at row {row + 1}")
            by_pid[rec.pid] = row
            if rec.uid not in seen:
                seen[rec.uid] = len(seen)
        for row, rec in enumerate(self.records):
            if rec.rid is not None and rec.rid not in by_pid:
                raise TraceFormatError(
                    f"row {row + 1}: rid {rec.rid!r} does not match any pid in the trace"
                )
        self.users: tuple[str, ...] = tuple(seen)
        self.uid_index: dict[str, int] = seen
        self._row_of_pid = by_pid
        self.originals: tuple[str, ...] = tuple(
            r.pid for r in self.records if r.rid is None
        )

    @property
    def n_users(self) -> int:
        return len(self.users)

    def record_of(self, pid: str) -> TraceRecord:
        try:
            return self.records[self._row_of_pid[pid]]
        except KeyError:
            raise KeyError(f"unknown pid {pid!r}") from None

    def row_of(self, pid: str) -> int:
        return self._row_of_pid[pid]

    def head(self, n_rows: int) -> "Trace":
        """First ``n_rows`` rows as a new trace.

        Rows are time-ordered and reposts always point backwards, so any
        prefix is closed under rid resolution.
        """
        if n_rows >= len(self.records):
            return self
        return Trace(self.records[:n_rows])


def _parse_timestamp(token: str, mode: list[str | None], row: int) -> float:
    token = token.strip()
    if mode[0] is None:
        mode[0] = "int" if token.lstrip("+-").isdigit() else "rfc3339"
    if mode[0] == "int":
        try:
            value = int(token)
        except ValueError:
            raise TraceFormatError(
                f"row {row}: timestamp {token!r} is not an integer "
                "(timestamp styles cannot be mixed within one file)"
            ) from None
        if value < 0:
            raise TraceFormatError(f"row {row}: negative timestamp {token!r}")
        return float(value)
    try:
        return datetime.fromisoformat(token.replace("Z", "+00:00")).timestamp()
    except ValueError:
        raise TraceFormatError(f"row {row}: unparsable timestamp {token!r}") from None


def parse_trace(source: str | Path | IO[str], *, drop_orphans: bool = False) -> Trace:
    """Parse a ``pid,t,uid,rid`` CSV stream into a :class:`Trace`.

    Timestamps are non-negative integers or RFC3339 strings, auto-detected
    from the first row and required to be homogeneous.  A rid chain that
    does not resolve to a post in the trace is a hard error unless
    ``drop_orphans`` is set, in which case the offending rows are dropped
    with a warning.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_trace(fh, drop_orphans=drop_orphans)
    reader = _csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise TraceFormatError("empty trace")
    if [h.strip() for h in header] != ["pid", "t", "uid", "rid"]:
        raise TraceFormatError(f"bad header {header!r}, expected pid,t,uid,rid")
    mode: list[str | None] = [None]
    records: list[TraceRecord] = []
    for row, parts in enumerate(reader, start=2):
        if not parts:
            continue
        if len(parts) != 4:
            raise TraceFormatError(f"row {row}: expected 4 fields, got {len(parts)}")
        pid, t_token, uid, rid = (p.strip() for p in parts)
        if not pid or not uid:
            raise TraceFormatError(f"row {row}: empty pid or uid")
        t = _parse_timestamp(t_token, mode, row)
        records.append(
            TraceRecord(pid, t, uid, None if rid == ORIGINAL_RID else rid)
        )
    if not records:
        raise TraceFormatError("empty trace")
    if drop_orphans:
        records = _drop_orphans(records)
    return Trace(records)


def _drop_orphans(records: list[TraceRecord]) -> list[TraceRecord]:
    """Drop records whose rid chain leaves the trace (and their dependants)."""
    known = {r.pid for r in records}
    kept: list[TraceRecord] = []
    dropped: set[str] = set()
    for rec in records:
        if rec.rid is not None and (rec.rid not in known or rec.rid in dropped):
            dropped.add(rec.pid)
            log.warning("dropping orphan repost %s (rid %s)", rec.pid, rec.rid)
            continue
        kept.append(rec)
    # a drop can orphan later rows that were already checked against `known`
    if dropped:
        again = [r for r in kept if r.rid in dropped]
        while again:
            for rec in again:
                dropped.add(rec.pid)
                log.warning("dropping orphan repost %s (rid %s)", rec.pid, rec.rid)
            kept = [r for r in kept if r.pid not in dropped]
            again = [r for r in kept if r.rid in dropped]
    return kept


def resolve_root(trace: Trace, pid: str, _memo: dict[str, str] | None = None) -> str:
    """Follow the rid chain from ``pid`` to the original post it reshares."""
    memo = _memo if _memo is not None else {}
    path: list[str] = []
    cur = pid
    while cur not in memo:
        rec = trace.record_of(cur)
        if rec.rid is None:
            memo[cur] = cur
            break
        path.append(cur)
        cur = rec.rid
        if cur in path:
            raise TraceFormatError(f"rid cycle detected at pid {cur!r}")
    root = memo[cur] if cur in memo else cur
    for p in path:
        memo[p] = root
    return root


def build_episodes(trace: Trace, *, retweeted_only: bool = True) -> list[Episode]:
    """Group reposts by resolved root into chronologically ordered episodes.

    With ``retweeted_only`` (the standard preprocessing) originals that were
    never reshared produce no episode.  Repeat reshares of one root by the
    same uid keep only the earliest; reshares by the root's own author are
    ignored since the author already heads the episode.
    """
    memo: dict[str, str] = {}
    # root pid -> uid index -> (t, row)
    resharers: dict[str, dict[int, tuple[float, int]]] = {}
    for row, rec in enumerate(trace.records):
        if rec.rid is None:
            continue
        root = resolve_root(trace, rec.pid, memo)
        uid = trace.uid_index[rec.uid]
        entry = resharers.setdefault(root, {})
        key = (rec.t, row)
        if uid not in entry or key < entry[uid]:
            entry[uid] = key
    episodes: list[Episode] = []
    for pid in trace.originals:
        root_rec = trace.record_of(pid)
        author = trace.uid_index[root_rec.uid]
        entry = resharers.get(pid, {})
        entry.pop(author, None)
        if not entry and retweeted_only:
            continue
        ordered = sorted(entry.items(), key=lambda kv: kv[1])
        users = (author,) + tuple(uid for uid, _ in ordered)
        times = (root_rec.t,) + tuple(t for _, (t, _) in ordered)
        episodes.append(Episode(pid, users, times))
    return episodes


@dataclass
class PairTable:
    """Sparse per-ordered-pair storage for the active pairs of a trace.

    Rows are sorted lexicographically by ``(i, j)``.  ``m`` holds the
    episode counts; ``sigma``/``q``/``w`` are mutable slots used by the EM
    loop and start at zero.
    """

    n_users: int
    pairs: np.ndarray  # (P, 2) int32
    m: np.ndarray  # (P,) float64
    index: dict[tuple[int, int], int] = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    @classmethod
    def from_counts(cls, counts: Counter, n_users: int) -> "PairTable":
        items = sorted(counts.items())
        pairs = np.array([ij for ij, _ in items], dtype=np.int32).reshape(-1, 2)
        m = np.array([c for _, c in items], dtype=np.float64)
        index = {ij: k for k, (ij, _) in enumerate(items)}
        zeros = np.zeros(len(items), dtype=np.float64)
        return cls(n_users, pairs, m, index, zeros.copy(), zeros.copy(), zeros.copy())

    @property
    def n_pairs(self) -> int:
        return len(self.m)

    def m_of(self, i: int, j: int) -> float:
        k = self.index.get((i, j))
        return 0.0 if k is None else float(self.m[k])


def _pair_counter(episodes: Iterable[Episode]) -> Counter:
    counts: Counter = Counter()
    for ep in episodes:
        users = ep.users
        k = len(users)
        for a in range(k - 1):
            ua = users[a]
            for b in range(a + 1, k):
                counts[(ua, users[b])] += 1
    return counts


def pair_counts(
    episodes: Sequence[Episode], n_users: int, *, n_threads: int = 1
) -> PairTable:
    """Count, per ordered user pair, the episodes where ``i`` precedes ``j``."""
    if n_threads > 1 and len(episodes) > 1:
        chunks = [episodes[k::n_threads] for k in range(n_threads)]
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(_pair_counter, chunks))
        counts: Counter = Counter()
        for part in parts:
            counts.update(part)
    else:
        counts = _pair_counter(episodes)
    return PairTable.from_counts(counts, n_users)


def trace_to_csv(trace: Trace, path: str | Path) -> None:
    """Write a trace back out in the canonical CSV format.

    Integral timestamps are written as integer ticks; fractional ones
    (possible after RFC3339 parsing) fall back to RFC3339 so the file
    stays within the format.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["pid", "t", "uid", "rid"])
        for rec in trace.records:
            if float(rec.t).is_integer():
                t = str(int(rec.t))
            else:
                t = datetime.fromtimestamp(rec.t, tz=timezone.utc).isoformat()
            writer.writerow([rec.pid, t, rec.uid, ORIGINAL_RID if rec.rid is None else rec.rid])


def trace_from_string(text: str, **kwargs) -> Trace:
    return parse_trace(io.StringIO(text), **kwargs)
