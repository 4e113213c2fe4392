"""Exchange plan for one bulk-synchronous step: edges, protocol, wait gating.

Per up-distance d a rank sends to r+d and receives from r-d; per
down-distance it sends to r-d and receives from r+d.  That mirror-closed
form matches what an SPMD loop over a fixed neighbor list produces and
guarantees every send has a matching receive for any distance sets.

Waits are additionally gated on the posts of ranks at the partial-sum
offsets of each direction's distance list repeated sigma times.  This
reproduces the known propagation law for idle waves (sigma*d ranks per
phase for a single distance d, the distance sum for mixed lists) while the
real messages keep their full protocol cost.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .model import CommPattern

__all__ = ["EAGER", "RENDEZVOUS", "protocol_for", "chain_offsets", "Edge", "Plan", "build_plan"]

EAGER = "eager"
RENDEZVOUS = "rendezvous"


def protocol_for(message_bytes: int, eager_threshold: int) -> str:
    """Protocol selection: eager strictly below the threshold."""
    return EAGER if message_bytes < eager_threshold else RENDEZVOUS


def chain_offsets(distances: tuple[int, ...], sigma: int) -> tuple[int, ...]:
    """Partial sums of the ascending distance list repeated sigma times."""
    offsets = []
    total = 0
    for _ in range(sigma):
        for d in sorted(distances):
            total += d
            offsets.append(total)
    return tuple(offsets)


class Edge:
    """One directed message lane (src -> dst), FIFO across steps."""

    __slots__ = ("src", "dst", "sends", "recv_posted")

    def __init__(self, src: int, dst: int) -> None:
        self.src = src
        self.dst = dst
        # unconsumed sends as (step, time); eager time is availability
        # (post + cost), rendezvous time is the sender's post time
        self.sends: deque = deque()
        self.recv_posted: tuple[int, float] | None = None  # (step, post time)


@dataclass
class Plan:
    """Static per-rank exchange structure for one run."""

    processes: int
    out_edges: list[list[Edge]]
    in_edges: list[list[Edge]]
    chain_deps: list[tuple[int, ...]]
    chain_watchers: list[tuple[int, ...]]
    enabled: bool
    sigma: int

    def reset(self) -> None:
        for edges in self.out_edges:
            for e in edges:
                e.sends.clear()
                e.recv_posted = None


def _neighbor(rank: int, offset: int, processes: int, boundary: str) -> int | None:
    """Rank at signed offset, or None when outside an open chain."""
    if boundary == "periodic":
        target = (rank + offset) % processes
        return None if target == rank else target
    target = rank + offset
    if 0 <= target < processes:
        return target
    return None


def build_plan(pattern: CommPattern, processes: int) -> Plan:
    """Expand a pattern into directed edges and wait-gating dependencies."""
    for d in pattern.distances_up + pattern.distances_down:
        if d >= processes and pattern.boundary == "periodic":
            raise ValueError(
                f"distance {d} must be below the process count {processes} "
                "on a periodic boundary"
            )
    sigma = pattern.resolved_sigma()
    out_edges: list[list[Edge]] = [[] for _ in range(processes)]
    in_edges: list[list[Edge]] = [[] for _ in range(processes)]
    for r in range(processes):
        for d in sorted(pattern.distances_up):
            dst = _neighbor(r, d, processes, pattern.boundary)
            if dst is not None:
                e = Edge(r, dst)
                out_edges[r].append(e)
                in_edges[dst].append(e)
        for d in sorted(pattern.distances_down):
            dst = _neighbor(r, -d, processes, pattern.boundary)
            if dst is not None:
                e = Edge(r, dst)
                out_edges[r].append(e)
                in_edges[dst].append(e)

    chain_deps: list[tuple[int, ...]] = []
    for r in range(processes):
        recv_sources = {e.src for e in in_edges[r]}
        deps = set()
        for o in chain_offsets(pattern.distances_up, sigma):
            q = _neighbor(r, -o, processes, pattern.boundary)
            if q is not None and q not in recv_sources:
                deps.add(q)
        for o in chain_offsets(pattern.distances_down, sigma):
            q = _neighbor(r, o, processes, pattern.boundary)
            if q is not None and q not in recv_sources:
                deps.add(q)
        chain_deps.append(tuple(sorted(deps)))

    watchers: list[list[int]] = [[] for _ in range(processes)]
    for r in range(processes):
        for q in chain_deps[r]:
            watchers[q].append(r)
    return Plan(
        processes=processes,
        out_edges=out_edges,
        in_edges=in_edges,
        chain_deps=chain_deps,
        chain_watchers=[tuple(w) for w in watchers],
        enabled=pattern.enabled,
        sigma=sigma,
    )
