"""Simulation trace: per-rank interval records plus the config that made them.

Each rank's timeline is a gap-free, time-ordered list of intervals
(kind, step, start, end) covering [0, finish].  Kinds: "compute" (the work
phase, including any noise-delayed start), "wait" (communication wait from
post to release, possibly zero length), "idle_injected" (injected idle
preceding a step's work).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["COMPUTE", "WAIT", "IDLE_INJECTED", "KINDS", "Trace"]

COMPUTE = "compute"
WAIT = "wait"
IDLE_INJECTED = "idle_injected"
KINDS = (COMPUTE, WAIT, IDLE_INJECTED)


@dataclass
class Trace:
    """Result of one run; the embedded config reproduces it bit-identically."""

    intervals: list  # per rank: list of (kind, step, start, end)
    rank_domain: list
    steps: int
    config: dict
    finish_times: list
    _compute_end: np.ndarray | None = field(
        default=None, repr=False, compare=False
    )

    @property
    def processes(self) -> int:
        return len(self.intervals)

    @property
    def domains(self) -> list:
        return sorted(set(self.rank_domain))

    def ranks_of_domain(self, domain: int) -> list:
        return [r for r, d in enumerate(self.rank_domain) if d == domain]

    def iter_records(self):
        """Flat record view in (rank, start) order."""
        for rank, items in enumerate(self.intervals):
            for kind, step, start, end in items:
                yield rank, self.rank_domain[rank], kind, step, start, end

    def compute_end_matrix(self) -> np.ndarray:
        """End time of each rank's compute interval, shape (P, steps).

        NaN marks steps a rank never completed (cannot happen for traces
        produced by the engine, which runs every rank to the last step).
        """
        if self._compute_end is None:
            m = np.full((self.processes, self.steps), np.nan)
            for rank, items in enumerate(self.intervals):
                for kind, step, _start, end in items:
                    if kind == COMPUTE:
                        m[rank, step] = end
            self._compute_end = m
        return self._compute_end

    def makespan(self) -> float:
        return max(self.finish_times)
