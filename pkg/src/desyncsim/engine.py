"""Deterministic discrete-event engine for bulk-synchronous loops.

Every rank repeats: optional injected idle, a work phase, then a waitall on
its exchange.  Memory-bound work drains bytes through the rank's contention
domain at the processor-sharing rate b(A)*t_p/A, where A is the
thread-weighted active-core count of the domain and t_p the rank's threads;
core-bound work is a plain timer.  The event queue orders co-timed events
by (time, kind priority, rank, sequence), which together with counter-based
noise makes runs bit-identical for identical configs.

Event kinds and their co-timed priority, highest first: injection_end,
message_ready, request_complete, compute_done, injection_start, sim_end.
injection_start is lowest so a rank entering idle never preempts co-timed
completions; sim_end exists for queue-lexicon completeness only, the run
ends when the last rank finishes its final step and the kind is never
scheduled.
"""

from __future__ import annotations

import heapq

from .comm import RENDEZVOUS, build_plan, protocol_for
from .model import bandwidth_at
from .perturb import injection_map, noise_delays, noise_factors
from .trace import COMPUTE, IDLE_INJECTED, WAIT, Trace

__all__ = [
    "TIME_EPS",
    "SimulationError",
    "DeadlockError",
    "DomainDrainState",
    "run",
]

TIME_EPS = 1e-12  # seconds; tolerance when comparing event times

PRIO_INJECTION_END = 0
PRIO_MESSAGE_READY = 1
PRIO_REQUEST_COMPLETE = 2
PRIO_COMPUTE_DONE = 3
PRIO_INJECTION_START = 4
PRIO_SIM_END = 5

# event codes (payload dispatch, independent of priority)
_INJ_START = 0
_INJ_END = 1
_WORK_START = 2
_DOM_DONE = 3
_CORE_DONE = 4
_REQ_DONE = 5
_DEMAND = 6


class SimulationError(RuntimeError):
    """Internal inconsistency or unrunnable configuration."""


class DeadlockError(SimulationError):
    """The event queue drained while ranks were still waiting."""


class DomainDrainState:
    """Processor-sharing bandwidth drain of one contention domain.

    Members drain their per-thread share of b(A) minus any transient
    communication demand.  Completion order under a shared rate is fixed by
    the per-thread completion key kappa = drained_at_join + bytes/threads,
    so a single heap yields the next finisher and one queued event per
    domain suffices.
    """

    __slots__ = (
        "index",
        "table",
        "cores",
        "members",
        "kappa",
        "heap",
        "active",
        "demand",
        "drained",
        "last_time",
        "generation",
    )

    def __init__(self, index: int, bandwidth_table: list, cores: int) -> None:
        self.index = index
        self.cores = cores
        # table[a] = aggregate bytes/s with a active cores; table[0] unused
        self.table = [0.0] + [float(b) for b in bandwidth_table]
        if len(self.table) != cores + 1:
            raise SimulationError("bandwidth table does not cover the domain cores")
        self.members: dict = {}  # rank -> threads
        self.kappa: dict = {}  # rank -> per-thread completion key
        self.heap: list = []
        self.active = 0  # thread-weighted active cores
        self.demand = 0.0  # transient communication demand, bytes/s
        self.drained = 0.0  # cumulative per-thread bytes since t=0
        self.last_time = 0.0
        self.generation = 0

    def rate(self) -> float:
        """Current per-thread drain rate in bytes/s."""
        if self.active == 0:
            return 0.0
        available = self.table[self.active] - self.demand
        # copies share the bus, they cannot starve a computing core below
        # its fully-contended share
        floor = self.active * self.table[self.cores] / self.cores
        if available < floor:
            available = floor
        return available / self.active

    def advance(self, now: float) -> None:
        """Accumulate drain up to ``now``; callers must never move time back."""
        if now < self.last_time - TIME_EPS:
            raise SimulationError(
                f"domain {self.index} advanced backwards: "
                f"{self.last_time} -> {now}"
            )
        if now > self.last_time:
            if self.active:
                self.drained += self.rate() * (now - self.last_time)
            self.last_time = now

    def join(self, rank: int, threads: int, volume: float, now: float) -> None:
        """Rank starts draining ``volume`` bytes with ``threads`` threads."""
        if rank in self.members:
            raise SimulationError(f"rank {rank} already active on domain {self.index}")
        if self.active + threads > self.cores:
            raise SimulationError(f"domain {self.index} oversubscribed")
        self.advance(now)
        self.members[rank] = threads
        key = self.drained + volume / threads
        self.kappa[rank] = key
        heapq.heappush(self.heap, (key, rank))
        self.active += threads
        self.generation += 1

    def remaining(self, rank: int) -> float:
        """Bytes the member still has to drain; guards against negatives."""
        threads = self.members[rank]
        left = (self.kappa[rank] - self.drained) * threads
        if left < -1e-9 * max(1.0, self.kappa[rank] * threads):
            raise SimulationError(
                f"rank {rank} overdrained on domain {self.index}: {left} bytes"
            )
        return max(left, 0.0)

    def next_completion(self) -> tuple | None:
        """(time, rank) of the next finisher at the current rate, or None."""
        if not self.members:
            return None
        rate = self.rate()
        if rate <= 0.0:
            return None  # stalled until demand drops or membership changes
        key, rank = self.heap[0]
        return self.last_time + (key - self.drained) / rate, rank

    def pop_completed(self, now: float) -> int:
        """Finish the head member exactly at its key; returns its rank."""
        if not self.heap:
            raise SimulationError(f"completion on empty domain {self.index}")
        key, rank = heapq.heappop(self.heap)
        # snap to the key: drift between scheduling and firing is FP-only
        if key < self.drained - 1e-6 * max(1.0, key):
            raise SimulationError(
                f"domain {self.index} drain overshot key of rank {rank}"
            )
        self.drained = key
        self.last_time = now
        self.active -= self.members.pop(rank)
        del self.kappa[rank]
        self.generation += 1
        return rank

    def add_demand(self, delta: float, now: float) -> None:
        """Transient communication bandwidth demand (gamma charge)."""
        self.advance(now)
        self.demand += delta
        if self.demand < 0.0:  # FP residue from paired add/remove
            self.demand = 0.0
        self.generation += 1


class _Engine:
    def __init__(self, config) -> None:
        self.config = config
        wl = config.workload
        self.memory_bound = wl.kind == "memory_bound"
        self.steps = wl.steps
        self.P = len(config.process_specs)
        self.threads = [p.threads for p in config.process_specs]
        self.dom_of = [p.domain for p in config.process_specs]
        self.node_of = [config.domains[p.domain].node for p in config.process_specs]
        self.domains = [
            DomainDrainState(
                d.index,
                [bandwidth_at(d.curve, a) for a in range(1, d.cores + 1)],
                d.cores,
            )
            for d in config.domains
        ]
        pattern = config.pattern
        self.plan = build_plan(pattern, self.P)
        self.comm_enabled = self.plan.enabled
        self.rendezvous = protocol_for(
            pattern.message_bytes, pattern.eager_threshold
        ) == RENDEZVOUS
        self.cost = pattern.transfer_cost()
        self.gamma = pattern.membw_charge
        self.msg_bytes = pattern.message_bytes
        self.injections = injection_map(config.injections)
        noise = config.noise
        self.factors = [noise_factors(noise, r, self.steps) for r in range(self.P)]
        self.delays = [noise_delays(noise, r, self.steps) for r in range(self.P)]
        if self.memory_bound:
            self.base_volume = wl.volume_per_step
        else:
            self.base_duration = wl.duration_per_step

        self.now = 0.0
        self.heap: list = []
        self.seq = 0
        self.step = [0] * self.P
        self.posted_step = [-1] * self.P
        self.post_time = [0.0] * self.P
        self.pending = [0] * self.P
        self.wait_start = [0.0] * self.P
        self.compute_start = [0.0] * self.P
        self.intervals: list = [[] for _ in range(self.P)]
        self.finish = [0.0] * self.P
        self.finished = 0
        self.waiters_on_post: list = [[] for _ in range(self.P)]
        # test hook: set to a list to record (src, dst, step, post_s, done_s)
        self.message_log: list | None = None

    # -- event queue ----------------------------------------------------

    def _push(self, time: float, prio: int, rank: int, code: int, data) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, prio, rank, self.seq, code, data))

    def run(self) -> Trace:
        for r in range(self.P):  # warm-up barrier: everyone starts step 0 at t=0
            self._begin_phase(r, 0.0)
        heap = self.heap
        while heap and self.finished < self.P:
            time, _prio, rank, _seq, code, data = heapq.heappop(heap)
            if time < self.now - TIME_EPS:
                raise SimulationError(f"event time ran backwards at {time}")
            if time > self.now:
                self.now = time
            if code == _DOM_DONE:
                dom = self.domains[data[0]]
                if data[1] != dom.generation:
                    continue  # superseded by a later membership/demand change
                done_rank = dom.pop_completed(time)
                self._finish_compute(done_rank, time)
                self._reschedule(dom, time)
            elif code == _REQ_DONE:
                edge, _step, both = data
                self._request_done(edge.dst, time)
                if both:
                    self._request_done(edge.src, time)
            elif code == _CORE_DONE:
                self._finish_compute(rank, time)
            elif code == _DEMAND:
                for di in data[0]:
                    dom = self.domains[di]
                    dom.add_demand(data[1], time)
                    self._reschedule(dom, time)
            elif code == _WORK_START:
                self._join_domain(rank, time, data[1])
            elif code == _INJ_END:
                self.intervals[rank].append((IDLE_INJECTED, data[0], data[1], time))
                self._start_work(rank, time)
            elif code == _INJ_START:
                self._push(
                    time + data[1], PRIO_INJECTION_END, rank, _INJ_END, (data[0], time)
                )
            else:
                raise SimulationError(f"unknown event code {code}")
        if self.finished < self.P:
            raise DeadlockError(self._deadlock_report())
        return Trace(
            intervals=self.intervals,
            rank_domain=list(self.dom_of),
            steps=self.steps,
            config=self.config.echo(),
            finish_times=self.finish,
        )

    # -- phase machinery --------------------------------------------------

    def _begin_phase(self, rank: int, now: float) -> None:
        duration = self.injections.get((rank, self.step[rank]))
        if duration is not None:
            self._push(
                now, PRIO_INJECTION_START, rank, _INJ_START,
                (self.step[rank], duration),
            )
        else:
            self._start_work(rank, now)

    def _start_work(self, rank: int, now: float) -> None:
        k = self.step[rank]
        self.compute_start[rank] = now
        delays = self.delays[rank]
        delay = float(delays[k]) if delays is not None else 0.0
        factors = self.factors[rank]
        factor = float(factors[k]) if factors is not None else 1.0
        if self.memory_bound:
            volume = self.base_volume * factor
            if delay > 0.0:
                self._push(
                    now + delay, PRIO_INJECTION_END, rank, _WORK_START, (k, volume)
                )
            else:
                self._join_domain(rank, now, volume)
        else:
            duration = self.base_duration * factor + delay
            self._push(now + duration, PRIO_COMPUTE_DONE, rank, _CORE_DONE, k)

    def _join_domain(self, rank: int, now: float, volume: float) -> None:
        dom = self.domains[self.dom_of[rank]]
        dom.join(rank, self.threads[rank], volume, now)
        self._reschedule(dom, now)

    def _reschedule(self, dom: DomainDrainState, now: float) -> None:
        # bump first so this push supersedes any earlier one for the domain
        dom.generation += 1
        nxt = dom.next_completion()
        if nxt is not None:
            when, rank = nxt
            self._push(
                max(when, now), PRIO_COMPUTE_DONE, rank, _DOM_DONE,
                (dom.index, dom.generation),
            )

    def _finish_compute(self, rank: int, now: float) -> None:
        k = self.step[rank]
        self.intervals[rank].append((COMPUTE, k, self.compute_start[rank], now))
        self.post_time[rank] = now
        self.posted_step[rank] = k
        waiters = self.waiters_on_post[rank]
        if waiters:
            still = []
            for watcher, want in waiters:
                if want <= k:
                    self._request_done(watcher, now)
                else:
                    still.append((watcher, want))
            self.waiters_on_post[rank] = still
        if not self.comm_enabled:
            self._advance_step(rank, now)
            return
        self.wait_start[rank] = now
        self.pending[rank] = 0
        for edge in self.plan.out_edges[rank]:
            self._post_send(edge, now, k)
        for edge in self.plan.in_edges[rank]:
            self._post_recv(edge, now, k)
        for q in self.plan.chain_deps[rank]:
            if self.posted_step[q] < k:
                self.pending[rank] += 1
                self.waiters_on_post[q].append((rank, k))
        if self.pending[rank] == 0:
            self._release(rank, now)

    def _post_send(self, edge, now: float, k: int) -> None:
        if self.rendezvous:
            self.pending[edge.src] += 1  # rendezvous blocks the sender too
            posted = edge.recv_posted
            if posted is not None and posted[0] == k:
                edge.recv_posted = None
                self._transfer(edge, k, now)
            else:
                edge.sends.append((k, now))
        else:
            avail = now + self.cost
            self._charge(edge, now, avail)
            if self.message_log is not None:
                self.message_log.append((edge.src, edge.dst, k, now, avail))
            posted = edge.recv_posted
            if posted is not None and posted[0] == k:
                edge.recv_posted = None
                self._push(
                    avail, PRIO_REQUEST_COMPLETE, edge.dst, _REQ_DONE,
                    (edge, k, False),
                )
            else:
                edge.sends.append((k, avail))

    def _post_recv(self, edge, now: float, k: int) -> None:
        self.pending[edge.dst] += 1
        if edge.sends and edge.sends[0][0] == k:
            _sk, stime = edge.sends.popleft()
            if self.rendezvous:
                self._transfer(edge, k, now)  # sender posted at stime <= now
            else:
                done = stime if stime > now else now
                self._push(
                    done, PRIO_REQUEST_COMPLETE, edge.dst, _REQ_DONE,
                    (edge, k, False),
                )
        else:
            if edge.recv_posted is not None:
                raise SimulationError(
                    f"rank {edge.dst} double-posted receive from {edge.src}"
                )
            edge.recv_posted = (k, now)

    def _transfer(self, edge, k: int, start: float) -> None:
        """Rendezvous wire time; completes send and receive together."""
        done = start + self.cost
        self._charge(edge, start, done)
        if self.message_log is not None:
            self.message_log.append((edge.src, edge.dst, k, start, done))
        self._push(done, PRIO_REQUEST_COMPLETE, edge.dst, _REQ_DONE, (edge, k, True))

    def _charge(self, edge, start: float, end: float) -> None:
        """Intranode bandwidth demand gamma*bytes on both endpoint domains."""
        if self.gamma <= 0.0 or self.msg_bytes <= 0 or end <= start:
            return
        if self.node_of[edge.src] != self.node_of[edge.dst]:
            return
        doms = (self.dom_of[edge.src], self.dom_of[edge.dst])
        rate = self.gamma * self.msg_bytes / (end - start)
        self._push(start, PRIO_MESSAGE_READY, edge.dst, _DEMAND, (doms, rate))
        self._push(end, PRIO_REQUEST_COMPLETE, edge.dst, _DEMAND, (doms, -rate))

    def _request_done(self, rank: int, now: float) -> None:
        self.pending[rank] -= 1
        if self.pending[rank] == 0:
            self._release(rank, now)

    def _release(self, rank: int, now: float) -> None:
        self.intervals[rank].append((WAIT, self.step[rank], self.wait_start[rank], now))
        self._advance_step(rank, now)

    def _advance_step(self, rank: int, now: float) -> None:
        self.step[rank] += 1
        if self.step[rank] == self.steps:
            self.finish[rank] = now
            self.finished += 1
        else:
            self._begin_phase(rank, now)

    def _deadlock_report(self) -> str:
        lines = ["simulation stalled before all ranks finished:"]
        for r in range(self.P):
            if self.step[r] >= self.steps:
                continue
            unmet = [
                q for q in self.plan.chain_deps[r]
                if any(w == r for w, _ in self.waiters_on_post[q])
            ]
            lines.append(
                f"  rank {r}: step {self.step[r]}, "
                f"{self.pending[r]} open requests, "
                f"unposted gating ranks {unmet or 'none'}"
            )
        return "\n".join(lines)


def run(config) -> Trace:
    """Simulate one configuration to completion; raises on deadlock."""
    return _Engine(config).run()
