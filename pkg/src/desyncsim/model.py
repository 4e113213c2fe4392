"""Closed-form performance model for bandwidth-saturated contention domains.

A contention domain is a group of cores sharing one memory interface (a
ccNUMA domain, typically a socket).  Aggregate memory bandwidth b(n) grows
with the number of active cores n until it saturates, so execution time of
a memory-bound phase depends on how many cores are drawing on the interface
at once.  The functions here are the static laws the simulator is built on:
phase execution time, idle-wave propagation velocity, and the saturation
point of a bandwidth curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "BandwidthCurve",
    "ContentionDomain",
    "ProcessSpec",
    "WorkloadSpec",
    "CommPattern",
    "MachinePreset",
    "bandwidth_at",
    "saturation_point",
    "exec_time",
    "velocity_from_times",
    "predicted_velocity",
    "chebfd_code_balance",
]

DEFAULT_EAGER_THRESHOLD = 262144  # bytes; typical MPI eager/rendezvous switch
DEFAULT_SATURATION_FRACTION = 0.95


@dataclass(frozen=True)
class BandwidthCurve:
    """Aggregate memory bandwidth versus number of active cores.

    Either a measured table ``b(1..C)`` in bytes/s (``cores`` is then the
    table length) or the analytic ramp ``min(n*b1, bsat)`` with no core
    bound.  Tables must be positive and non-decreasing.
    """

    table: tuple[float, ...] | None = None
    b1: float | None = None
    bsat: float | None = None

    def __post_init__(self) -> None:
        if (self.table is None) == (self.b1 is None and self.bsat is None):
            raise ValueError("curve needs either a table or analytic b1/bsat")
        if self.table is not None:
            if len(self.table) == 0:
                raise ValueError("bandwidth table is empty")
            prev = 0.0
            for n, b in enumerate(self.table, start=1):
                if not b > 0.0:
                    raise ValueError(f"bandwidth table entry n={n} must be positive")
                if b < prev:
                    raise ValueError(f"bandwidth table decreases at n={n}")
                prev = b
        else:
            if self.b1 is None or self.bsat is None:
                raise ValueError("analytic curve needs both b1 and bsat")
            if not (self.b1 > 0.0 and self.bsat > 0.0):
                raise ValueError("analytic curve parameters must be positive")
            if self.bsat < self.b1:
                raise ValueError("saturated bandwidth below single-core bandwidth")

    @classmethod
    def from_table(cls, values: "list[float] | tuple[float, ...]") -> "BandwidthCurve":
        return cls(table=tuple(float(v) for v in values))

    @classmethod
    def analytic(cls, b1: float, bsat: float) -> "BandwidthCurve":
        return cls(b1=float(b1), bsat=float(bsat))

    @property
    def cores(self) -> int | None:
        """Core count the curve is defined for; None for the analytic form."""
        return None if self.table is None else len(self.table)


def bandwidth_at(curve: BandwidthCurve, n: int) -> float:
    """Aggregate bandwidth in bytes/s with ``n`` active cores."""
    if n < 1:
        raise ValueError(f"active-core count must be >= 1, got {n}")
    if curve.table is not None:
        if n > len(curve.table):
            raise ValueError(
                f"active-core count {n} outside table range 1..{len(curve.table)}"
            )
        return curve.table[n - 1]
    return min(n * curve.b1, curve.bsat)


def saturation_point(
    curve: BandwidthCurve, fraction: float = DEFAULT_SATURATION_FRACTION
) -> int:
    """Smallest active-core count reaching ``fraction`` of full-curve bandwidth.

    For tables the reference is b(C); for the analytic form it is bsat and
    the result is the closed form ceil(fraction*bsat/b1).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if curve.table is not None:
        target = fraction * curve.table[-1]
        for n, b in enumerate(curve.table, start=1):
            if b >= target:
                return n
        return len(curve.table)  # unreachable: b(C) >= fraction*b(C)
    ratio = fraction * curve.bsat / curve.b1
    n = max(1, math.ceil(ratio - 1e-12))  # guard FP noise on exact multiples
    if n * curve.b1 < fraction * curve.bsat:
        n += 1
    return n


def exec_time(volume_bytes: float, active: int, curve: BandwidthCurve) -> float:
    """Duration of one memory-bound phase with ``active`` cores in lockstep.

    Each core drains volume_bytes through an equal share b(active)/active,
    so the phase takes active*volume_bytes/b(active) seconds.
    """
    if not volume_bytes > 0.0:
        raise ValueError(f"volume must be positive, got {volume_bytes}")
    return active * volume_bytes / bandwidth_at(curve, active)


def velocity_from_times(
    t_exec: float, t_comm: float, distance: int, sigma: int = 1
) -> float:
    """Idle-wave propagation velocity in ranks/s for a given phase period."""
    if distance < 1:
        raise ValueError(f"distance must be >= 1, got {distance}")
    if sigma < 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")
    period = t_exec + t_comm
    if period <= 0.0:
        raise ValueError("phase period must be positive")
    return sigma * distance / period


def predicted_velocity(
    active: int,
    volume_bytes: float,
    curve: BandwidthCurve,
    t_comm: float,
    distance: int,
    sigma: int = 1,
) -> float:
    """Idle-wave velocity in ranks/s: sigma*distance over the phase period."""
    if t_comm < 0.0:
        raise ValueError(f"communication time must be >= 0, got {t_comm}")
    return velocity_from_times(
        exec_time(volume_bytes, active, curve), t_comm, distance, sigma
    )


def chebfd_code_balance(block_size: float) -> float:
    """Code balance in byte/flop of the blocked Chebyshev filter kernel.

    Traffic per lattice site update is 260/block_size + 80 bytes against
    146 flops; block_size >= 1 (math.inf gives the in-cache limit 80/146).
    """
    if not block_size >= 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    return (260.0 / block_size + 80.0) / 146.0


@dataclass(frozen=True)
class ContentionDomain:
    """One shared-bandwidth core group and its position in the machine."""

    index: int
    cores: int
    curve: BandwidthCurve
    node: int


@dataclass(frozen=True)
class ProcessSpec:
    """Placement of one MPI rank: its domain and thread count."""

    rank: int
    domain: int
    threads: int = 1


@dataclass(frozen=True)
class WorkloadSpec:
    """Per-step work of the bulk-synchronous loop.

    memory_bound work is a byte volume drained through the domain interface;
    core_bound work is a fixed duration that ignores bandwidth entirely.
    """

    kind: str
    steps: int
    volume_per_step: float | None = None
    duration_per_step: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("memory_bound", "core_bound"):
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.kind == "memory_bound":
            if self.volume_per_step is None or not self.volume_per_step > 0.0:
                raise ValueError("memory_bound workload needs volume_per_step > 0")
            if self.duration_per_step is not None:
                raise ValueError("memory_bound workload takes no duration_per_step")
        else:
            if self.duration_per_step is None or not self.duration_per_step > 0.0:
                raise ValueError("core_bound workload needs duration_per_step > 0")
            if self.volume_per_step is not None:
                raise ValueError("core_bound workload takes no volume_per_step")


@dataclass(frozen=True)
class CommPattern:
    """Point-to-point exchange topology and cost of one bulk-sync step.

    Per up-distance d a rank sends to r+d and receives from r-d; per
    down-distance it sends to r-d and receives from r+d, so matching closes
    globally for any distance sets.  Messages below eager_threshold bytes
    use the eager protocol, larger ones rendezvous.  sigma=None resolves to
    2 for bidirectional rendezvous-style waits and 1 otherwise.

    Transfers normally pay the fixed Hockney cost.  With bus_bandwidth set,
    same-node rendezvous payloads instead drain through the destination
    domain's copy queue: concurrent copies share min(n/inverse_bandwidth,
    bus_bandwidth) equally, so a copy that runs alone finishes at the pipe
    rate while a synchronized burst is capacity-bound.  membw_charge scales
    how much of the running copy traffic is charged against the domain's
    compute bandwidth.
    """

    distances_up: tuple[int, ...] = ()
    distances_down: tuple[int, ...] = ()
    boundary: str = "periodic"
    message_bytes: int = 0
    eager_threshold: int = DEFAULT_EAGER_THRESHOLD
    latency: float = 0.0
    inverse_bandwidth: float = 0.0  # s/byte; 0 means free transfers
    membw_charge: float = 0.0  # gamma in [0, 1]
    bus_bandwidth: float | None = None  # aggregate same-node copy rate, bytes/s
    sigma: int | None = None

    def __post_init__(self) -> None:
        for name, dists in (("up", self.distances_up), ("down", self.distances_down)):
            for d in dists:
                if d < 1:
                    raise ValueError(f"{name} distance must be >= 1, got {d}")
            if len(set(dists)) != len(dists):
                raise ValueError(f"duplicate {name} distances {dists}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.message_bytes < 0:
            raise ValueError("message_bytes must be >= 0")
        if self.eager_threshold < 0:
            raise ValueError("eager_threshold must be >= 0")
        if self.latency < 0.0:
            raise ValueError("latency must be >= 0")
        if self.inverse_bandwidth < 0.0:
            raise ValueError("inverse_bandwidth must be >= 0")
        if not 0.0 <= self.membw_charge <= 1.0:
            raise ValueError("membw_charge must be in [0, 1]")
        if self.bus_bandwidth is not None and not self.bus_bandwidth > 0.0:
            raise ValueError("bus_bandwidth must be positive")
        if self.sigma is not None and self.sigma < 1:
            raise ValueError(f"sigma must be >= 1, got {self.sigma}")

    @property
    def enabled(self) -> bool:
        return bool(self.distances_up or self.distances_down)

    @property
    def rendezvous(self) -> bool:
        return self.message_bytes >= self.eager_threshold

    def resolved_sigma(self) -> int:
        if self.sigma is not None:
            return self.sigma
        bidirectional = bool(self.distances_up) and bool(self.distances_down)
        return 2 if (bidirectional and self.rendezvous) else 1

    def transfer_cost(self) -> float:
        """Latency/bandwidth cost of one message (Hockney form)."""
        return self.latency + self.message_bytes * self.inverse_bandwidth


@dataclass(frozen=True)
class MachinePreset:
    """Named machine description loadable from a preset file."""

    name: str
    cores_per_domain: int
    domains_per_node: int
    curve: BandwidthCurve = field(repr=False)

    def __post_init__(self) -> None:
        if self.cores_per_domain < 1:
            raise ValueError("cores_per_domain must be >= 1")
        if self.domains_per_node < 1:
            raise ValueError("domains_per_node must be >= 1")
        if self.curve.cores is not None and self.curve.cores != self.cores_per_domain:
            raise ValueError(
                f"bandwidth table covers {self.curve.cores} cores, "
                f"machine has {self.cores_per_domain} per domain"
            )
