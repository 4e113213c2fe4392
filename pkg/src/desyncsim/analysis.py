"""Trace analysis: wavefronts, slope fits, idle-wave edges, activity stats.

Works purely on interval records, so imported traces analyze exactly like
fresh ones.  Wave velocities are reported as fitted slopes in ranks per
second of rank-versus-time regressions, matching how propagation speed is
defined for the model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fileformat import ConfigError
from .trace import COMPUTE, IDLE_INJECTED, WAIT, Trace

__all__ = [
    "DEVELOPED_WINDOW_FRACTION",
    "EDGE_ATTRIBUTION_FACTOR",
    "MIN_SEGMENT_RANKS",
    "WavefrontProfile",
    "SlopeFit",
    "EdgeScan",
    "wavefront",
    "fit_slopes",
    "WavefrontScan",
    "settled_step",
    "wavefront_slopes",
    "edge_velocity",
    "activity_stats",
    "developed_window",
    "developed_steps",
    "iteration_breakdown",
    "desync_metric",
    "desync_samples",
    "build_report",
]

DEVELOPED_WINDOW_FRACTION = 0.2  # final share of steps treated as developed
EDGE_ATTRIBUTION_FACTOR = 3.0  # wait counts as wave-caused above this x median
MIN_SEGMENT_RANKS = 3  # shorter segments are dropped from slope fits


@dataclass(frozen=True)
class WavefrontProfile:
    """Completion time of one step across ranks."""

    step: int
    times: np.ndarray

    @property
    def amplitude(self) -> float:
        return float(np.max(self.times) - np.min(self.times))


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares rank-on-time fit over one monotonic stretch."""

    ranks: tuple
    slope: float  # ranks per second
    r_value: float
    points: int


@dataclass(frozen=True)
class EdgeScan:
    """Idle-wave edge attribution and per-branch velocity fits."""

    silent_wait: float
    threshold: float
    attributed: int
    extent_up: int
    extent_down: int
    leading_up: SlopeFit | None
    leading_down: SlopeFit | None
    trailing_up: SlopeFit | None
    trailing_down: SlopeFit | None
    diagnostics: tuple


def wavefront(trace: Trace, step: int) -> WavefrontProfile:
    """Per-rank completion time of ``step``; errors if any rank lacks it."""
    if not 0 <= step < trace.steps:
        raise ValueError(f"step {step} outside 0..{trace.steps - 1}")
    times = trace.compute_end_matrix()[:, step]
    missing = np.flatnonzero(np.isnan(times))
    if missing.size:
        raise ValueError(
            f"rank {int(missing[0])} never completed step {step}"
        )
    return WavefrontProfile(step=step, times=times.copy())


def _fit(x: np.ndarray, y: np.ndarray) -> tuple:
    """Least-squares slope of y on x plus the correlation coefficient."""
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    sxy = float(xm @ ym)
    if sxx == 0.0:
        return None
    slope = sxy / sxx
    r = sxy / math.sqrt(sxx * syy) if syy > 0.0 else 1.0
    return slope, r


def fit_slopes(
    profile: WavefrontProfile, min_ranks: int = MIN_SEGMENT_RANKS
) -> list:
    """Split the profile at monotonicity changes and fit each stretch.

    Single-rank jitter (a sign flip that immediately reverts) does not end
    a segment; stretches shorter than ``min_ranks`` are dropped with a
    warning.  Slopes are ranks per second.
    """
    times = np.asarray(profile.times, dtype=float)
    n = times.size
    if n < 2:
        return []
    signs = np.sign(np.diff(times))
    # zero diffs inherit the neighboring trend so plateaus do not split
    last = 0.0
    for i in range(signs.size):
        if signs[i] == 0.0:
            signs[i] = last
        else:
            last = signs[i]
    nonzero = signs[signs != 0.0]
    if nonzero.size == 0:
        warnings.warn("flat profile: no slope to fit")
        return []
    first = nonzero[0]
    for i in range(signs.size):
        if signs[i] == 0.0:
            signs[i] = first
        else:
            break

    breaks = [0]
    current = signs[0]
    i = 1
    while i < signs.size:
        if signs[i] != current:
            if i + 1 < signs.size and signs[i + 1] == current:
                signs[i] = current  # one-rank hysteresis
            else:
                breaks.append(i)
                current = signs[i]
        i += 1
    breaks.append(signs.size)

    fits = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        lo, hi = a, b  # ranks lo..hi inclusive (diffs a..b-1)
        count = hi - lo + 1
        if count < min_ranks:
            warnings.warn(
                f"dropping segment ranks {lo}..{hi}: fewer than {min_ranks} ranks"
            )
            continue
        x = times[lo : hi + 1]
        y = np.arange(lo, hi + 1, dtype=float)
        fit = _fit(x, y)
        if fit is None:
            warnings.warn(f"dropping segment ranks {lo}..{hi}: zero time spread")
            continue
        fits.append(SlopeFit(ranks=(lo, hi), slope=fit[0], r_value=fit[1], points=count))
    return fits


@dataclass(frozen=True)
class WavefrontScan:
    """Branch fits of a settled wavefront profile."""

    step: int
    fits: tuple  # SlopeFit per monotonic branch, longest time extent first


def settled_step(trace: Trace, margin: int = 2, gap: int = 8) -> int:
    """Step at which the traveling idle wave has just finished depositing.

    The profile minimum marks the front of the wave.  While the wave lives
    the front advances every few steps (pauses at domain boundaries are
    brief); after it dies the minimum's position only creeps occasionally
    as the left-behind skew erodes.  The front's last advance before a
    quiet stretch longer than ``gap`` steps marks the death of the wave.
    Returns that step plus ``margin`` so the final deposit is complete;
    falls back to the last step when the front never goes quiet.
    """
    m = trace.compute_end_matrix()
    mins = np.nanargmin(m, axis=0).astype(int)
    p = trace.processes
    last = trace.steps - 1
    if np.all(mins == mins[0]):
        return last
    half = p // 2
    # net ring displacement of the minimum from its starting position
    hops = (np.diff(mins) + half) % p - half
    disp = np.concatenate([[0], np.cumsum(hops)])
    sign = 1.0 if disp[np.argmax(np.abs(disp))] >= 0 else -1.0
    frontier = np.maximum.accumulate(sign * disp)
    events = np.flatnonzero(np.diff(frontier) > 0) + 1
    if events.size == 0:
        return last
    gaps = np.diff(np.concatenate([events, [last + gap + 1]]))
    quiet = np.flatnonzero(gaps > gap)
    settled = int(events[quiet[0]]) if quiet.size else last
    return min(settled + margin, last)


def _trim_shoulders(seg: np.ndarray, trim: float) -> tuple:
    """Indices [a, b) of ``seg`` with tied end plateaus removed.

    Domain-synchronized blocks finish in exact lockstep, so the plateaus
    worth dropping are runs of (numerically) tied values at either end.
    The whole tied run goes: keeping a member would put the cliff between
    the block and the ramp into the fit.  Lone end points stay.
    """
    span = float(seg.max() - seg.min())
    a, b = 0, seg.size
    if span <= 0.0:
        return a, b
    eps = trim * span
    lead = 1
    while lead < b and abs(seg[lead] - seg[0]) < eps:
        lead += 1
    if lead > 1:
        a = lead
    tail = 1
    while tail < b - a and abs(seg[b - 1 - tail] - seg[b - 1]) < eps:
        tail += 1
    if tail > 1:
        b -= tail
    return a, b


def wavefront_slopes(
    trace: Trace,
    step: int | None = None,
    min_ranks: int = MIN_SEGMENT_RANKS,
    trim: float = 1e-9,
) -> WavefrontScan:
    """Fit the monotonic branches of a settled wavefront profile.

    On periodic topologies the profile is rotated so its minimum sits at
    position zero, making both branches contiguous.  Each branch is fitted
    rank-on-time after trimming tied end plateaus (values closer together
    than ``trim`` times the branch's time span), so domain-synchronized
    blocks at the ends do not dilute the ramp.  Fits are ordered by time
    extent, widest first; ``ranks`` are original rank numbers.
    """
    if step is None:
        step = settled_step(trace)
    profile = wavefront(trace, step)
    t = np.asarray(profile.times, dtype=float)
    p = t.size
    periodic = trace.config.get("comm", {}).get("boundary") == "periodic"
    offset = int(np.argmin(t)) if periodic else 0
    rolled = np.roll(t, -offset)

    # on a ring the profile wraps back down to the minimum at position zero
    series = np.concatenate([rolled, rolled[:1]]) if periodic else rolled
    n = series.size
    if n < 2:
        return WavefrontScan(step=step, fits=())

    # split into monotonic runs; plateaus and one-rank flips extend the run
    signs = np.sign(np.diff(series))
    lastd = 0.0
    for i in range(signs.size):
        if signs[i] == 0.0:
            signs[i] = lastd
        else:
            lastd = signs[i]
    nonzero = signs[signs != 0.0]
    if nonzero.size == 0:
        return WavefrontScan(step=step, fits=())
    for i in range(signs.size):
        if signs[i] == 0.0:
            signs[i] = nonzero[0]
        else:
            break
    breaks = [0]
    direction = signs[0]
    i = 1
    while i < signs.size:
        if signs[i] != direction:
            if i + 1 < signs.size and signs[i + 1] == direction:
                signs[i] = direction
            else:
                breaks.append(i)
                direction = signs[i]
        i += 1
    breaks.append(int(signs.size))

    fits = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        seg = series[a : b + 1]
        lo, hi = _trim_shoulders(seg, trim)
        seg = seg[lo:hi]
        pos = np.arange(a + lo, a + hi, dtype=float)
        if seg.size < min_ranks:
            continue
        fit = _fit(seg, pos)
        if fit is None:
            continue
        first = int((a + lo + offset) % p)
        last = int((a + hi - 1 + offset) % p)
        fits.append(
            SlopeFit(
                ranks=(first, last),
                slope=fit[0],
                r_value=fit[1],
                points=int(seg.size),
            )
        )
    fits.sort(key=lambda f: abs(f.points / f.slope) if f.slope else 0.0, reverse=True)
    return WavefrontScan(step=step, fits=tuple(fits))


def _single_injection(trace: Trace) -> tuple:
    entries = trace.config.get("inject", [])
    if len(entries) != 1:
        raise ConfigError(
            f"edge attribution needs exactly one injection, trace has {len(entries)}"
        )
    return int(entries[0]["rank"]), int(entries[0]["step"])


def edge_velocity(
    trace: Trace,
    injection_rank: int | None = None,
    factor: float = EDGE_ATTRIBUTION_FACTOR,
) -> EdgeScan:
    """Attribute waits to the injected idle wave and fit both branch edges.

    A wait is attributed when it exceeds ``factor`` times the median wait
    of the whole trace.  Leading edges use the start of each rank's first
    attributed wait, trailing edges the end of its last; branches are split
    by signed rank offset from the injection.  Returns empty fits plus a
    diagnostic when nothing is attributable (fully decayed wave).
    """
    if injection_rank is None:
        injection_rank, _ = _single_injection(trace)
    periodic = trace.config.get("comm", {}).get("boundary") == "periodic"
    p = trace.processes

    durations = [
        end - start
        for _r, _d, kind, _s, start, end in trace.iter_records()
        if kind == WAIT
    ]
    if not durations:
        return EdgeScan(
            silent_wait=0.0, threshold=0.0, attributed=0,
            extent_up=0, extent_down=0,
            leading_up=None, leading_down=None,
            trailing_up=None, trailing_down=None,
            diagnostics=("trace has no wait intervals",),
        )
    silent = float(np.median(np.asarray(durations)))
    threshold = factor * silent

    leading: dict = {}
    trailing: dict = {}
    for rank in range(p):
        for kind, _step, start, end in trace.intervals[rank]:
            if kind != WAIT or not end - start > threshold:
                continue
            if rank not in leading:
                leading[rank] = start
            trailing[rank] = end

    def offset(rank: int) -> int:
        if periodic:
            return (rank - injection_rank + p // 2) % p - p // 2
        return rank - injection_rank

    ups = sorted((offset(r), r) for r in leading if offset(r) > 0)
    downs = sorted((-offset(r), r) for r in leading if offset(r) < 0)
    diagnostics = []
    if not leading:
        diagnostics.append(
            f"no wait exceeded {factor:g} x median ({silent:.3g} s): "
            "wave fully decayed or never formed"
        )

    def branch_fit(members: list, pick: dict, signed: int) -> SlopeFit | None:
        if len(members) < MIN_SEGMENT_RANKS:
            if members:
                diagnostics.append(
                    f"branch with {len(members)} attributed ranks is too short to fit"
                )
            return None
        x = np.array([pick[r] for _o, r in members])
        y = np.array([signed * o for o, r in members], dtype=float)
        fit = _fit(x, y)
        if fit is None:
            diagnostics.append("degenerate branch: all edge times equal")
            return None
        return SlopeFit(
            ranks=(int(signed * members[0][0]), int(signed * members[-1][0])),
            slope=fit[0],
            r_value=fit[1],
            points=len(members),
        )

    return EdgeScan(
        silent_wait=silent,
        threshold=threshold,
        attributed=len(leading),
        extent_up=max((o for o, _r in ups), default=0),
        extent_down=max((o for o, _r in downs), default=0),
        leading_up=branch_fit(ups, leading, +1),
        leading_down=branch_fit(downs, leading, -1),
        trailing_up=branch_fit(ups, trailing, +1),
        trailing_down=branch_fit(downs, trailing, -1),
        diagnostics=tuple(diagnostics),
    )


def activity_stats(trace: Trace, domain: int, window: tuple) -> dict:
    """Time-weighted mean/min/max of computing processes in one domain."""
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty window {window}")
    times = []
    deltas = []
    for rank in trace.ranks_of_domain(domain):
        for kind, _step, start, end in trace.intervals[rank]:
            if kind == COMPUTE:
                times.append(start)
                deltas.append(1)
                times.append(end)
                deltas.append(-1)
    if not times:
        raise ValueError(f"domain {domain} has no compute intervals")
    order = np.argsort(np.asarray(times), kind="stable")
    times = np.asarray(times)[order]
    deltas = np.asarray(deltas)[order]
    # collapse co-timed events so transient +1/-1 pairs do not fake extremes
    uniq, start_idx = np.unique(times, return_index=True)
    levels = np.cumsum(np.add.reduceat(deltas, start_idx))

    weighted = 0.0
    lo = math.inf
    hi = -math.inf
    prev_t = t0
    prev_level = 0
    idx = np.searchsorted(uniq, t0, side="right")
    if idx > 0:
        prev_level = int(levels[idx - 1])
    lo = min(lo, prev_level)
    hi = max(hi, prev_level)
    while idx < uniq.size and uniq[idx] < t1:
        t = float(uniq[idx])
        weighted += prev_level * (t - prev_t)
        prev_t = t
        prev_level = int(levels[idx])
        lo = min(lo, prev_level)
        hi = max(hi, prev_level)
        idx += 1
    weighted += prev_level * (t1 - prev_t)
    return {"mean": weighted / (t1 - t0), "min": int(lo), "max": int(hi)}


def developed_steps(trace: Trace, fraction: float = DEVELOPED_WINDOW_FRACTION):
    """Step range [k0, steps) covering the final ``fraction`` of the run."""
    k0 = min(trace.steps - 1, int(math.floor(trace.steps * (1.0 - fraction))))
    return max(0, k0), trace.steps


def developed_window(trace: Trace, fraction: float = DEVELOPED_WINDOW_FRACTION):
    """Time window of the developed (late-run) state, ragged tail excluded."""
    k0, _ = developed_steps(trace, fraction)
    m = trace.compute_end_matrix()
    t0 = float(np.min(m[:, k0]))
    t1 = float(np.min(m[:, -1]))
    if not t1 > t0:  # degenerate for tiny runs; fall back to the full span
        return 0.0, trace.makespan()
    return t0, t1


def iteration_breakdown(trace: Trace, steps_window: tuple) -> dict:
    """Mean per-step seconds spent computing, waiting, injected-idle."""
    k0, k1 = steps_window
    if not 0 <= k0 < k1 <= trace.steps:
        raise ValueError(f"bad step window {steps_window}")
    sums = {COMPUTE: 0.0, WAIT: 0.0, IDLE_INJECTED: 0.0}
    for rank in range(trace.processes):
        for kind, step, start, end in trace.intervals[rank]:
            if k0 <= step < k1:
                sums[kind] += end - start
    norm = trace.processes * (k1 - k0)
    return {
        "compute_s": sums[COMPUTE] / norm,
        "wait_s": sums[WAIT] / norm,
        "injected_s": sums[IDLE_INJECTED] / norm,
        "total_s": (sums[COMPUTE] + sums[WAIT] + sums[IDLE_INJECTED]) / norm,
        "steps": k1 - k0,
    }


def desync_metric(trace: Trace, step: int) -> float:
    """Wavefront amplitude (max-min completion time) at one step."""
    return wavefront(trace, step).amplitude


def desync_samples(trace: Trace, count: int = 60) -> list:
    """Evenly sampled (step, amplitude) pairs across the run."""
    m = trace.compute_end_matrix()
    amps = m.max(axis=0) - m.min(axis=0)
    steps = np.unique(np.linspace(0, trace.steps - 1, min(count, trace.steps)).astype(int))
    return [[int(k), float(amps[k])] for k in steps]


def build_report(trace: Trace) -> dict:
    """Deterministic JSON-ready summary of one trace."""
    k0, k1 = developed_steps(trace)
    window = developed_window(trace)
    first_len = max(1, min(trace.steps // 5, 200))
    report = {
        "processes": trace.processes,
        "steps": trace.steps,
        "domains": len(trace.domains),
        "makespan_s": trace.makespan(),
        "breakdown": {
            "first": iteration_breakdown(trace, (0, first_len)),
            "developed": iteration_breakdown(trace, (k0, k1)),
        },
        "desync": {
            "samples": desync_samples(trace),
            "final_amplitude_s": desync_metric(trace, trace.steps - 1),
        },
        "activity": {
            str(d): activity_stats(trace, d, window) for d in trace.domains
        },
    }
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        profile = wavefront(trace, trace.steps - 1)
        report["wavefront"] = {
            "step": profile.step,
            "amplitude_s": profile.amplitude,
            "segments": [
                {
                    "ranks": list(f.ranks),
                    "slope_ranks_per_s": f.slope,
                    "r": f.r_value,
                    "points": f.points,
                }
                for f in fit_slopes(profile)
            ],
        }
        if len(trace.config.get("inject", [])) == 1:
            scan = edge_velocity(trace)
            def fitdict(fit):
                if fit is None:
                    return None
                return {
                    "offsets": list(fit.ranks),
                    "slope_ranks_per_s": fit.slope,
                    "r": fit.r_value,
                    "points": fit.points,
                }
            report["edge"] = {
                "silent_wait_s": scan.silent_wait,
                "threshold_s": scan.threshold,
                "attributed_ranks": scan.attributed,
                "extent_up": scan.extent_up,
                "extent_down": scan.extent_down,
                "leading_up": fitdict(scan.leading_up),
                "leading_down": fitdict(scan.leading_down),
                "trailing_up": fitdict(scan.trailing_up),
                "trailing_down": fitdict(scan.trailing_down),
                "diagnostics": list(scan.diagnostics),
            }
        else:
            report["edge"] = None
    return report
