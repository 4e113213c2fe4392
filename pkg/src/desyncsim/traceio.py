"""Trace export and import: JSONL and CSV with embedded config echo.

One record per interval with fields rank, domain, kind, step, start_s,
end_s, sorted by (rank, start).  Times carry 9 significant digits, which
makes the first export a fixed point: import followed by re-export is
byte-identical.  The header embeds the resolved config, so an exported
trace is enough to re-run the exact same simulation.
"""

from __future__ import annotations

import json

from .fileformat import ConfigError
from .trace import KINDS, Trace

__all__ = ["export_trace", "import_trace", "trace_to_text", "trace_from_text"]

_SCHEMA = 1


def _record_line(rank: int, domain: int, kind: str, step: int,
                 start: float, end: float) -> str:
    return (
        f'{{"rank":{rank},"domain":{domain},"kind":"{kind}","step":{step},'
        f'"start_s":{start:.9g},"end_s":{end:.9g}}}'
    )


def trace_to_text(trace: Trace, fmt: str) -> str:
    """Serialize a trace; fmt is 'jsonl' or 'csv'."""
    if fmt not in ("jsonl", "csv"):
        raise ConfigError(f"unknown trace format {fmt!r}")
    config = json.dumps(trace.config, sort_keys=True, separators=(",", ":"))
    domains = json.dumps(trace.rank_domain, separators=(",", ":"))
    lines = []
    if fmt == "jsonl":
        lines.append(
            f'{{"type":"header","schema":{_SCHEMA},"steps":{trace.steps},'
            f'"rank_domain":{domains},"config":{config}}}'
        )
        for rank, domain, kind, step, start, end in trace.iter_records():
            lines.append(_record_line(rank, domain, kind, step, start, end))
    else:
        lines.append(f"# desyncsim-trace schema={_SCHEMA} steps={trace.steps}")
        lines.append(f"# rank_domain={domains}")
        lines.append(f"# config={config}")
        lines.append("rank,domain,kind,step,start_s,end_s")
        for rank, domain, kind, step, start, end in trace.iter_records():
            lines.append(f"{rank},{domain},{kind},{step},{start:.9g},{end:.9g}")
    return "\n".join(lines) + "\n"


def _intervals_from_records(records: list, processes: int) -> list:
    intervals: list = [[] for _ in range(processes)]
    last_start = [-1.0] * processes
    for rank, _domain, kind, step, start, end in records:
        if kind not in KINDS:
            raise ConfigError(f"unknown interval kind {kind!r}")
        if end < start:
            raise ConfigError(f"negative interval on rank {rank} at {start}")
        if start < last_start[rank]:
            raise ConfigError(f"records of rank {rank} are not sorted by start")
        last_start[rank] = start
        intervals[rank].append((kind, step, start, end))
    return intervals


def trace_from_text(text: str, fmt: str) -> Trace:
    """Parse a serialized trace back into a Trace."""
    if fmt not in ("jsonl", "csv"):
        raise ConfigError(f"unknown trace format {fmt!r}")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty trace file")
    records = []
    if fmt == "jsonl":
        header = json.loads(lines[0])
        if header.get("type") != "header":
            raise ConfigError("trace file lacks the header line")
        steps = int(header["steps"])
        rank_domain = [int(d) for d in header["rank_domain"]]
        config = header["config"]
        for ln in lines[1:]:
            rec = json.loads(ln)
            records.append(
                (
                    int(rec["rank"]), int(rec["domain"]), rec["kind"],
                    int(rec["step"]), float(rec["start_s"]), float(rec["end_s"]),
                )
            )
    else:
        meta = {}
        body_at = 0
        for idx, ln in enumerate(lines):
            if not ln.startswith("#"):
                body_at = idx
                break
            content = ln.lstrip("#").strip()
            if content.startswith("desyncsim-trace"):
                for part in content.split():
                    key, _, value = part.partition("=")
                    if key == "steps":
                        meta["steps"] = int(value)
            elif content.startswith("rank_domain="):
                meta["rank_domain"] = json.loads(content[len("rank_domain="):])
            elif content.startswith("config="):
                meta["config"] = json.loads(content[len("config="):])
        if "config" not in meta or "rank_domain" not in meta or "steps" not in meta:
            raise ConfigError("csv trace lacks header metadata")
        steps = meta["steps"]
        rank_domain = [int(d) for d in meta["rank_domain"]]
        config = meta["config"]
        header_row = lines[body_at]
        if header_row.split(",") != ["rank", "domain", "kind", "step", "start_s", "end_s"]:
            raise ConfigError("csv trace has an unexpected column header")
        for ln in lines[body_at + 1 :]:
            rank, domain, kind, step, start, end = ln.split(",")
            records.append(
                (int(rank), int(domain), kind, int(step), float(start), float(end))
            )
    processes = len(rank_domain)
    intervals = _intervals_from_records(records, processes)
    finish = [items[-1][3] if items else 0.0 for items in intervals]
    return Trace(
        intervals=intervals,
        rank_domain=rank_domain,
        steps=steps,
        config=config,
        finish_times=finish,
    )


def _format_for(path, fmt: str | None) -> str:
    if fmt is not None:
        return fmt
    name = str(path)
    if name.endswith(".csv"):
        return "csv"
    return "jsonl"


def export_trace(trace: Trace, path, fmt: str | None = None) -> None:
    """Write a trace to ``path``; format from ``fmt`` or the file suffix."""
    resolved = _format_for(path, fmt)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(trace_to_text(trace, resolved))


def import_trace(path, fmt: str | None = None) -> Trace:
    """Read a trace written by export_trace."""
    resolved = _format_for(path, fmt)
    with open(path, "r", encoding="utf-8") as handle:
        return trace_from_text(handle.read(), resolved)
