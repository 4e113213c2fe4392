"""Run configuration: machine, placement, workload, exchange, perturbations.

Configs come from flat sectioned key-value files or from the equivalent
nested mapping.  Loading fully resolves presets, placement, sigma, and
injection durations; the resolved form is what ``SimConfig.echo()`` emits,
and feeding an echo back through ``config_from_mapping`` reproduces the
exact same simulation (this is how exported traces stay re-runnable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fileformat import ConfigError, parse_sections
from .machines import load_preset, parse_bandwidth_table
from .model import (
    DEFAULT_EAGER_THRESHOLD,
    BandwidthCurve,
    CommPattern,
    ContentionDomain,
    MachinePreset,
    ProcessSpec,
    WorkloadSpec,
    bandwidth_at,
    exec_time,
)
from .perturb import NOISE_KINDS, Injection, NoiseModel, injection_map

__all__ = [
    "SimConfig",
    "load_config",
    "config_from_text",
    "config_from_mapping",
    "nominal_phase_time",
]

_SECTIONS = ("machine", "processes", "workload", "comm", "noise", "output")
_OUTPUT_FORMATS = ("jsonl", "csv")


@dataclass(frozen=True)
class SimConfig:
    """One fully resolved simulation setup."""

    machine: MachinePreset
    domains: tuple
    process_specs: tuple
    threads: int
    workload: WorkloadSpec
    pattern: CommPattern
    injections: tuple
    noise: NoiseModel
    output_format: str = "jsonl"

    @property
    def processes(self) -> int:
        return len(self.process_specs)

    def ranks_of_domain(self, domain: int) -> list:
        return [p.rank for p in self.process_specs if p.domain == domain]

    def echo(self) -> dict:
        """Resolved canonical mapping; a fixed point of config_from_mapping."""
        table = [
            [n, bandwidth_at(self.machine.curve, n)]
            for n in range(1, self.machine.cores_per_domain + 1)
        ]
        return {
            "machine": {
                "name": self.machine.name,
                "cores_per_domain": self.machine.cores_per_domain,
                "domains_per_node": self.machine.domains_per_node,
                "domains": len(self.domains),
                "bandwidth_table": table,
            },
            "processes": {"count": self.processes, "threads": self.threads},
            "workload": {
                "kind": self.workload.kind,
                "steps": self.workload.steps,
                **(
                    {"volume_per_step": self.workload.volume_per_step}
                    if self.workload.kind == "memory_bound"
                    else {"duration_per_step": self.workload.duration_per_step}
                ),
            },
            "comm": {
                "distances_up": list(self.pattern.distances_up),
                "distances_down": list(self.pattern.distances_down),
                "boundary": self.pattern.boundary,
                "message_bytes": self.pattern.message_bytes,
                "eager_threshold_bytes": self.pattern.eager_threshold,
                "latency_s": self.pattern.latency,
                "inverse_bandwidth_s_per_byte": self.pattern.inverse_bandwidth,
                "membw_charge": self.pattern.membw_charge,
                "bus_bandwidth_bytes_per_s": self.pattern.bus_bandwidth,
                "sigma": self.pattern.resolved_sigma(),
            },
            "noise": {
                "kind": self.noise.kind,
                "magnitude": self.noise.magnitude,
                "seed": self.noise.seed,
                "onset_step": self.noise.onset_step,
                "duration_steps": self.noise.duration_steps,
            },
            "inject": [
                {"rank": i.rank, "step": i.step, "duration_s": i.duration}
                for i in self.injections
            ],
            "output": {"format": self.output_format},
        }


def nominal_phase_time(config: SimConfig, rank: int = 0) -> float:
    """Unperturbed lockstep work-phase duration for one rank."""
    wl = config.workload
    if wl.kind == "core_bound":
        return wl.duration_per_step
    domain = config.process_specs[rank].domain
    occupants = sum(1 for p in config.process_specs if p.domain == domain)
    active = occupants * config.threads
    # exec_time is per active core; a process finishes t cores' worth of it.
    return exec_time(wl.volume_per_step, active, config.machine.curve) / config.threads


# -- coercion helpers ------------------------------------------------------


def _reject_unknown(body: dict, allowed: set, section: str, source: str) -> None:
    unknown = set(body) - allowed
    if unknown:
        raise ConfigError(
            f"{source}: unknown keys {sorted(unknown)} in [{section}]"
        )


def _as_int(value, where: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected an integer, got a boolean")
    if isinstance(value, int):
        return value
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected an integer, got {value!r}") from None
    if f != int(f):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return int(f)


def _as_float(value, where: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _as_int_list(value, where: str) -> list:
    if isinstance(value, str):
        items = [s for s in value.replace(",", " ").split() if s]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        raise ConfigError(f"{where}: expected a list of integers, got {value!r}")
    return [_as_int(v, where) for v in items]


def _as_choice(value, choices, where: str) -> str:
    if value not in choices:
        raise ConfigError(f"{where}: expected one of {choices}, got {value!r}")
    return value


# -- section resolution ----------------------------------------------------


def _resolve_machine(body: dict, source: str) -> tuple:
    """Returns (MachinePreset, explicit_domain_count or None)."""
    body = dict(body)
    domains = body.pop("domains", None)
    if domains is not None:
        domains = _as_int(domains, f"{source}: machine.domains")
        if domains < 1:
            raise ConfigError(f"{source}: machine.domains must be >= 1")
    if "preset" in body:
        _reject_unknown(body, {"preset"}, "machine", source)
        return load_preset(body["preset"]), domains
    allowed = {"name", "cores_per_domain", "domains_per_node", "bandwidth_table",
               "b1_bytes_per_s", "bsat_bytes_per_s"}
    _reject_unknown(body, allowed, "machine", source)
    for key in ("cores_per_domain",):
        if key not in body:
            raise ConfigError(f"{source}: inline machine needs {key}")
    cores = _as_int(body["cores_per_domain"], f"{source}: cores_per_domain")
    per_node = _as_int(body.get("domains_per_node", 1), f"{source}: domains_per_node")
    if "bandwidth_table" in body:
        if "b1_bytes_per_s" in body or "bsat_bytes_per_s" in body:
            raise ConfigError(
                f"{source}: machine takes a table or analytic b1/bsat, not both"
            )
        raw = body["bandwidth_table"]
        if isinstance(raw, str):
            curve = parse_bandwidth_table(raw, source)
        else:
            rows = sorted((_as_int(n, source), _as_float(b, source)) for n, b in raw)
            if [n for n, _ in rows] != list(range(1, len(rows) + 1)):
                raise ConfigError(f"{source}: bandwidth_table rows must run 1..C")
            curve = BandwidthCurve.from_table([b for _, b in rows])
    else:
        if "b1_bytes_per_s" not in body or "bsat_bytes_per_s" not in body:
            raise ConfigError(
                f"{source}: inline machine needs bandwidth_table or b1/bsat"
            )
        curve = BandwidthCurve.analytic(
            _as_float(body["b1_bytes_per_s"], source),
            _as_float(body["bsat_bytes_per_s"], source),
        )
    try:
        preset = MachinePreset(
            name=str(body.get("name", "inline")),
            cores_per_domain=cores,
            domains_per_node=per_node,
            curve=curve,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return preset, domains


def _resolve_placement(
    body: dict, machine: MachinePreset, explicit_domains, source: str
) -> tuple:
    """Returns (process_specs, domains, threads)."""
    _reject_unknown(body, {"count", "per_domain", "threads"}, "processes", source)
    threads = _as_int(body.get("threads", 1), f"{source}: processes.threads")
    if threads < 1:
        raise ConfigError(f"{source}: processes.threads must be >= 1")
    cores = machine.cores_per_domain
    if threads > cores:
        raise ConfigError(
            f"{source}: {threads} threads exceed the {cores}-core domain"
        )
    capacity = cores // threads  # processes that fit one domain
    has_count = "count" in body
    has_per_domain = "per_domain" in body
    if has_count == has_per_domain:
        raise ConfigError(
            f"{source}: give exactly one of processes.count or processes.per_domain"
        )
    if has_per_domain:
        per_domain = _as_int(body["per_domain"], f"{source}: processes.per_domain")
        if per_domain < 1:
            raise ConfigError(f"{source}: processes.per_domain must be >= 1")
        if per_domain > capacity:
            raise ConfigError(
                f"{source}: oversubscribed domain: {per_domain} processes x "
                f"{threads} threads need {per_domain * threads} cores but the "
                f"domain has {cores}"
            )
        if explicit_domains is None:
            raise ConfigError(
                f"{source}: processes.per_domain needs machine.domains"
            )
        n_domains = explicit_domains
        count = per_domain * n_domains
        dom_of = [r // per_domain for r in range(count)]
    else:
        count = _as_int(body["count"], f"{source}: processes.count")
        if count < 1:
            raise ConfigError(f"{source}: processes.count must be >= 1")
        needed = math.ceil(count / capacity)
        n_domains = explicit_domains if explicit_domains is not None else needed
        if count > capacity * n_domains:
            raise ConfigError(
                f"{source}: oversubscribed machine: {count} processes x "
                f"{threads} threads need {count * threads} cores but "
                f"{n_domains} domains provide {n_domains * cores}"
            )
        dom_of = [r // capacity for r in range(count)]
    domains = tuple(
        ContentionDomain(
            index=d,
            cores=cores,
            curve=machine.curve,
            node=d // machine.domains_per_node,
        )
        for d in range(n_domains)
    )
    specs = tuple(
        ProcessSpec(rank=r, domain=dom_of[r], threads=threads)
        for r in range(count)
    )
    return specs, domains, threads


def _resolve_workload(body: dict, processes: int, source: str) -> WorkloadSpec:
    allowed = {
        "kind", "steps", "volume_per_step", "volume_total_per_step",
        "duration_per_step",
    }
    _reject_unknown(body, allowed, "workload", source)
    if "kind" not in body or "steps" not in body:
        raise ConfigError(f"{source}: workload needs kind and steps")
    kind = _as_choice(
        body["kind"], ("memory_bound", "core_bound"), f"{source}: workload.kind"
    )
    if "volume_per_step" in body and "volume_total_per_step" in body:
        raise ConfigError(
            f"{source}: give volume_per_step or volume_total_per_step, not both"
        )
    volume = None
    if "volume_per_step" in body:
        volume = _as_float(body["volume_per_step"], f"{source}: volume_per_step")
    elif "volume_total_per_step" in body:
        # total across all ranks, split evenly
        volume = (
            _as_float(body["volume_total_per_step"], f"{source}: volume_total")
            / processes
        )
    try:
        return WorkloadSpec(
            kind=kind,
            steps=_as_int(body["steps"], f"{source}: workload.steps"),
            volume_per_step=volume,
            duration_per_step=(
                _as_float(body["duration_per_step"], f"{source}: duration_per_step")
                if "duration_per_step" in body
                else None
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _resolve_comm(body: dict, processes: int, source: str) -> CommPattern:
    allowed = {
        "distances_up", "distances_down", "boundary", "message_bytes",
        "eager_threshold_bytes", "latency_s", "bandwidth_bytes_per_s",
        "inverse_bandwidth_s_per_byte", "membw_charge",
        "bus_bandwidth_bytes_per_s", "sigma",
    }
    _reject_unknown(body, allowed, "comm", source)
    if "bandwidth_bytes_per_s" in body and "inverse_bandwidth_s_per_byte" in body:
        raise ConfigError(
            f"{source}: give bandwidth_bytes_per_s or its inverse, not both"
        )
    inverse = 0.0
    if "bandwidth_bytes_per_s" in body:
        beta = _as_float(body["bandwidth_bytes_per_s"], f"{source}: comm bandwidth")
        if not beta > 0.0:
            raise ConfigError(f"{source}: comm bandwidth must be positive")
        inverse = 1.0 / beta
    elif "inverse_bandwidth_s_per_byte" in body:
        inverse = _as_float(body["inverse_bandwidth_s_per_byte"], f"{source}: comm")
    sigma = body.get("sigma")
    if sigma is not None and sigma != "auto":
        sigma = _as_int(sigma, f"{source}: comm.sigma")
    else:
        sigma = None
    try:
        pattern = CommPattern(
            distances_up=tuple(
                _as_int_list(body.get("distances_up", []), f"{source}: distances_up")
            ),
            distances_down=tuple(
                _as_int_list(
                    body.get("distances_down", []), f"{source}: distances_down"
                )
            ),
            boundary=_as_choice(
                body.get("boundary", "periodic"), ("open", "periodic"),
                f"{source}: comm.boundary",
            ),
            message_bytes=_as_int(
                body.get("message_bytes", 0), f"{source}: message_bytes"
            ),
            eager_threshold=_as_int(
                body.get("eager_threshold_bytes", DEFAULT_EAGER_THRESHOLD),
                f"{source}: eager_threshold_bytes",
            ),
            latency=_as_float(body.get("latency_s", 0.0), f"{source}: latency_s"),
            inverse_bandwidth=inverse,
            membw_charge=_as_float(
                body.get("membw_charge", 0.0), f"{source}: membw_charge"
            ),
            bus_bandwidth=(
                None
                if body.get("bus_bandwidth_bytes_per_s") is None
                else _as_float(
                    body["bus_bandwidth_bytes_per_s"], f"{source}: bus bandwidth"
                )
            ),
            sigma=sigma,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for d in pattern.distances_up + pattern.distances_down:
        if d >= processes:
            raise ConfigError(
                f"{source}: neighbor distance {d} must be below the "
                f"process count {processes}"
            )
    return pattern


def _resolve_noise(body: dict, source: str) -> NoiseModel:
    _reject_unknown(
        body,
        {"kind", "magnitude", "seed", "onset_step", "duration_steps"},
        "noise",
        source,
    )
    duration = body.get("duration_steps")
    try:
        return NoiseModel(
            kind=_as_choice(
                body.get("kind", "off"), NOISE_KINDS, f"{source}: noise.kind"
            ),
            magnitude=_as_float(body.get("magnitude", 0.0), f"{source}: magnitude"),
            seed=_as_int(body.get("seed", 1), f"{source}: noise.seed"),
            onset_step=_as_int(
                body.get("onset_step", 0), f"{source}: noise.onset_step"
            ),
            duration_steps=(
                None
                if duration is None
                else _as_int(duration, f"{source}: noise.duration_steps")
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _resolve_injections(
    entries: list, config: SimConfig, source: str
) -> tuple:
    injections = []
    for idx, body in enumerate(entries):
        where = f"{source}: inject entry {idx}"
        _reject_unknown(
            body, {"rank", "step", "duration_s", "duration_phases"}, "inject", where
        )
        if "rank" not in body or "step" not in body:
            raise ConfigError(f"{where}: needs rank and step")
        rank = _as_int(body["rank"], where)
        step = _as_int(body["step"], where)
        if not 0 <= rank < config.processes:
            raise ConfigError(f"{where}: rank {rank} outside 0..{config.processes - 1}")
        if not 0 <= step < config.workload.steps:
            raise ConfigError(
                f"{where}: step {step} outside 0..{config.workload.steps - 1}"
            )
        has_s = "duration_s" in body
        has_p = "duration_phases" in body
        if has_s == has_p:
            raise ConfigError(
                f"{where}: give exactly one of duration_s or duration_phases"
            )
        if has_s:
            duration = _as_float(body["duration_s"], where)
        else:
            duration = _as_float(body["duration_phases"], where) * nominal_phase_time(
                config, rank
            )
        try:
            injections.append(Injection(rank=rank, step=step, duration=duration))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    injection_map(injections)  # rejects overlapping (rank, step) pairs
    return tuple(injections)


# -- entry points -----------------------------------------------------------


def config_from_mapping(mapping: dict, source: str = "<mapping>") -> SimConfig:
    """Build and validate a SimConfig from the canonical nested mapping."""
    unknown = set(mapping) - set(_SECTIONS) - {"inject"}
    if unknown:
        raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")
    for required in ("machine", "processes", "workload"):
        if required not in mapping:
            raise ConfigError(f"{source}: missing [{required}] section")
    machine, explicit_domains = _resolve_machine(mapping["machine"], source)
    specs, domains, threads = _resolve_placement(
        mapping["processes"], machine, explicit_domains, source
    )
    workload = _resolve_workload(mapping["workload"], len(specs), source)
    pattern = _resolve_comm(mapping.get("comm", {}), len(specs), source)
    noise = _resolve_noise(mapping.get("noise", {}), source)
    out_body = mapping.get("output", {})
    _reject_unknown(out_body, {"format"}, "output", source)
    out_format = _as_choice(
        out_body.get("format", "jsonl"), _OUTPUT_FORMATS, f"{source}: output.format"
    )
    config = SimConfig(
        machine=machine,
        domains=domains,
        process_specs=specs,
        threads=threads,
        workload=workload,
        pattern=pattern,
        injections=(),
        noise=noise,
        output_format=out_format,
    )
    inject_entries = mapping.get("inject", [])
    if not isinstance(inject_entries, (list, tuple)):
        raise ConfigError(f"{source}: inject must be a list of entries")
    injections = _resolve_injections(list(inject_entries), config, source)
    if injections:
        config = SimConfig(
            machine=machine,
            domains=domains,
            process_specs=specs,
            threads=threads,
            workload=workload,
            pattern=pattern,
            injections=injections,
            noise=noise,
            output_format=out_format,
        )
    return config


def _sections_to_mapping(sections: dict, source: str) -> dict:
    """File sections to the nested mapping; [inject.N] become list entries."""
    mapping: dict = {}
    inject: list = []
    inject_names = []
    for name, body in sections.items():
        if name == "inject" or name.startswith("inject."):
            inject_names.append(name)
            inject.append(dict(body))
        elif name in _SECTIONS:
            mapping[name] = dict(body)
        else:
            raise ConfigError(f"{source}: unknown section [{name}]")
    if inject:
        mapping["inject"] = inject
    return mapping


def config_from_text(text: str, source: str = "<string>") -> SimConfig:
    sections = parse_sections(text, source)
    return config_from_mapping(_sections_to_mapping(sections, source), source)


def load_config(path) -> SimConfig:
    """Load and validate a config file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_text(text, source=str(path))
