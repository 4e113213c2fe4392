"""Machine presets: committed bandwidth tables for the modeled clusters.

Each preset file describes one machine flavor (topology plus the measured
aggregate-bandwidth table of its contention domain for a given streaming
kernel).  Tables were digitized once from published saturation curves and
are committed as data so every run sees identical numbers.  Beyond the
saturation point the aggregate bandwidth is held exactly constant: the
drain model treats a saturated domain as a fixed-capacity resource, and
a few percent of digitization creep there would masquerade as physics.
"""

from __future__ import annotations

from importlib import resources

from .fileformat import ConfigError, parse_sections
from .model import BandwidthCurve, MachinePreset

__all__ = ["list_presets", "load_preset", "parse_bandwidth_table"]

_PRESET_PACKAGE = "desyncsim.presets"


def parse_bandwidth_table(text: str, source: str = "<table>") -> BandwidthCurve:
    """Parse 'n bytes_per_second' rows into a curve; rows must be 1..C in order."""
    values: list[float] = []
    for row in text.splitlines():
        row = row.strip()
        if not row:
            continue
        parts = row.split()
        if len(parts) != 2:
            raise ConfigError(f"{source}: table row {row!r} is not 'n bandwidth'")
        try:
            n = int(parts[0])
            b = float(parts[1])
        except ValueError as exc:
            raise ConfigError(f"{source}: bad table row {row!r}") from exc
        if n != len(values) + 1:
            raise ConfigError(f"{source}: table rows must run 1..C, got n={n}")
        values.append(b)
    if not values:
        raise ConfigError(f"{source}: bandwidth table is empty")
    try:
        return BandwidthCurve.from_table(values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _machine_from_section(body: dict[str, str], source: str) -> MachinePreset:
    required = {"name", "cores_per_domain", "domains_per_node", "bandwidth_table"}
    unknown = set(body) - required
    if unknown:
        raise ConfigError(f"{source}: unknown machine keys {sorted(unknown)}")
    missing = required - set(body)
    if missing:
        raise ConfigError(f"{source}: missing machine keys {sorted(missing)}")
    curve = parse_bandwidth_table(body["bandwidth_table"], source)
    try:
        return MachinePreset(
            name=body["name"],
            cores_per_domain=int(body["cores_per_domain"]),
            domains_per_node=int(body["domains_per_node"]),
            curve=curve,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def list_presets() -> tuple[str, ...]:
    """Names of all committed machine presets."""
    names = []
    for entry in resources.files(_PRESET_PACKAGE).iterdir():
        if entry.name.endswith(".cfg"):
            names.append(entry.name[: -len(".cfg")])
    return tuple(sorted(names))


def load_preset(name: str) -> MachinePreset:
    """Load one committed preset by name."""
    entry = resources.files(_PRESET_PACKAGE) / f"{name}.cfg"
    try:
        text = entry.read_text()
    except (FileNotFoundError, OSError) as exc:
        raise ConfigError(
            f"unknown machine preset {name!r}; available: {', '.join(list_presets())}"
        ) from exc
    sections = parse_sections(text, source=f"preset {name}")
    if set(sections) != {"machine"}:
        raise ConfigError(f"preset {name}: expected a single [machine] section")
    preset = _machine_from_section(sections["machine"], f"preset {name}")
    if preset.name != name:
        raise ConfigError(f"preset file {name}.cfg declares name {preset.name!r}")
    return preset
