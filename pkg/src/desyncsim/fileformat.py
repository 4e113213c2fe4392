"""Parser for the flat sectioned key-value format used by configs and presets.

Syntax: ``[section]`` headers, ``key = value`` lines, ``#`` comments, and
indented continuation lines that extend the previous value (used for
bandwidth tables).  Keys are case-sensitive; duplicate sections or keys are
rejected so typos cannot silently shadow earlier settings.
"""

from __future__ import annotations

__all__ = ["ConfigError", "ParseError", "parse_sections", "format_sections"]


class ConfigError(ValueError):
    """Invalid configuration content (bad value, unknown key, inconsistency)."""


class ParseError(ConfigError):
    """Malformed config text; message carries source name and line number."""


def parse_sections(text: str, source: str = "<string>") -> dict[str, dict[str, str]]:
    """Parse config text into {section: {key: value}} preserving order."""
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    current_name = ""
    last_key: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line:
            last_key = None  # blank line ends a table block
            continue
        if line[0] in " \t":
            # continuation of the previous value (table rows etc.)
            if current is None or last_key is None:
                raise ParseError(f"{source}:{lineno}: continuation without a key")
            current[last_key] += "\n" + line.strip()
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"{source}:{lineno}: unterminated section header")
            name = line[1:-1].strip()
            if not name:
                raise ParseError(f"{source}:{lineno}: empty section name")
            if name in sections:
                raise ParseError(f"{source}:{lineno}: duplicate section [{name}]")
            current = {}
            current_name = name
            sections[name] = current
            last_key = None
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{lineno}: expected 'key = value'")
        if current is None:
            raise ParseError(f"{source}:{lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(f"{source}:{lineno}: empty key")
        if key in current:
            raise ParseError(
                f"{source}:{lineno}: duplicate key {key!r} in [{current_name}]"
            )
        current[key] = value.strip()
        last_key = key
    return sections


def format_sections(sections: dict[str, dict[str, str]]) -> str:
    """Inverse of parse_sections for simple (non-table) values."""
    chunks = []
    for name, body in sections.items():
        lines = [f"[{name}]"]
        for key, value in body.items():
            if "\n" in value:
                lines.append(f"{key} =")
                lines.extend(f"    {row}" for row in value.splitlines() if row)
            else:
                lines.append(f"{key} = {value}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"
