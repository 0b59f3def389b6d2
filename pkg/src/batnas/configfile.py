"""Flat key-value config files.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines are ignored. Keys are validated against a schema by the caller;
unknown keys are always an error (fail fast, no silent typos).
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse flat key-value text into an ordered dict of raw strings."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv_text(text, source=str(path))


def format_kv(values: dict[str, object]) -> str:
    """Serialize a mapping back to the flat key-value format."""
    lines = [f"{key} = {value}" for key, value in values.items()]
    return "\n".join(lines) + "\n"


def reject_unknown_keys(values: dict[str, str], known: set[str], source: str) -> None:
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{source}: unknown config keys: {', '.join(unknown)}")


def coerce_int(values: dict[str, str], key: str, source: str) -> int:
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigError(f"{source}: key {key!r} must be an integer, got {values[key]!r}") from exc


def coerce_float(values: dict[str, str], key: str, source: str) -> float:
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{source}: key {key!r} must be a number, got {values[key]!r}") from exc


def coerce_bool(values: dict[str, str], key: str, source: str) -> bool:
    text = values[key].lower()
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ConfigError(f"{source}: key {key!r} must be true/false, got {values[key]!r}")
