"""Line-oriented ``key=value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError

RESERVED = ("command", "seed", "verbosity")


def parse_config_text(text: str, path="<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, value = stripped.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        if key in out:
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config_text(text, path)


@dataclass
class RunConfig:
    """Command name, global seed/verbosity and the command's parameters as text."""

    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    verbosity: str = "info"

    def to_text(self) -> str:
        lines = [f"command={self.command}", f"seed={self.seed}", f"verbosity={self.verbosity}"]
        for key in sorted(self.params):
            value = self.params[key]
            if "\n" in value:
                raise ValueError(f"{key}: values cannot contain newlines")
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, path="<config>") -> "RunConfig":
        values = parse_config_text(text, path)
        if "command" not in values:
            raise FormatError(f"{path}: missing 'command'")
        try:
            seed = int(values.pop("seed", "0"))
        except ValueError as exc:
            raise FormatError(f"{path}: seed must be an integer") from exc
        command = values.pop("command")
        verbosity = values.pop("verbosity", "info")
        return cls(command, values, seed, verbosity)
