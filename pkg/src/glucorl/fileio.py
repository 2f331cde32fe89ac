"""Shared on-disk plumbing: key-value parameter files, checksums, atomic writes.

All human-readable artifacts (patient cohort, meal profiles, PID parameter
files, dataset sidecars, run manifests) use one INI-style key-value format:
named sections, ``key = value`` lines, ``#`` comments.  Keys carry explicit
units where applicable (e.g. ``body_mass_kg``).  Every file starts with a
``[meta]`` section holding ``format_version``.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import tempfile
from pathlib import Path


class ParamFileError(ValueError):
    """Malformed or version-incompatible parameter file."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via temp file + rename so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_params(path: str | Path, sections: dict[str, dict[str, str]],
                 format_version: int = 1) -> None:
    """Serialize ``{section: {key: value}}`` to the shared key-value format."""
    lines = ["[meta]", f"format_version = {format_version}", ""]
    for name, kv in sections.items():
        lines.append(f"[{name}]")
        for key, value in kv.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    atomic_write_text(path, "\n".join(lines))


def read_params(path: str | Path, expect_version: int = 1) -> dict[str, dict[str, str]]:
    """Parse a key-value parameter file, checking the format version."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ParamFileError(f"{path}: {exc}") from exc
    if "meta" not in parser:
        raise ParamFileError(f"{path}: missing [meta] section")
    version = parser["meta"].getint("format_version", fallback=-1)
    if version != expect_version:
        raise ParamFileError(
            f"{path}: format_version {version}, expected {expect_version}")
    return {name: dict(parser[name]) for name in parser.sections() if name != "meta"}


def fmt_float(x: float) -> str:
    """Shortest round-trippable decimal form of a float."""
    return repr(float(x))
