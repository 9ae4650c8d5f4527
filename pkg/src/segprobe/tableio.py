"""Delimited-text tables with a config-hash header comment.

Every emitted table starts with ``# segprobe config_hash=<hash>`` so a report
can always be traced back to the exact configuration that produced it. Float
formatting is fixed (%.10g) to keep reruns byte-identical.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence],
                config_hash: str | None = None) -> None:
    lines = []
    if config_hash is not None:
        lines.append(f"# segprobe config_hash={config_hash}")
    lines.append("\t".join(header))
    for row in rows:
        cells = [format_cell(v) for v in row]
        if len(cells) != len(header):
            raise ValueError(f"row width {len(cells)} != header width {len(header)}")
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table(path: str | Path) -> list[dict[str, str]]:
    """Read a table written by write_table; header comments are skipped."""
    path = Path(path)
    header: list[str] | None = None
    out: list[dict[str, str]] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        cells = raw.split("\t")
        if header is None:
            header = cells
            continue
        if len(cells) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} columns")
        out.append(dict(zip(header, cells)))
    if header is None:
        raise ParseError(f"{path}: empty table")
    return out
