"""Forced-alignment ingestion: TextGrid parsing, rating merges, token tables.

Consumes Praat long-format TextGrids (one phone tier, one word tier) plus a
delimited ratings file, and produces PhoneToken records carrying the accent
label and word position used by every downstream stage.
"""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError, ValidationError

# Tolerance (seconds) for phone/word boundary disagreement between tiers.
# Aligner boundaries are quantized per tier and may differ by a frame.
DEFAULT_EPS = 0.010


class AccentLabel(enum.IntEnum):
    """Three-level accent strength, totally ordered."""

    NO_NEGLIGIBLE = 0
    MILD = 1
    STRONG = 2

    @property
    def display(self) -> str:
        return _ACCENT_DISPLAY[self]

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "AccentLabel":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown accent label {token!r}") from None


_ACCENT_DISPLAY = {
    AccentLabel.NO_NEGLIGIBLE: "No/Negligible",
    AccentLabel.MILD: "Mild",
    AccentLabel.STRONG: "Strong",
}


class WordPosition(enum.Enum):
    INITIAL = "initial"
    MEDIAL = "medial"
    FINAL = "final"

    @classmethod
    def from_token(cls, token: str) -> "WordPosition":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown word position {token!r}") from None


def merge_ratings(ratings: Sequence[int]) -> AccentLabel:
    """Collapse per-rater 4-point scores into one conservative label.

    The minimum rating across raters is taken; 1 maps to no/negligible,
    2 to mild, and both 3 and 4 to strong (the rare top rating is folded
    into strong).
    """
    if len(ratings) == 0:
        raise ValidationError("ratings must be non-empty")
    for r in ratings:
        if int(r) != r or not 1 <= int(r) <= 4:
            raise ValidationError(f"rating {r!r} outside the 1..4 scale")
    m = min(int(r) for r in ratings)
    if m == 1:
        return AccentLabel.NO_NEGLIGIBLE
    if m == 2:
        return AccentLabel.MILD
    return AccentLabel.STRONG


@dataclass(frozen=True, slots=True)
class Interval:
    """One labelled time interval from a TextGrid tier."""

    label: str
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True, slots=True)
class UtteranceAlignment:
    utterance_id: str
    phone_tier: tuple[Interval, ...]
    word_tier: tuple[Interval, ...]


@dataclass(frozen=True, slots=True)
class PhoneToken:
    """One aligned occurrence of a phone, with accent and word-position context.

    ``index`` is the interval's position in the phone tier; together with
    ``utterance_id`` it forms the stable key used by downstream artifacts.
    """

    utterance_id: str
    phone: str
    word_id: str
    position: WordPosition
    t_start: float
    t_end: float
    accent: AccentLabel
    index: int = field(default=-1)

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise ValidationError(
                f"token {self.phone!r} in {self.utterance_id}: "
                f"t_end {self.t_end} must exceed t_start {self.t_start}"
            )

    @property
    def token_id(self) -> str:
        return f"{self.utterance_id}:{self.index:04d}"


_QUOTED = re.compile(r'"((?:[^"]|"")*)"')
_NUMBER = re.compile(r"=\s*([-+0-9.eE]+)\s*$")
_ITEM = re.compile(r"item\s*\[\s*(\d+)\s*\]\s*:")
_INTERVALS_SIZE = re.compile(r"intervals\s*:\s*size\s*=\s*(\d+)")


def _unquote(raw: str, path: str, lineno: int) -> str:
    m = _QUOTED.search(raw)
    if m is None:
        raise ParseError(f"{path}:{lineno}: expected a quoted string in {raw.strip()!r}")
    return m.group(1).replace('""', '"')


def _number(raw: str, path: str, lineno: int) -> float:
    m = _NUMBER.search(raw)
    if m is None:
        raise ParseError(f"{path}:{lineno}: expected a number in {raw.strip()!r}")
    try:
        return float(m.group(1))
    except ValueError:
        raise ParseError(f"{path}:{lineno}: bad number {m.group(1)!r}") from None


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next_content(self) -> tuple[int, str]:
        while self.pos < len(self.lines):
            self.pos += 1
            line = self.lines[self.pos - 1].strip()
            if line:
                return self.pos, line
        return -1, ""

    def peek_content(self) -> tuple[int, str]:
        saved = self.pos
        lineno, line = self.next_content()
        self.pos = saved
        return lineno, line


def parse_textgrid(
    path: str | Path,
    phone_tier: str = "phones",
    word_tier: str = "words",
    eps: float = DEFAULT_EPS,
) -> UtteranceAlignment:
    """Parse a Praat long-format TextGrid into an UtteranceAlignment.

    Both requested interval tiers must be present. Empty-label intervals are
    retained as silence markers. Tier intervals must be time-ordered and
    non-overlapping, and every non-empty phone interval must nest within a
    word interval up to ``eps``; violations raise ParseError naming the file,
    line and tier.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    src = str(path)
    rd = _Lines(text)

    lineno, line = rd.next_content()
    if "ooTextFile" not in line:
        raise ParseError(f"{src}:{lineno}: not an ooTextFile header: {line!r}")
    lineno, line = rd.next_content()
    if "TextGrid" not in line:
        raise ParseError(f"{src}:{lineno}: object class is not TextGrid: {line!r}")

    tiers: dict[str, list[tuple[int, Interval]]] = {}
    tier_lines: dict[str, int] = {}

    while True:
        lineno, line = rd.next_content()
        if lineno < 0:
            break
        if not _ITEM.search(line):
            continue
        # tier block: class, name, xmin, xmax, then either intervals or points
        lineno, line = rd.next_content()
        if "class" not in line:
            raise ParseError(f"{src}:{lineno}: expected tier class, got {line!r}")
        tier_class = _unquote(line, src, lineno)
        lineno, line = rd.next_content()
        if "name" not in line:
            raise ParseError(f"{src}:{lineno}: expected tier name, got {line!r}")
        tier_name = _unquote(line, src, lineno)
        tier_lines[tier_name] = lineno
        rd.next_content()  # tier xmin
        rd.next_content()  # tier xmax
        if tier_class != "IntervalTier":
            # skip point tiers: "points: size = N" then N blocks of 3 lines
            lineno, line = rd.next_content()
            m = re.search(r"size\s*=\s*(\d+)", line)
            n = int(m.group(1)) if m else 0
            for _ in range(3 * n):
                rd.next_content()
            continue
        lineno, line = rd.next_content()
        m = _INTERVALS_SIZE.search(line)
        if m is None:
            raise ParseError(
                f"{src}:{lineno}: tier {tier_name!r}: expected 'intervals: size', got {line!r}"
            )
        n_intervals = int(m.group(1))
        items: list[tuple[int, Interval]] = []
        for _ in range(n_intervals):
            lineno, line = rd.next_content()
            if "intervals" not in line:
                raise ParseError(
                    f"{src}:{lineno}: tier {tier_name!r}: expected interval header, got {line!r}"
                )
            start_line = lineno
            lineno, line = rd.next_content()
            xmin = _number(line, src, lineno)
            lineno, line = rd.next_content()
            xmax = _number(line, src, lineno)
            lineno, line = rd.next_content()
            label = _unquote(line, src, lineno).strip()
            if not xmax > xmin:
                raise ParseError(
                    f"{src}:{start_line}: tier {tier_name!r}: interval has "
                    f"xmax {xmax} <= xmin {xmin}"
                )
            items.append((start_line, Interval(label, xmin, xmax)))
        tiers[tier_name] = items

    for wanted in (phone_tier, word_tier):
        if wanted not in tiers:
            raise ParseError(f"{src}: missing tier {wanted!r} (found {sorted(tiers)})")

    for name, items in tiers.items():
        prev_end = None
        for at_line, iv in items:
            if prev_end is not None and iv.t_start < prev_end - 1e-9:
                raise ParseError(
                    f"{src}:{at_line}: tier {name!r}: overlapping intervals "
                    f"(starts at {iv.t_start} before previous end {prev_end})"
                )
            prev_end = iv.t_end

    phones = [iv for _, iv in tiers[phone_tier]]
    words = [iv for _, iv in tiers[word_tier]]

    for at_line, iv in tiers[phone_tier]:
        if not iv.label:
            continue
        if not any(
            w.t_start - eps <= iv.t_start and iv.t_end <= w.t_end + eps for w in words
        ):
            raise ParseError(
                f"{src}:{at_line}: tier {phone_tier!r}: phone/word nesting violated "
                f"for [{iv.label}] at {iv.t_start:.3f}-{iv.t_end:.3f}"
            )

    return UtteranceAlignment(
        utterance_id=path.stem,
        phone_tier=tuple(phones),
        word_tier=tuple(words),
    )


def write_textgrid(alignment: UtteranceAlignment, path: str | Path,
                   phone_tier: str = "phones", word_tier: str = "words") -> None:
    """Write an alignment back out as a Praat long-format TextGrid.

    Times use shortest round-trip float formatting, so parsing the written
    file reproduces the exact boundary values.
    """
    tiers = [(word_tier, alignment.word_tier), (phone_tier, alignment.phone_tier)]
    t_min = min((iv.t_start for _, t in tiers for iv in t), default=0.0)
    t_max = max((iv.t_end for _, t in tiers for iv in t), default=0.0)
    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {t_min!r}",
        f"xmax = {t_max!r}",
        "tiers? <exists>",
        f"size = {len(tiers)}",
        "item []:",
    ]
    for k, (name, intervals) in enumerate(tiers, start=1):
        out += [
            f"    item [{k}]:",
            '        class = "IntervalTier"',
            f'        name = "{name}"',
            f"        xmin = {t_min!r}",
            f"        xmax = {t_max!r}",
            f"        intervals: size = {len(intervals)}",
        ]
        for i, iv in enumerate(intervals, start=1):
            label = iv.label.replace('"', '""')
            out += [
                f"        intervals [{i}]:",
                f"            xmin = {iv.t_start!r}",
                f"            xmax = {iv.t_end!r}",
                f'            text = "{label}"',
            ]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def classify_position(phone: Interval, word: Interval, eps: float = DEFAULT_EPS) -> WordPosition:
    """Word position of a phone interval within its containing word.

    A phone spanning the entire word (a one-phone word) is labelled initial.
    """
    at_start = abs(phone.t_start - word.t_start) <= eps
    at_end = abs(phone.t_end - word.t_end) <= eps
    if at_start:
        return WordPosition.INITIAL
    if at_end:
        return WordPosition.FINAL
    return WordPosition.MEDIAL


def extract_tokens(
    alignment: UtteranceAlignment,
    targets: Iterable[str],
    accent: AccentLabel,
    eps: float = DEFAULT_EPS,
) -> list[PhoneToken]:
    """Pull out one PhoneToken per phone interval whose label is a target.

    Position is derived from the containing word's boundaries. A target phone
    not contained (up to ``eps``) in any non-empty word interval is an
    alignment error.
    """
    targets = set(targets)
    if not targets:
        raise ValidationError("targets must be a non-empty set of phone labels")
    words = [w for w in alignment.word_tier if w.label]
    tokens: list[PhoneToken] = []
    for idx, ph in enumerate(alignment.phone_tier):
        if ph.label not in targets:
            continue
        home = None
        for w_idx, w in enumerate(words):
            if w.t_start - eps <= ph.t_start and ph.t_end <= w.t_end + eps:
                home = (w_idx, w)
                break
        if home is None:
            raise ValidationError(
                f"{alignment.utterance_id}: phone [{ph.label}] at "
                f"{ph.t_start:.3f}-{ph.t_end:.3f} not contained in any word interval"
            )
        w_idx, w = home
        tokens.append(
            PhoneToken(
                utterance_id=alignment.utterance_id,
                phone=ph.label,
                word_id=f"w{w_idx:03d}",
                position=classify_position(ph, w, eps),
                t_start=ph.t_start,
                t_end=ph.t_end,
                accent=accent,
                index=idx,
            )
        )
    return tokens


def tabulate_distribution(
    tokens: Iterable[PhoneToken],
) -> dict[tuple[str, WordPosition, AccentLabel], int]:
    """Count tokens by (segment, word position, accent label)."""
    counts: Counter = Counter()
    for tok in tokens:
        counts[(tok.phone, tok.position, tok.accent)] += 1
    return dict(counts)


def read_ratings(path: str | Path) -> dict[str, list[int]]:
    """Read the per-utterance rater scores table.

    Expected format: UTF-8 delimited text (tab or comma), a header line whose
    first column is ``utterance_id``, and one integer column per rater. The
    number of rater columns is free (>= 1).
    """
    path = Path(path)
    rows: dict[str, list[int]] = {}
    sep = None
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if sep is None:
            sep = "\t" if "\t" in line else ","
            head = [c.strip() for c in line.split(sep)]
            if not head or head[0] != "utterance_id":
                raise ParseError(
                    f"{path}:{lineno}: ratings header must start with 'utterance_id'"
                )
            continue
        cells = [c.strip() for c in line.split(sep)]
        if len(cells) < 2:
            raise ParseError(f"{path}:{lineno}: expected at least one rating column")
        try:
            scores = [int(c) for c in cells[1:] if c != ""]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer rating in {cells[1:]!r}") from None
        if not scores:
            raise ParseError(f"{path}:{lineno}: empty rating row")
        rows[cells[0]] = scores
    if sep is None:
        raise ParseError(f"{path}: empty ratings file")
    return rows
