"""Binary phonological feature chart and frame labelling.

The chart ships as a versioned delimited-text resource
(``resources/phone_features.tsv``): one row per feature listing its positive
phones, plus an ``inventory`` row enumerating the whole phone set. Feature
values are independent binary indicators, not a partition.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ParseError, ValidationError
from ..ingest import UtteranceAlignment

FEATURE_NAMES: tuple[str, ...] = (
    "syllabic",
    "consonantal",
    "long",
    "sonorant",
    "continuant",
    "delayed_release",
    "approximant",
    "tap",
    "nasal",
    "voice",
    "spread_glottis",
    "labial",
    "round",
    "labiodental",
    "coronal",
    "anterior",
    "distributed",
    "strident",
    "lateral",
    "dorsal",
    "high",
    "low",
    "front",
    "back",
    "tense",
    "constricted_glottis",
)

N_FEATURES = len(FEATURE_NAMES)


def normalize_phone(phone: str) -> str:
    """Canonical IPA form: NFC-normalized, with LATIN SMALL LETTER SCRIPT G
    folded onto ASCII ``g``."""
    return unicodedata.normalize("NFC", phone.strip()).replace("ɡ", "g")


@dataclass(frozen=True)
class FeatureInventory:
    """Ordered, immutable list of feature names."""

    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValidationError("feature names must be unique")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def __len__(self) -> int:
        return len(self.names)


class FeatureMapping:
    """Phone -> binary feature vector lookup backed by the chart resource."""

    def __init__(self, table: dict[str, np.ndarray], inventory: FeatureInventory,
                 version: str):
        self.inventory = inventory
        self.version = version
        self._table = {p: np.asarray(v, dtype=np.uint8) for p, v in table.items()}
        for phone, vec in self._table.items():
            if vec.shape != (len(inventory),):
                raise ValidationError(f"feature vector for {phone!r} has wrong length")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "FeatureMapping":
        """Load the chart; defaults to the packaged resource."""
        if path is None:
            ref = resources.files("segprobe.resources").joinpath("phone_features.tsv")
            text = ref.read_text(encoding="utf-8")
            src = "phone_features.tsv"
        else:
            text = Path(path).read_text(encoding="utf-8")
            src = str(path)
        version = "unversioned"
        inventory = FeatureInventory()
        phones: list[str] = []
        rows: dict[str, list[str]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1 and len(line.split()) >= 2:
                    version = line.split()[-1]
                continue
            parts = raw.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{src}:{lineno}: expected 'key<TAB>phones'")
            key = parts[0].strip()
            members = [normalize_phone(p) for p in parts[1].split()]
            if key == "inventory":
                phones = members
            elif key in FEATURE_NAMES:
                if key in rows:
                    raise ParseError(f"{src}:{lineno}: duplicate feature row {key!r}")
                rows[key] = members
            else:
                raise ParseError(f"{src}:{lineno}: unknown feature {key!r}")
        if not phones:
            raise ParseError(f"{src}: missing inventory row")
        missing = [f for f in FEATURE_NAMES if f not in rows]
        if missing:
            raise ParseError(f"{src}: missing feature rows {missing}")
        phone_set = set(phones)
        if len(phone_set) != len(phones):
            raise ParseError(f"{src}: duplicate phones in inventory")
        table = {p: np.zeros(N_FEATURES, dtype=np.uint8) for p in phones}
        for fi, fname in enumerate(FEATURE_NAMES):
            for p in rows[fname]:
                if p not in phone_set:
                    raise ParseError(
                        f"{src}: phone {p!r} in row {fname!r} missing from inventory"
                    )
                table[p][fi] = 1
        return cls(table, inventory, version)

    @property
    def phones(self) -> list[str]:
        return sorted(self._table)

    def __contains__(self, phone: str) -> bool:
        return normalize_phone(phone) in self._table

    def vector(self, phone: str) -> np.ndarray:
        key = normalize_phone(phone)
        if key not in self._table:
            raise ValidationError(f"phone {key!r} missing from the feature chart")
        return self._table[key].copy()

    def positive_features(self, phone: str) -> set[str]:
        vec = self.vector(phone)
        return {FEATURE_NAMES[i] for i in np.flatnonzero(vec)}


@dataclass(frozen=True)
class TargetPair:
    """A native/non-native segment pair and the features that define it."""

    nonnative: str
    native: str
    contrastive: frozenset[str]
    shared: frozenset[str]

    @property
    def features(self) -> tuple[str, ...]:
        """The pair's full feature list, in canonical inventory order."""
        wanted = self.contrastive | self.shared
        return tuple(f for f in FEATURE_NAMES if f in wanted)


TARGET_PAIRS: dict[str, TargetPair] = {
    "ʋ": TargetPair(  # labiodental approximant vs labiodental fricative
        nonnative="ʋ",
        native="v",
        contrastive=frozenset({"approximant", "consonantal", "sonorant"}),
        shared=frozenset({"continuant", "delayed_release", "labial", "voice", "labiodental"}),
    ),
    "ɾ": TargetPair(  # alveolar tap vs rhotic approximant
        nonnative="ɾ",
        native="ɹ",
        contrastive=frozenset({"anterior", "consonantal", "tap", "distributed"}),
        shared=frozenset({"approximant", "continuant", "voice", "sonorant", "coronal"}),
    ),
    "ʈ": TargetPair(  # retroflex stop vs alveolar stop
        nonnative="ʈ",
        native="t",
        contrastive=frozenset({"anterior"}),
        shared=frozenset({"consonantal", "coronal"}),
    ),
}


def feature_list(segment: str) -> tuple[str, ...]:
    """Feature names attached to a target segment, in inventory order."""
    key = normalize_phone(segment)
    if key not in TARGET_PAIRS:
        raise ValidationError(f"no target pair registered for segment {key!r}")
    return TARGET_PAIRS[key].features


def verify_pair_contrasts(mapping: FeatureMapping, pair: TargetPair) -> None:
    """Check that the chart realizes the pair's contrast exactly.

    The two phones must differ on every contrastive feature and agree on all
    other features (the listed shared features in particular).
    """
    a = mapping.vector(pair.native).astype(int)
    b = mapping.vector(pair.nonnative).astype(int)
    differing = {FEATURE_NAMES[i] for i in np.flatnonzero(a != b)}
    if differing != set(pair.contrastive):
        raise ValidationError(
            f"pair [{pair.native}]-[{pair.nonnative}]: chart differs on "
            f"{sorted(differing)}, expected exactly {sorted(pair.contrastive)}"
        )


def label_frames(
    alignment: UtteranceAlignment,
    mapping: FeatureMapping,
    frame_times: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Binary (n_frames x 26) labels from an alignment.

    Each frame takes the feature vector of the phone whose interval contains
    its center time (half-open [start, end)). Frames in silence or outside
    every phone interval get an all-zero row. A phone missing from the chart
    is an error.
    """
    times = np.asarray(frame_times, dtype=float)
    labels = np.zeros((times.shape[0], N_FEATURES), dtype=np.uint8)
    for iv in alignment.phone_tier:
        if not iv.label:
            continue
        vec = mapping.vector(iv.label)  # raises for unmapped phones
        covered = (times >= iv.t_start) & (times < iv.t_end)
        labels[covered] = vec
    return labels


def missing_phones(alignments: Iterable[UtteranceAlignment], mapping: FeatureMapping) -> list[str]:
    """Distinct phone labels in the alignments that the chart does not know."""
    seen: set[str] = set()
    for a in alignments:
        for iv in a.phone_tier:
            if iv.label and iv.label not in mapping:
                seen.add(normalize_phone(iv.label))
    return sorted(seen)
