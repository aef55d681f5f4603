"""Profile data model, corpus parsing/cleaning, and deterministic splits.

Corpus files are JSON Lines, one object per profile:

    {"id": str, "label": "LLP|FLP|GPT35P|GPT4P", "name": str,
     "location": str, "summary": str,
     "sections": {"education": [str], "experience": [str],
                  "skills": [str], "recommendations": [str]},
     "numeric": {"connections": int, "followers": int, ...}}

Labels: LLP is the legitimate class; everything else projects to "fake".
Cleaning splits composite entries (on ";", "|", and newlines), normalizes
whitespace, strips control characters, and verifies the essential fields
(Name, Experience, Education, Location). Records that fail cleaning are
never dropped silently; the loader returns a rejection ledger.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)


class CorpusError(Exception):
    """Fatal corpus-level failure (unreadable file, infeasible split)."""


class Label(str, Enum):
    LLP = "LLP"
    FLP = "FLP"
    GPT35P = "GPT35P"
    GPT4P = "GPT4P"

    @property
    def is_fake(self) -> bool:
        # Binary projection: LLP -> legit, all other classes -> fake.
        return self is not Label.LLP


#: Closed section-tag vocabulary, in canonical order.
TAGS = ("Education", "Experience", "Skills", "Recommendations", "Summary", "Location", "Name")

#: JSONL keys carrying entry lists, mapped to their canonical tags.
SECTION_KEYS = {
    "education": "Education",
    "experience": "Experience",
    "skills": "Skills",
    "recommendations": "Recommendations",
}

#: Fields that must be non-empty after cleaning.
ESSENTIAL_FIELDS = ("Name", "Experience", "Education", "Location")

# Composite-entry delimiters: ";", "|", and newline within a single entry.
_COMPOSITE_RE = re.compile(r"[;|\n]")
_WS_RE = re.compile(r" +")


@dataclass(frozen=True)
class Section:
    tag: str
    text: str


@dataclass(frozen=True)
class Profile:
    """One cleaned profile. Immutable; safe to share across threads."""

    id: str
    label: Label
    name: str
    location: str
    summary: str
    education: tuple[str, ...]
    experience: tuple[str, ...]
    skills: tuple[str, ...]
    recommendations: tuple[str, ...]
    numeric_raw: Mapping[str, int]

    @property
    def sections(self) -> tuple[Section, ...]:
        """Present sections as (tag, concatenated text), in canonical tag order."""
        texts = {
            "Education": " ".join(self.education),
            "Experience": " ".join(self.experience),
            "Skills": " ".join(self.skills),
            "Recommendations": " ".join(self.recommendations),
            "Summary": self.summary,
            "Location": self.location,
            "Name": self.name,
        }
        return tuple(Section(tag, texts[tag]) for tag in TAGS if texts[tag])


@dataclass(frozen=True)
class Rejection:
    """Why one raw record was not turned into a Profile."""

    record_id: str | None
    reason: str
    detail: str


@dataclass
class CorpusLoadResult:
    profiles: list[Profile]
    rejections: list[Rejection]


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int


def normalize_text(raw: str) -> str:
    """Whitespace-normalize and strip control characters. Idempotent."""
    chars = []
    for ch in raw:
        if ch.isspace():
            chars.append(" ")
        elif unicodedata.category(ch).startswith("C"):
            continue
        else:
            chars.append(ch)
    return _WS_RE.sub(" ", "".join(chars)).strip()


def split_entries(entries: Iterable[str]) -> tuple[str, ...]:
    """Split composite entries on the documented delimiters, normalize, drop empties."""
    out: list[str] = []
    for entry in entries:
        for piece in _COMPOSITE_RE.split(entry):
            piece = normalize_text(piece)
            if piece:
                out.append(piece)
    return tuple(out)


def _coerce_numeric(raw: object) -> dict[str, int] | str:
    """Validate the numeric map; returns an error string on violation."""
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        return "numeric must be an object"
    out: dict[str, int] = {}
    for key, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, int):
            return f"numeric attribute {key!r} is not an integer"
        if value < 0:
            return f"numeric attribute {key!r} is negative"
        out[str(key)] = value
    return out


def clean_profile(raw: Mapping[str, object]) -> Profile | Rejection:
    """Clean one parsed record into a Profile, or explain why it was rejected.

    Applies composite-entry splitting, whitespace normalization, and the
    essential-field check. Idempotent: cleaning an already-clean record
    yields an identical Profile.
    """
    record_id = raw.get("id") if isinstance(raw.get("id"), str) else None
    if not record_id:
        return Rejection(None, "MissingId", "record has no usable 'id'")

    try:
        label = Label(str(raw.get("label")))
    except ValueError:
        return Rejection(record_id, "InvalidLabel", f"unknown label {raw.get('label')!r}")

    sections_raw = raw.get("sections")
    if not isinstance(sections_raw, dict):
        return Rejection(record_id, "MalformedSections", "'sections' must be an object")
    unknown = sorted(set(sections_raw) - set(SECTION_KEYS))
    if unknown:
        return Rejection(record_id, "UnknownTag", f"unknown section tag(s): {', '.join(unknown)}")

    entries: dict[str, tuple[str, ...]] = {}
    for key in SECTION_KEYS:
        value = sections_raw.get(key, [])
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(e, str) for e in value):
            return Rejection(record_id, "MalformedSections", f"section {key!r} must be a list of strings")
        entries[key] = split_entries(value)

    numeric = _coerce_numeric(raw.get("numeric"))
    if isinstance(numeric, str):
        return Rejection(record_id, "InvalidNumeric", numeric)

    name = normalize_text(str(raw.get("name", "")))
    location = normalize_text(str(raw.get("location", "")))
    summary = normalize_text(str(raw.get("summary", "")))

    present = {
        "Name": bool(name),
        "Location": bool(location),
        "Experience": bool(entries["experience"]),
        "Education": bool(entries["education"]),
    }
    missing = [field for field in ESSENTIAL_FIELDS if not present[field]]
    if missing:
        return Rejection(record_id, "MissingEssential", ", ".join(missing))

    return Profile(
        id=record_id,
        label=label,
        name=name,
        location=location,
        summary=summary,
        education=entries["education"],
        experience=entries["experience"],
        skills=entries["skills"],
        recommendations=entries["recommendations"],
        numeric_raw=numeric,
    )


def load_corpus(path: str | Path, format: str = "jsonl") -> CorpusLoadResult:
    """Load and clean a corpus file.

    Per-record schema violations become Rejection entries; an unreadable
    file or unsupported format is fatal.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    profiles: list[Profile] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            rejections.append(Rejection(None, "ParseError", f"line {lineno}: {exc.msg}"))
            continue
        cleaned = clean_profile(raw)
        if isinstance(cleaned, Rejection):
            rejections.append(cleaned)
            continue
        if cleaned.id in seen:
            rejections.append(Rejection(cleaned.id, "Duplicate", f"line {lineno}: duplicate id"))
            continue
        seen.add(cleaned.id)
        profiles.append(cleaned)

    log.info("loaded %d profiles from %s (%d rejected)", len(profiles), path, len(rejections))
    return CorpusLoadResult(profiles=profiles, rejections=rejections)


def profile_to_record(profile: Profile) -> dict:
    """Serialize one Profile back to the JSONL record schema."""
    return {
        "id": profile.id,
        "label": profile.label.value,
        "name": profile.name,
        "location": profile.location,
        "summary": profile.summary,
        "sections": {
            "education": list(profile.education),
            "experience": list(profile.experience),
            "skills": list(profile.skills),
            "recommendations": list(profile.recommendations),
        },
        "numeric": dict(profile.numeric_raw),
    }


def write_corpus(profiles: Iterable[Profile], path: str | Path) -> None:
    """Write profiles as UTF-8 JSONL with LF line endings. Byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for profile in profiles:
            fh.write(json.dumps(profile_to_record(profile), ensure_ascii=False))
            fh.write("\n")


def stratified_split(
    profiles: Iterable[Profile],
    counts: Mapping[Label, tuple[int, int]],
    seed: int,
) -> CorpusSplit:
    """Draw exact per-class (train, test) counts, deterministically for a seed.

    A pure function of the profile *set*: ids are sorted per class before
    the seeded shuffle, so input order does not matter.
    """
    by_class: dict[Label, list[str]] = {}
    for profile in profiles:
        by_class.setdefault(profile.label, []).append(profile.id)

    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for label in Label:  # fixed enum order keeps the RNG stream deterministic
        if label not in counts:
            continue
        n_train, n_test = counts[label]
        if n_train < 0 or n_test < 0:
            raise CorpusError(f"negative split count for class {label.value}")
        available = sorted(by_class.get(label, []))
        if len(available) < n_train + n_test:
            raise CorpusError(
                f"class {label.value}: need {n_train + n_test} profiles, have {len(available)}"
            )
        order = rng.permutation(len(available))
        picked = [available[i] for i in order]
        train.extend(picked[:n_train])
        test.extend(picked[n_train : n_train + n_test])

    return CorpusSplit(train=tuple(train), test=tuple(test), seed=seed)
