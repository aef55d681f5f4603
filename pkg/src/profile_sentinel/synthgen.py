"""Seeded generator of desk-scale synthetic profile corpora.

Three generating processes stand in for the four label classes:

* legit-like (LLP): coherent bodies drawn from the vocabulary pools, with
  log-normal connection counts and follower counts tied to connections;
* manual-fake-like (FLP): thin bodies with injected structural anomalies
  (missing non-essential sections, inconsistent follower/connection counts,
  truncated summaries);
* LLM-like (GPT35P / GPT4P): the text body of a randomly chosen legit
  profile, with per-token synonym substitution at rate (1 - llm_similarity),
  over numeric attributes drawn from class distributions that sit between
  the legit and manual-fake ranges.

Same (config, seed) always produces a byte-identical corpus file. The
vocabulary pools ship as editable one-item-per-line text files under
assets/.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Label, Profile, clean_profile
from .embedding import DEFAULT_HASHED_DIM, embed_section, table_for_profiles

_WORD_SPLIT_RE = re.compile(r"(\W+)", re.UNICODE)

POOL_FILES = {
    "job_titles": "job_titles.txt",
    "institutions": "institutions.txt",
    "skills": "skills.txt",
    "locations": "locations.txt",
    "first_names": "first_names.txt",
    "last_names": "last_names.txt",
    "summary_templates": "summary_templates.txt",
    "duty_phrases": "duty_phrases.txt",
    "recommendation_templates": "recommendation_templates.txt",
    "flp_summaries": "flp_summaries.txt",
}

_DEGREES = ("Bachelor of Science", "Bachelor of Arts", "Master of Science",
            "Master of Business Administration", "Bachelor of Engineering")
_FIELDS = ("Computer Science", "Economics", "Marketing", "Electrical Engineering",
           "Business Administration", "Statistics", "Psychology", "Industrial Design")


class GenError(Exception):
    """Invalid generator configuration (empty pool, infeasible counts)."""


def _read_lines(name: str) -> tuple[str, ...]:
    text = resources.files("profile_sentinel").joinpath("assets", name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def load_pools() -> dict[str, tuple[str, ...]]:
    """The packaged default vocabulary pools."""
    return {key: _read_lines(fname) for key, fname in POOL_FILES.items()}


def load_synonyms() -> dict[str, tuple[str, ...]]:
    """token -> interchangeable group, from the packaged synonym file."""
    groups = {}
    for line in _read_lines("synonyms.txt"):
        words = tuple(w.strip().lower() for w in line.split(",") if w.strip())
        if len(words) >= 2:
            for word in words:
                groups[word] = words
    return groups


@dataclass(frozen=True)
class ClassNumericParams:
    """Log-normal connection counts and a follower/connection ratio range."""

    connections_mu: float
    connections_sigma: float
    follower_ratio: tuple[float, float]


DEFAULT_NUMERIC: dict[Label, ClassNumericParams] = {
    Label.LLP: ClassNumericParams(6.0, 0.6, (0.85, 1.30)),
    Label.FLP: ClassNumericParams(4.6, 1.0, (0.45, 1.10)),
    Label.GPT35P: ClassNumericParams(4.9, 0.45, (0.35, 0.75)),
    Label.GPT4P: ClassNumericParams(5.3, 0.45, (0.45, 0.85)),
}

#: Desk-scale benchmark counts: the canonical study composition at scale 1/6
#: (train pool + test pool per class).
DEFAULT_COUNTS: dict[Label, int] = {
    Label.LLP: 300,
    Label.FLP: 100,
    Label.GPT35P: 200,
    Label.GPT4P: 100,
}

# FLP anomaly probabilities.
_P_DROP_SECTIONS = 0.4
_P_NUMERIC_ANOMALY = 0.5
_P_TRUNCATED_SUMMARY = 0.3
# Fraction of manual fakes whose body copies the legit process (the numeric
# attributes stay fake-typical: counts are the part manual fakers cannot fake).
_P_POLISHED_FLP = 0.35


@dataclass(frozen=True)
class GenConfig:
    counts: Mapping[Label, int] = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    llm_similarity: float = 0.9
    seed: int = 0
    pools: Mapping[str, Sequence[str]] | None = None
    numeric: Mapping[Label, ClassNumericParams] | None = None

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts.values()):
            raise GenError("class counts must be non-negative")
        if not 0.0 <= self.llm_similarity <= 1.0:
            raise GenError("llm_similarity must lie in [0, 1]")
        for params in (self.numeric or {}).values():
            values = (params.connections_mu, params.connections_sigma, *params.follower_ratio)
            if not all(math.isfinite(v) for v in values):
                raise GenError("numeric distribution parameters must be finite")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "GenConfig":
        counts = {Label(k): int(v) for k, v in raw.get("counts", DEFAULT_COUNTS).items()}
        numeric = None
        if "numeric" in raw:
            numeric = {
                Label(k): ClassNumericParams(
                    connections_mu=float(v["connections_mu"]),
                    connections_sigma=float(v["connections_sigma"]),
                    follower_ratio=(float(v["follower_ratio"][0]), float(v["follower_ratio"][1])),
                )
                for k, v in raw["numeric"].items()
            }
        return cls(
            counts=counts,
            llm_similarity=float(raw.get("llm_similarity", 0.9)),
            seed=int(raw.get("seed", 0)),
            numeric=numeric,
        )


@dataclass
class GenReport:
    counts: dict[str, int]
    llm_vs_legit_similarity: float | None
    manual_vs_legit_similarity: float | None

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "llm_vs_legit_similarity": self.llm_vs_legit_similarity,
            "manual_vs_legit_similarity": self.manual_vs_legit_similarity,
        }


@dataclass
class _Body:
    name: str
    location: str
    summary: str
    education: list[str]
    experience: list[str]
    skills: list[str]
    recommendations: list[str]


def _pick(rng: np.random.Generator, pool: Sequence[str]) -> str:
    return pool[int(rng.integers(len(pool)))]


def _pick_distinct(rng: np.random.Generator, pool: Sequence[str], n: int) -> list[str]:
    n = min(n, len(pool))
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[int(i)] for i in idx]


def _legit_body(rng: np.random.Generator, pools: Mapping[str, Sequence[str]]) -> _Body:
    name = f"{_pick(rng, pools['first_names'])} {_pick(rng, pools['last_names'])}"
    location = _pick(rng, pools["locations"])
    skills = _pick_distinct(rng, pools["skills"], int(rng.integers(6, 15)))

    experience = []
    for _ in range(int(rng.integers(2, 7))):
        duty = _pick(rng, pools["duty_phrases"]).format(skill=_pick(rng, skills).lower())
        experience.append(f"{_pick(rng, pools['job_titles'])} at {_pick(rng, pools['institutions'])}, {duty}")

    education = []
    for _ in range(int(rng.integers(1, 4))):
        year = 1995 + int(rng.integers(0, 28))
        education.append(
            f"{_pick(rng, _DEGREES)} in {_pick(rng, _FIELDS)}, "
            f"{_pick(rng, pools['institutions'])}, class of {year}"
        )

    recommendations = []
    for _ in range(int(rng.integers(0, 5))):
        recommendations.append(
            _pick(rng, pools["recommendation_templates"]).format(
                name=_pick(rng, pools["first_names"]), skill=_pick(rng, skills).lower()
            )
        )

    summary = _pick(rng, pools["summary_templates"]).format(
        title=experience[0].split(" at ")[0],
        location=location,
        skill=skills[0].lower(),
        skill2=skills[1].lower(),
        years=int(rng.integers(3, 16)),
    )
    return _Body(name, location, summary, education, experience, skills, recommendations)


def _fake_body(rng: np.random.Generator, pools: Mapping[str, Sequence[str]]) -> _Body:
    name = f"{_pick(rng, pools['first_names'])} {_pick(rng, pools['last_names'])}"
    location = _pick(rng, pools["locations"])
    skills = _pick_distinct(rng, pools["skills"], int(rng.integers(2, 6)))
    experience = [
        f"{_pick(rng, pools['job_titles'])} at {_pick(rng, pools['institutions'])}"
        for _ in range(int(rng.integers(1, 3)))
    ]
    education = [f"{_pick(rng, _DEGREES)}, {_pick(rng, pools['institutions'])}"]
    recommendations = (
        [f"{_pick(rng, pools['first_names'])} says: great person, highly recommend."]
        if rng.uniform() < 0.3
        else []
    )
    summary = _pick(rng, pools["flp_summaries"])

    # Injected structural anomalies (each profile may carry several).
    if rng.uniform() < _P_DROP_SECTIONS:
        droppable = ["skills", "recommendations", "summary"]
        for target in _pick_distinct(rng, droppable, int(rng.integers(1, 3))):
            if target == "skills":
                skills = []
            elif target == "recommendations":
                recommendations = []
            else:
                summary = ""
    if summary and rng.uniform() < _P_TRUNCATED_SUMMARY:
        summary = " ".join(summary.split()[:4])
    return _Body(name, location, summary, education, experience, skills, recommendations)


def _substitute_tokens(
    text: str,
    rng: np.random.Generator,
    rate: float,
    synonyms: Mapping[str, tuple[str, ...]],
) -> str:
    if rate <= 0.0:
        return text
    parts = _WORD_SPLIT_RE.split(text)
    for i, part in enumerate(parts):
        if not part or not part[0].isalnum():
            continue
        if rng.uniform() >= rate:
            continue
        group = synonyms.get(part.lower())
        if not group:
            continue
        alternatives = [w for w in group if w != part.lower()]
        if not alternatives:
            continue
        repl = alternatives[int(rng.integers(len(alternatives)))]
        parts[i] = repl.capitalize() if part[0].isupper() else repl
    return "".join(parts)


def _llm_body(
    template: _Body,
    rng: np.random.Generator,
    rate: float,
    synonyms: Mapping[str, tuple[str, ...]],
) -> _Body:
    sub = lambda text: _substitute_tokens(text, rng, rate, synonyms)  # noqa: E731
    return _Body(
        name=sub(template.name),
        location=sub(template.location),
        summary=sub(template.summary),
        education=[sub(e) for e in template.education],
        experience=[sub(e) for e in template.experience],
        skills=[sub(s) for s in template.skills],
        recommendations=[sub(r) for r in template.recommendations],
    )


def _numeric_attrs(rng: np.random.Generator, params: ClassNumericParams,
                   anomaly: bool) -> dict[str, int]:
    connections = max(1, int(round(rng.lognormal(params.connections_mu, params.connections_sigma))))
    lo, hi = params.follower_ratio
    ratio = float(rng.uniform(lo, hi))
    if anomaly:
        # Inconsistent counts: inflated follower ratio, or a near-dead account.
        if rng.uniform() < 0.5:
            ratio = float(rng.uniform(3.0, 10.0))
        else:
            connections = int(rng.integers(1, 15))
            ratio = float(rng.uniform(0.0, 0.5))
    followers = max(0, int(round(connections * ratio)))
    return {"connections": connections, "followers": followers}


def _record(profile_id: str, label: Label, body: _Body, numeric: dict[str, int]) -> dict:
    return {
        "id": profile_id,
        "label": label.value,
        "name": body.name,
        "location": body.location,
        "summary": body.summary,
        "sections": {
            "education": list(body.education),
            "experience": list(body.experience),
            "skills": list(body.skills),
            "recommendations": list(body.recommendations),
        },
        "numeric": numeric,
    }


def generate(config: GenConfig, out_path: str | Path | None = None) -> tuple[list[Profile], GenReport]:
    """Generate a corpus; optionally write it as JSONL. Deterministic per seed."""
    pools = dict(load_pools())
    if config.pools:
        pools.update({k: tuple(v) for k, v in config.pools.items()})
    for key, pool in pools.items():
        if not pool:
            raise GenError(f"vocabulary pool {key!r} is empty")
    synonyms = load_synonyms()
    numeric_params = dict(DEFAULT_NUMERIC)
    if config.numeric:
        numeric_params.update(config.numeric)

    llm_classes = [label for label in (Label.GPT35P, Label.GPT4P) if config.counts.get(label, 0) > 0]
    if llm_classes and config.counts.get(Label.LLP, 0) <= 0:
        raise GenError("LLM-like classes need at least one legit profile as template pool")

    rng = np.random.default_rng(config.seed)
    rate = 1.0 - config.llm_similarity
    records: list[dict] = []
    legit_bodies: list[_Body] = []
    for label in Label:
        for i in range(config.counts.get(label, 0)):
            profile_id = f"{label.value.lower()}-{i:05d}"
            if label is Label.LLP:
                body = _legit_body(rng, pools)
                legit_bodies.append(body)
                numeric = _numeric_attrs(rng, numeric_params[label], anomaly=False)
            elif label is Label.FLP:
                body = _fake_body(rng, pools)
                anomaly = bool(rng.uniform() < _P_NUMERIC_ANOMALY)
                numeric = _numeric_attrs(rng, numeric_params[label], anomaly=anomaly)
            else:
                template = legit_bodies[int(rng.integers(len(legit_bodies)))]
                body = _llm_body(template, rng, rate, synonyms)
                numeric = _numeric_attrs(rng, numeric_params[label], anomaly=False)
            records.append(_record(profile_id, label, body, numeric))

    profiles: list[Profile] = []
    for record in records:
        cleaned = clean_profile(record)
        if not isinstance(cleaned, Profile):  # generator bug, not user error
            raise GenError(f"generated record failed cleaning: {cleaned}")
        profiles.append(cleaned)

    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(json.dumps(record, ensure_ascii=False))
                fh.write("\n")

    report = GenReport(
        counts={label.value: config.counts.get(label, 0) for label in Label},
        llm_vs_legit_similarity=None,
        manual_vs_legit_similarity=None,
    )
    llm_sim, flp_sim = _similarity_vs_legit(profiles)
    report.llm_vs_legit_similarity = llm_sim
    report.manual_vs_legit_similarity = flp_sim
    return profiles, report


def _similarity_vs_legit(profiles: Sequence[Profile]) -> tuple[float | None, float | None]:
    """Mean cosine of section embeddings to the legit per-tag centroid.

    Uses the built-in hashed encoder; this is the corpus-level similarity
    figure reported alongside generation.
    """
    legit = [p for p in profiles if p.label is Label.LLP]
    if not legit:
        return None, None
    table = table_for_profiles(profiles, dim=DEFAULT_HASHED_DIM)

    centroids: dict[str, np.ndarray] = {}
    sums: dict[str, list[np.ndarray]] = {}
    for p in legit:
        for section in p.sections:
            sums.setdefault(section.tag, []).append(embed_section(section.text, table).vector)
    for tag, vecs in sums.items():
        centroids[tag] = np.mean(vecs, axis=0)

    def mean_cos(group: list[Profile]) -> float | None:
        values = []
        for p in group:
            for section in p.sections:
                centroid = centroids.get(section.tag)
                if centroid is None:
                    continue
                vec = embed_section(section.text, table).vector
                denom = np.linalg.norm(vec) * np.linalg.norm(centroid)
                if denom > 0:
                    values.append(float(vec @ centroid / denom))
        return float(np.mean(values)) if values else None

    llm = [p for p in profiles if p.label in (Label.GPT35P, Label.GPT4P)]
    flp = [p for p in profiles if p.label is Label.FLP]
    return mean_cos(llm), mean_cos(flp)


@dataclass
class CorpusDiagnostics:
    counts: dict[str, int]
    issues: list[str]

    @property
    def ok(self) -> bool:
        return not self.issues


_REQUIRED_KEYS = {"id", "label", "name", "location", "summary", "sections", "numeric"}
_SECTION_KEYS = {"education", "experience", "skills", "recommendations"}


def validate_corpus(path: str | Path) -> CorpusDiagnostics:
    """Schema conformance, class counts, and duplicate-id detection."""
    path = Path(path)
    counts: dict[str, int] = {label.value: 0 for label in Label}
    issues: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(f"line {lineno}: invalid JSON ({exc.msg})")
            continue
        pid = record.get("id", f"<line {lineno}>")
        missing = _REQUIRED_KEYS - set(record)
        if missing:
            issues.append(f"{pid}: missing keys {sorted(missing)}")
        if record.get("label") not in {label.value for label in Label}:
            issues.append(f"{pid}: unknown label {record.get('label')!r}")
        else:
            counts[record["label"]] += 1
        sections = record.get("sections", {})
        if isinstance(sections, dict):
            unknown = set(sections) - _SECTION_KEYS
            if unknown:
                issues.append(f"{pid}: unknown section keys {sorted(unknown)}")
        else:
            issues.append(f"{pid}: sections must be an object")
        numeric = record.get("numeric", {})
        if isinstance(numeric, dict):
            for key, value in numeric.items():
                if isinstance(value, bool) or not isinstance(value, int):
                    issues.append(f"{pid}: numeric attribute {key!r} is not an integer")
                elif value < 0:
                    issues.append(f"{pid}: numeric attribute {key!r} is negative")
        else:
            issues.append(f"{pid}: numeric must be an object")
        if isinstance(record.get("id"), str):
            if record["id"] in seen:
                issues.append(f"duplicate id: {record['id']}")
            seen.add(record["id"])
    return CorpusDiagnostics(counts=counts, issues=issues)
