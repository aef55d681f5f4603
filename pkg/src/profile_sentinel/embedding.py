"""Section embeddings and the section-tag profile embedding.

A profile's text embedding is the mean, over its present sections, of the
section-text embedding minus the embedding of the section's tag:

    F = (1/N) * sum_j (E_j - Em(Tag_j))

where E_j embeds the j-th section's concatenated text, Em(Tag_j) embeds its
tag word, and N is the number of present sections.

Two encoder routes produce the per-section vectors:

* built-in static word vectors: mean of in-vocabulary token vectors, with a
  GloVe-format text loader and a deterministic hashed fallback table that
  needs no external files;
* external precomputed vectors ingested from a JSONL interchange file,
  one record per profile:
  {"profile_id": str, "encoder": str,
   "sections": [{"tag": str, "e": [..], "em_tag": [..]}]}.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .corpus import Profile, Rejection, TAGS

log = logging.getLogger(__name__)

# Tokens are runs of Unicode word characters (underscore excluded).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_HASHED_DIM = 64


class WordVectorError(Exception):
    """Fatal word-vector file problem (bad dims, empty table)."""


class EmbeddingError(Exception):
    """Fatal embedding-set problem (dimension mismatch, empty set)."""


@dataclass(frozen=True)
class WordVectorTable:
    name: str
    dim: int
    vectors: Mapping[str, np.ndarray]


class EmbeddedText(NamedTuple):
    vector: np.ndarray
    all_oov: bool


@dataclass(frozen=True)
class SectionItem:
    tag: str
    e: np.ndarray
    em_tag: np.ndarray


@dataclass(frozen=True)
class SectionEmbeddingSet:
    profile_id: str
    encoder_name: str
    items: tuple[SectionItem, ...]


@dataclass(frozen=True)
class SteVector:
    profile_id: str
    values: np.ndarray


@dataclass
class IngestResult:
    sets: list[SectionEmbeddingSet]
    rejections: list[Rejection]


def tokenize(text: str) -> list[str]:
    """Lowercase and split on Unicode whitespace/punctuation. No stemming."""
    return _TOKEN_RE.findall(text.lower())


def load_word_vectors(path: str | Path) -> WordVectorTable:
    """Load a GloVe-format table: one token per line, then its components.

    A duplicate token wins with a warning; an inconsistent vector length is
    fatal and reports the offending line number.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise WordVectorError(f"{path}: line {lineno}: token with no components")
            if len(values) != dim:
                raise WordVectorError(
                    f"{path}: line {lineno}: expected {dim} components, got {len(values)}"
                )
            if token in vectors:
                log.warning("word-vector table %s: duplicate token %r (last wins)", path, token)
            vectors[token] = np.asarray([float(v) for v in values], dtype=np.float64)
    if dim is None or not vectors:
        raise WordVectorError(f"{path}: empty word-vector table")
    return WordVectorTable(name=f"wordvec:{path.stem}", dim=dim, vectors=vectors)


def _hashed_token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    return rng.standard_normal(dim)


def hashed_table(tokens: Iterable[str], dim: int = DEFAULT_HASHED_DIM) -> WordVectorTable:
    """Deterministic fallback table: each token gets a hash-seeded Gaussian vector.

    Carries no semantics, but text overlap maps to cosine similarity, which
    is exactly what the synthetic corpora manipulate. Purely a function of
    the token strings and `dim`.
    """
    vectors = {token: _hashed_token_vector(token, dim) for token in set(tokens)}
    if not vectors:
        raise WordVectorError("empty token set for hashed table")
    return WordVectorTable(name=f"hashed-{dim}", dim=dim, vectors=vectors)


def table_for_profiles(profiles: Iterable[Profile], dim: int = DEFAULT_HASHED_DIM) -> WordVectorTable:
    """Hashed table over a corpus vocabulary plus the section tag words."""
    vocab: set[str] = set(tag.lower() for tag in TAGS)
    for profile in profiles:
        for section in profile.sections:
            vocab.update(tokenize(section.text))
    return hashed_table(vocab, dim=dim)


def embed_section(text: str, table: WordVectorTable) -> EmbeddedText:
    """Mean of in-vocabulary token vectors; zero vector + flag when all OOV."""
    tokens = tokenize(text)
    rows = [table.vectors[t] for t in tokens if t in table.vectors]
    if not rows:
        return EmbeddedText(np.zeros(table.dim, dtype=np.float64), True)
    return EmbeddedText(np.mean(rows, axis=0, dtype=np.float64), False)


def embed_profile(profile: Profile, table: WordVectorTable) -> SectionEmbeddingSet:
    """Per-section embeddings for one profile under the built-in encoder.

    The tag embedding is the embedding of the tag word itself. All-OOV
    sections still contribute (0 - Em(tag)), keeping N equal to the number
    of present sections.
    """
    items = []
    for section in profile.sections:
        e = embed_section(section.text, table).vector
        em = embed_section(section.tag.lower(), table).vector
        items.append(SectionItem(tag=section.tag, e=e, em_tag=em))
    return SectionEmbeddingSet(profile_id=profile.id, encoder_name=table.name, items=tuple(items))


def ste_aggregate(emb_set: SectionEmbeddingSet) -> SteVector:
    """Aggregate one profile's sections: F = (1/N) * sum_j (E_j - Em(Tag_j))."""
    if not emb_set.items:
        raise EmbeddingError(f"profile {emb_set.profile_id}: no sections to aggregate")
    dims = {item.e.shape for item in emb_set.items} | {item.em_tag.shape for item in emb_set.items}
    if len(dims) != 1:
        raise EmbeddingError(f"profile {emb_set.profile_id}: mixed embedding dimensions {sorted(dims)}")
    stacked_e = np.stack([item.e for item in emb_set.items])
    stacked_em = np.stack([item.em_tag for item in emb_set.items])
    values = np.mean(stacked_e - stacked_em, axis=0)
    if not np.all(np.isfinite(values)):
        raise EmbeddingError(f"profile {emb_set.profile_id}: non-finite aggregate")
    return SteVector(profile_id=emb_set.profile_id, values=values)


def embed_corpus(profiles: Iterable[Profile], table: WordVectorTable) -> dict[str, SectionEmbeddingSet]:
    """Embed every profile; returns a mapping keyed by profile id."""
    return {p.id: embed_profile(p, table) for p in profiles}


def write_embeddings(sets: Iterable[SectionEmbeddingSet], path: str | Path) -> None:
    """Write embedding sets in the JSONL interchange format. Byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for emb_set in sets:
            record = {
                "profile_id": emb_set.profile_id,
                "encoder": emb_set.encoder_name,
                "sections": [
                    {"tag": item.tag, "e": item.e.tolist(), "em_tag": item.em_tag.tolist()}
                    for item in emb_set.items
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")


def _parse_interchange_record(raw: dict) -> SectionEmbeddingSet | str:
    profile_id = raw.get("profile_id")
    if not isinstance(profile_id, str) or not profile_id:
        return "missing profile_id"
    encoder = raw.get("encoder")
    if not isinstance(encoder, str) or not encoder:
        return "missing encoder"
    sections = raw.get("sections")
    if not isinstance(sections, list) or not sections:
        return "missing sections"

    items: list[SectionItem] = []
    dim: int | None = None
    seen_tags: set[str] = set()
    for entry in sections:
        tag = entry.get("tag")
        if tag not in TAGS:
            return f"unknown tag {tag!r}"
        if tag in seen_tags:
            return f"duplicate tag {tag!r}"
        seen_tags.add(tag)
        if "em_tag" not in entry:
            return f"section {tag!r} has no tag vector"
        if "e" not in entry:
            return f"section {tag!r} has no text vector"
        e = np.asarray(entry["e"], dtype=np.float64)
        em = np.asarray(entry["em_tag"], dtype=np.float64)
        if e.ndim != 1 or em.ndim != 1:
            return f"section {tag!r} vectors must be flat lists"
        for vec in (e, em):
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                return f"mixed dimensions ({dim} vs {vec.shape[0]})"
        items.append(SectionItem(tag=tag, e=e, em_tag=em))
    return SectionEmbeddingSet(profile_id=profile_id, encoder_name=encoder, items=tuple(items))


def ingest_external_embeddings(path: str | Path) -> IngestResult:
    """Read precomputed section embeddings from the interchange JSONL file.

    Bad records (missing tag vectors, mixed dimensions, duplicate profile
    ids) are rejected with diagnostics; good records become one
    SectionEmbeddingSet each.
    """
    path = Path(path)
    sets: list[SectionEmbeddingSet] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                rejections.append(Rejection(None, "ParseError", f"line {lineno}: {exc.msg}"))
                continue
            parsed = _parse_interchange_record(raw)
            if isinstance(parsed, str):
                record_id = raw.get("profile_id") if isinstance(raw.get("profile_id"), str) else None
                rejections.append(Rejection(record_id, "MalformedEmbedding", f"line {lineno}: {parsed}"))
                continue
            if parsed.profile_id in seen:
                rejections.append(Rejection(parsed.profile_id, "Duplicate", f"line {lineno}: duplicate profile_id"))
                continue
            seen.add(parsed.profile_id)
            sets.append(parsed)
    return IngestResult(sets=sets, rejections=rejections)
