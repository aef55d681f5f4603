"""Numeric feature extraction, train-only preprocessing, and feature fusion.

The numeric block is a fixed-order 17-vector (see FEATURE_NAMES). Text
features are the profile embedding reduced with PCA fitted on training
vectors only; the fused profile vector is text-then-numeric concatenation.
Ablation layouts pass through a single block.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Profile
from .embedding import SectionEmbeddingSet, SteVector, ste_aggregate

STD_FLOOR = 1e-12
DEFAULT_PCA_COMPONENTS = 150

#: Canonical order of the numeric feature block.
FEATURE_NAMES: tuple[str, ...] = (
    "job_count",
    "education_count",
    "skills_count",
    "recommendations_count",
    "followers",
    "connections",
    "summary_word_count",
    "summary_char_count",
    "name_token_count",
    "location_token_count",
    "total_experience_word_count",
    "total_education_word_count",
    "mean_words_per_job",
    "mean_words_per_education",
    "follower_connection_ratio",
    "sections_present_count",
    "has_summary_flag",
)

NUM_FEATURES = len(FEATURE_NAMES)


class FeatureError(Exception):
    """Fatal featurization problem (dimension mismatch, degenerate fit)."""


class Layout(str, Enum):
    """Which feature block feeds the classifier."""

    FUSED = "fused"
    TEXT_ONLY = "text"
    NUMERIC_ONLY = "numeric"

    @property
    def uses_text(self) -> bool:
        return self is not Layout.NUMERIC_ONLY

    @property
    def uses_numeric(self) -> bool:
        return self is not Layout.TEXT_ONLY


def extract_numeric(profile: Profile) -> np.ndarray:
    """Deterministic 17-vector of structural counts in FEATURE_NAMES order."""
    followers = float(profile.numeric_raw.get("followers", 0))
    connections = float(profile.numeric_raw.get("connections", 0))
    exp_words = sum(len(e.split()) for e in profile.experience)
    edu_words = sum(len(e.split()) for e in profile.education)
    n_jobs = len(profile.experience)
    n_edu = len(profile.education)
    values = np.array(
        [
            n_jobs,
            n_edu,
            len(profile.skills),
            len(profile.recommendations),
            followers,
            connections,
            len(profile.summary.split()),
            len(profile.summary),
            len(profile.name.split()),
            len(profile.location.split()),
            exp_words,
            edu_words,
            exp_words / n_jobs if n_jobs else 0.0,
            edu_words / n_edu if n_edu else 0.0,
            followers / connections if connections > 0 else 0.0,
            len(profile.sections),
            1.0 if profile.summary else 0.0,
        ],
        dtype=np.float64,
    )
    assert values.shape == (NUM_FEATURES,)
    return values


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-score parameters fitted on training data."""

    mean: np.ndarray
    std: np.ndarray  # population std, floored at STD_FLOOR


def fit_normalizer(train: Sequence[np.ndarray] | np.ndarray) -> Normalizer:
    rows = np.asarray(train, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise FeatureError("normalizer needs a non-empty 2-D training block")
    mean = rows.mean(axis=0)
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


def apply_normalizer(norm: Normalizer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != norm.mean.shape[0]:
        raise FeatureError(f"normalizer expects {norm.mean.shape[0]} dims, got {x.shape[-1]}")
    return (x - norm.mean) / norm.std


@dataclass(frozen=True)
class PcaModel:
    """Principal components of mean-centered training data (rows orthonormal)."""

    mean: np.ndarray
    components: np.ndarray            # (k, d)
    explained_variance: np.ndarray    # eigenvalues of the covariance, length k
    explained_variance_ratio: np.ndarray  # fractions of total variance, length k

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def fit_pca(train: Sequence[np.ndarray] | np.ndarray, k: int = DEFAULT_PCA_COMPONENTS) -> PcaModel:
    """Fit PCA via SVD of the centered data matrix.

    k clamps to min(d, n-1). The sign convention makes the largest-magnitude
    entry of each component positive, so fits are fully deterministic.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise FeatureError("PCA needs at least 2 training vectors")
    n, d = X.shape
    k_eff = max(1, min(k, d, n - 1))
    mean = X.mean(axis=0)
    centered = X - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = singular**2 / (n - 1)
    total = eigenvalues.sum()
    if total <= 0.0:
        raise FeatureError("PCA training data is degenerate (zero variance)")
    ratios = eigenvalues / total

    components = vt[:k_eff].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigenvalues[:k_eff].copy(),
        explained_variance_ratio=ratios[:k_eff].copy(),
    )


def transform_pca(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise FeatureError(f"PCA expects {model.mean.shape[0]} dims, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def variance_curve(model: PcaModel) -> list[tuple[int, float, float]]:
    """(component_index, ratio, cumulative) rows for the variance-curve report."""
    rows = []
    cumulative = 0.0
    for i, ratio in enumerate(model.explained_variance_ratio, start=1):
        cumulative += float(ratio)
        rows.append((i, float(ratio), cumulative))
    return rows


@dataclass(frozen=True)
class FeatureVector:
    profile_id: str
    values: np.ndarray
    layout: Layout


def fuse(
    text_part: np.ndarray | None,
    numeric_part: np.ndarray | None,
    layout: Layout,
    profile_id: str = "",
) -> FeatureVector:
    """Concatenate (or pass through) the feature blocks for one profile.

    Fused vectors put the text block first, so both parts are recoverable
    by slicing.
    """
    if layout.uses_numeric:
        if numeric_part is None or np.asarray(numeric_part).shape != (NUM_FEATURES,):
            raise FeatureError(f"layout {layout.value}: numeric part must have length {NUM_FEATURES}")
    if layout.uses_text:
        if text_part is None or np.asarray(text_part).ndim != 1 or len(text_part) == 0:
            raise FeatureError(f"layout {layout.value}: text part missing or not 1-D")

    if layout is Layout.NUMERIC_ONLY:
        values = np.asarray(numeric_part, dtype=np.float64).copy()
    elif layout is Layout.TEXT_ONLY:
        values = np.asarray(text_part, dtype=np.float64).copy()
    else:
        values = np.concatenate(
            [np.asarray(text_part, dtype=np.float64), np.asarray(numeric_part, dtype=np.float64)]
        )
    return FeatureVector(profile_id=profile_id, values=values, layout=layout)


@dataclass(frozen=True)
class FeatureState:
    """Preprocessing fitted on training profiles only."""

    layout: Layout
    normalizer: Normalizer | None
    pca: PcaModel | None


def _ste_values(profile_id: str, ste_by_id: Mapping[str, SteVector]) -> np.ndarray:
    try:
        return ste_by_id[profile_id].values
    except KeyError:
        raise FeatureError(f"no text embedding for profile {profile_id!r}") from None


def ste_vectors(embeddings: Mapping[str, SectionEmbeddingSet]) -> dict[str, SteVector]:
    """Aggregate every profile's section-embedding set into its text vector."""
    return {pid: ste_aggregate(emb) for pid, emb in embeddings.items()}


def fit_feature_state(
    train_profiles: Sequence[Profile],
    ste_by_id: Mapping[str, SteVector] | None,
    layout: Layout,
    k: int = DEFAULT_PCA_COMPONENTS,
) -> FeatureState:
    """Fit the normalizer and PCA basis on the training profiles only."""
    if not train_profiles:
        raise FeatureError("cannot fit preprocessing on an empty training set")
    normalizer = None
    if layout.uses_numeric:
        normalizer = fit_normalizer([extract_numeric(p) for p in train_profiles])
    pca = None
    if layout.uses_text:
        if ste_by_id is None:
            raise FeatureError(f"layout {layout.value} needs text embeddings")
        stes = [_ste_values(p.id, ste_by_id) for p in train_profiles]
        pca = fit_pca(stes, k=k)
    return FeatureState(layout=layout, normalizer=normalizer, pca=pca)


def build_features(
    profiles: Sequence[Profile],
    ste_by_id: Mapping[str, SteVector] | None,
    state: FeatureState,
) -> tuple[list[str], np.ndarray]:
    """Apply fitted preprocessing; returns (profile ids, feature matrix)."""
    ids = [p.id for p in profiles]
    parts: list[np.ndarray] = []
    if state.layout.uses_text:
        if ste_by_id is None or state.pca is None:
            raise FeatureError(f"layout {state.layout.value} needs text embeddings and a PCA basis")
        text = np.stack([_ste_values(pid, ste_by_id) for pid in ids]) if ids else np.zeros((0, 0))
        parts.append(transform_pca(state.pca, text))
    if state.layout.uses_numeric:
        if state.normalizer is None:
            raise FeatureError("numeric layout needs a fitted normalizer")
        numeric = np.stack([extract_numeric(p) for p in profiles]) if ids else np.zeros((0, NUM_FEATURES))
        parts.append(apply_normalizer(state.normalizer, numeric))
    if not ids:
        return ids, np.zeros((0, 0))
    return ids, np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]


def feature_vectors(
    profiles: Sequence[Profile],
    ste_by_id: Mapping[str, SteVector] | None,
    state: FeatureState,
) -> list[FeatureVector]:
    """build_features, wrapped per profile."""
    ids, X = build_features(profiles, ste_by_id, state)
    return [FeatureVector(profile_id=pid, values=row, layout=state.layout) for pid, row in zip(ids, X)]
