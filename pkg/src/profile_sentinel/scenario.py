"""Experiment orchestration: baseline training, attacks, and retraining.

The study matrix trains one detector per scenario composition and
evaluates it on fixed per-class test subsets:

    scenario          train composition                 test composition
    baseline          LLP 1260, FLP 420                 LLP 540, FLP 180
    gpt35_retrain     + GPT35P 840                      + GPT35P 360
    gpt4_retrain      + GPT4P 420                       + GPT4P 180
    gpt35p4_retrain   + GPT35P 840 + GPT4P 420          + both

Counts scale by a single factor for desk-scale runs. All scenarios share
one evaluation pool split, so the legit test subset is identical across
rows and no test profile ever reaches any fitting step (enforced by a
leakage guard). Every model is additionally evaluated on all four class
subsets; evaluating a model on a subset outside its training composition
is exactly the "attack" setting.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .corpus import Label, Profile, stratified_split
from .embedding import SectionEmbeddingSet, ste_aggregate
from .featurize import (
    DEFAULT_PCA_COMPONENTS,
    FeatureState,
    Layout,
    build_features,
    fit_feature_state,
)
from .learn import DetectorModel, train_classifier
from .manifest import derive_seed
from .metrics import MetricReport, Prediction, evaluate, predictions_from_proba
from . import tune as tune_mod

log = logging.getLogger(__name__)


class ScenarioError(Exception):
    """Infeasible scenario (insufficient corpus, bad composition)."""


class LeakageError(ScenarioError):
    """A test profile reached a fitting step."""


class EncoderMismatchError(ScenarioError):
    """Model and embeddings disagree on the encoder."""


class EmptySetError(ScenarioError):
    """Evaluation requested on an empty subset."""


class ScenarioName(str, Enum):
    BASELINE = "baseline"
    GPT35_RETRAIN = "gpt35_retrain"
    GPT4_RETRAIN = "gpt4_retrain"
    GPT35P4_RETRAIN = "gpt35p4_retrain"


#: Canonical per-class compositions (scale 1.0).
CANONICAL_TRAIN: dict[ScenarioName, dict[Label, int]] = {
    ScenarioName.BASELINE: {Label.LLP: 1260, Label.FLP: 420},
    ScenarioName.GPT35_RETRAIN: {Label.LLP: 1260, Label.FLP: 420, Label.GPT35P: 840},
    ScenarioName.GPT4_RETRAIN: {Label.LLP: 1260, Label.FLP: 420, Label.GPT4P: 420},
    ScenarioName.GPT35P4_RETRAIN: {
        Label.LLP: 1260, Label.FLP: 420, Label.GPT35P: 840, Label.GPT4P: 420
    },
}

CANONICAL_TEST: dict[ScenarioName, dict[Label, int]] = {
    ScenarioName.BASELINE: {Label.LLP: 540, Label.FLP: 180},
    ScenarioName.GPT35_RETRAIN: {Label.LLP: 540, Label.FLP: 180, Label.GPT35P: 360},
    ScenarioName.GPT4_RETRAIN: {Label.LLP: 540, Label.FLP: 180, Label.GPT4P: 180},
    ScenarioName.GPT35P4_RETRAIN: {
        Label.LLP: 540, Label.FLP: 180, Label.GPT35P: 360, Label.GPT4P: 180
    },
}


@dataclass(frozen=True)
class ScenarioSpec:
    name: ScenarioName
    train_counts: Mapping[Label, int]
    test_counts: Mapping[Label, int]
    layout: Layout = Layout.FUSED
    encoder: str = "hashed-64"
    classifier: str = "gbdt"
    classifier_name: str = ""
    params: Mapping | None = None
    tune: str | None = None  # None | "bo" | "ga"
    seed: int = 0
    pca_components: int = DEFAULT_PCA_COMPONENTS

    @property
    def classifier_label(self) -> str:
        return self.classifier_name or self.classifier


def scaled_counts(counts: Mapping[Label, int], scale: float) -> dict[Label, int]:
    out = {}
    for label, count in counts.items():
        scaled = int(round(count * scale))
        if scaled < 1:
            raise ScenarioError(f"scale {scale} drops class {label.value} below 1 profile")
        out[label] = scaled
    return out


def canonical_spec(
    name: ScenarioName,
    scale: float = 1.0,
    **overrides,
) -> ScenarioSpec:
    """Table-composition spec for a scenario, optionally scaled."""
    return ScenarioSpec(
        name=name,
        train_counts=scaled_counts(CANONICAL_TRAIN[name], scale),
        test_counts=scaled_counts(CANONICAL_TEST[name], scale),
        **overrides,
    )


@dataclass(frozen=True)
class EvalPool:
    """Shared train/test id pools, split once per grid."""

    train_ids: Mapping[Label, tuple[str, ...]]
    test_ids: Mapping[Label, tuple[str, ...]]
    seed: int


def build_pool(
    profiles: Sequence[Profile],
    train_counts: Mapping[Label, int],
    test_counts: Mapping[Label, int],
    seed: int,
) -> EvalPool:
    labels = sorted(set(train_counts) | set(test_counts), key=list(Label).index)
    counts = {
        label: (train_counts.get(label, 0), test_counts.get(label, 0)) for label in labels
    }
    split = stratified_split(profiles, counts, seed)
    by_id = {p.id: p.label for p in profiles}
    train_ids: dict[Label, list[str]] = {label: [] for label in labels}
    test_ids: dict[Label, list[str]] = {label: [] for label in labels}
    for pid in split.train:
        train_ids[by_id[pid]].append(pid)
    for pid in split.test:
        test_ids[by_id[pid]].append(pid)
    return EvalPool(
        train_ids={k: tuple(v) for k, v in train_ids.items()},
        test_ids={k: tuple(v) for k, v in test_ids.items()},
        seed=seed,
    )


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    subset_reports: dict[str, MetricReport]
    pooled: MetricReport
    model: DetectorModel
    pooled_predictions: list[Prediction] = field(default_factory=list)
    pooled_truth: list[int] = field(default_factory=list)

    def llm_far(self) -> float | None:
        """Count-weighted FAR over the LLM-like test subsets."""
        fn = n = 0
        for label in (Label.GPT35P, Label.GPT4P):
            report = self.subset_reports.get(label.value)
            if report is not None and report.far is not None:
                fn += report.far * report.n
                n += report.n
        return fn / n if n else None


def _ste_for(
    profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
    encoder: str,
) -> dict:
    out = {}
    for p in profiles:
        emb = embeddings.get(p.id)
        if emb is None:
            raise ScenarioError(f"no embeddings for profile {p.id!r}")
        if emb.encoder_name != encoder:
            raise EncoderMismatchError(
                f"profile {p.id!r}: embeddings from {emb.encoder_name!r}, expected {encoder!r}"
            )
        out[p.id] = ste_aggregate(emb)
    return out


def _labels_of(profiles: Sequence[Profile]) -> np.ndarray:
    return np.array([1 if p.label.is_fake else 0 for p in profiles], dtype=int)


def _tune_params(
    spec: ScenarioSpec,
    X: np.ndarray,
    y: np.ndarray,
) -> dict:
    space = tune_mod.search_space_for(spec.classifier)
    trainer = _trainer_for(spec.classifier)
    seed = derive_seed(spec.seed, f"tune:{spec.name.value}")
    val_objective = tune_mod.make_val_objective(X, y, trainer, seed=seed)
    if spec.tune == "bo":
        cv_obj = tune_mod.make_cv_objective(X, y, trainer, seed=seed)
        result = tune_mod.tune_bo(space, val_objective, seed=seed, cv_objective=cv_obj)
    elif spec.tune == "ga":
        result = tune_mod.tune_ga(space, val_objective, seed=seed)
    else:
        raise ScenarioError(f"unknown tune directive {spec.tune!r}")
    log.info("tuned %s/%s: %s", spec.name.value, spec.classifier, result.best.params)
    return dict(result.best.params)


def _trainer_for(kind: str):
    def trainer(X: np.ndarray, y: np.ndarray, params: dict, seed: int):
        return train_classifier(kind, X, y, params, seed=seed)

    return trainer


def fit_detector(
    spec: ScenarioSpec,
    train_profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
) -> DetectorModel:
    """Fit preprocessing and classifier on training profiles only."""
    ste = _ste_for(train_profiles, embeddings, spec.encoder) if spec.layout.uses_text else None
    state = fit_feature_state(train_profiles, ste, spec.layout, k=spec.pca_components)
    _, X = build_features(train_profiles, ste, state)
    y = _labels_of(train_profiles)
    params = dict(spec.params) if spec.params else {}
    if spec.tune:
        params = _tune_params(spec, X, y)
    classifier = train_classifier(
        spec.classifier, X, y, params, seed=derive_seed(spec.seed, f"train:{spec.name.value}")
    )
    return DetectorModel(
        layout=spec.layout,
        encoder=spec.encoder,
        normalizer=state.normalizer,
        pca=state.pca,
        classifier_kind=spec.classifier,
        classifier_params=params,
        classifier=classifier,
    )


def predict_profiles(
    model: DetectorModel,
    profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
) -> list[Prediction]:
    ste = _ste_for(profiles, embeddings, model.encoder) if model.layout.uses_text else None
    state = FeatureState(layout=model.layout, normalizer=model.normalizer, pca=model.pca)
    ids, X = build_features(profiles, ste, state)
    return predictions_from_proba(ids, model.predict_proba(X))


def run_attack(
    model: DetectorModel,
    profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
    subset: str = "",
) -> MetricReport:
    """Pure evaluation of a trained model on one test subset. No refitting."""
    if not profiles:
        raise EmptySetError(f"empty test subset {subset!r}")
    preds = predict_profiles(model, profiles, embeddings)
    return evaluate(preds, _labels_of(profiles), subset=subset)


def run_scenario(
    spec: ScenarioSpec,
    profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
    pool: EvalPool | None = None,
) -> ScenarioResult:
    """Train under a scenario composition and evaluate per subset and pooled."""
    by_id = {p.id: p for p in profiles}
    if pool is None:
        pool = build_pool(profiles, spec.train_counts, spec.test_counts,
                          seed=derive_seed(spec.seed, "pool"))

    train_ids: list[str] = []
    for label in Label:
        want = spec.train_counts.get(label, 0)
        if not want:
            continue
        have = pool.train_ids.get(label, ())
        if len(have) < want:
            raise ScenarioError(
                f"scenario {spec.name.value}: pool has {len(have)} train {label.value}, needs {want}"
            )
        train_ids.extend(have[:want])

    all_test_ids = [pid for ids in pool.test_ids.values() for pid in ids]
    overlap = set(train_ids) & set(all_test_ids)
    if overlap:
        raise LeakageError(f"test ids present in fitting inputs: {sorted(overlap)[:5]}")

    train_profiles = [by_id[pid] for pid in train_ids]
    model = fit_detector(spec, train_profiles, embeddings)

    subset_reports: dict[str, MetricReport] = {}
    pooled_preds: list[Prediction] = []
    pooled_truth: list[int] = []
    for label in Label:
        ids = pool.test_ids.get(label, ())
        if not ids:
            continue
        subset_profiles = [by_id[pid] for pid in ids]
        preds = predict_profiles(model, subset_profiles, embeddings)
        subset_reports[label.value] = evaluate(preds, _labels_of(subset_profiles), subset=label.value)
        want = spec.test_counts.get(label, 0)
        if want:
            if len(ids) < want:
                raise ScenarioError(
                    f"scenario {spec.name.value}: pool has {len(ids)} test {label.value}, needs {want}"
                )
            pooled_preds.extend(preds[:want])
            pooled_truth.extend(_labels_of(subset_profiles[:want]))

    if not pooled_preds:
        raise EmptySetError(f"scenario {spec.name.value}: empty pooled test composition")
    pooled = evaluate(pooled_preds, pooled_truth, subset="pooled")
    return ScenarioResult(
        spec=spec,
        subset_reports=subset_reports,
        pooled=pooled,
        model=model,
        pooled_predictions=pooled_preds,
        pooled_truth=pooled_truth,
    )


# ---------------------------------------------------------------------------
# Grid execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    name: str = ""
    params: Mapping | None = None
    tune: str | None = None

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass(frozen=True)
class GridRow:
    train_scenario: str
    test_subset: str
    encoder: str
    classifier: str
    layout: str
    f1: float | None
    far: float | None
    frr: float | None
    brier: float | None
    n: int


@dataclass
class GridResult:
    rows: list[GridRow]
    pooled: list[GridRow]
    failures: list[tuple[str, str]]
    results: dict[tuple[str, str, str], ScenarioResult]

    def brier_far_series(self) -> tuple[list[float], list[float]]:
        """Pooled Brier vs LLM-like FAR across grid cells (calibration linkage)."""
        briers, fars = [], []
        for result in self.results.values():
            far = result.llm_far()
            if far is None or result.pooled.brier is None:
                continue
            briers.append(result.pooled.brier)
            fars.append(far)
        return briers, fars


def _row_from_report(spec: ScenarioSpec, report: MetricReport) -> GridRow:
    return GridRow(
        train_scenario=spec.name.value,
        test_subset=report.subset,
        encoder=spec.encoder,
        classifier=spec.classifier_label,
        layout=spec.layout.value,
        f1=report.f1,
        far=report.far,
        frr=report.frr,
        brier=report.brier,
        n=report.n,
    )


def run_grid(
    specs: Sequence[ScenarioSpec],
    layouts: Sequence[Layout],
    classifiers: Sequence[ClassifierSpec],
    profiles: Sequence[Profile],
    embeddings: Mapping[str, SectionEmbeddingSet],
    seed: int = 0,
    jobs: int = 1,
) -> GridResult:
    """Cartesian product of scenarios x layouts x classifiers.

    Cells run independently (optionally in threads) against one shared
    evaluation pool; results merge by key, so the grid is deterministic
    regardless of worker count. A failing cell is recorded and skipped.
    """
    train_max: dict[Label, int] = {}
    test_max: dict[Label, int] = {}
    for spec in specs:
        for label, count in spec.train_counts.items():
            train_max[label] = max(train_max.get(label, 0), count)
        for label, count in spec.test_counts.items():
            test_max[label] = max(test_max.get(label, 0), count)
    pool = build_pool(profiles, train_max, test_max, seed=derive_seed(seed, "pool"))

    cells: list[ScenarioSpec] = []
    for spec in specs:
        for layout in layouts:
            for clf in classifiers:
                cells.append(
                    replace(
                        spec,
                        layout=layout,
                        classifier=clf.kind,
                        classifier_name=clf.label,
                        params=clf.params if clf.params is not None else spec.params,
                        tune=clf.tune if clf.tune is not None else spec.tune,
                    )
                )

    def execute(cell: ScenarioSpec):
        return run_scenario(cell, profiles, embeddings, pool=pool)

    outcomes: list[tuple[ScenarioSpec, ScenarioResult | Exception]] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            futures = [pool_exec.submit(execute, cell) for cell in cells]
            for cell, future in zip(cells, futures):
                try:
                    outcomes.append((cell, future.result()))
                except Exception as exc:  # cell failure must not kill the grid
                    outcomes.append((cell, exc))
    else:
        for cell in cells:
            try:
                outcomes.append((cell, execute(cell)))
            except Exception as exc:
                outcomes.append((cell, exc))

    rows: list[GridRow] = []
    pooled: list[GridRow] = []
    failures: list[tuple[str, str]] = []
    results: dict[tuple[str, str, str], ScenarioResult] = {}
    for cell, outcome in outcomes:
        key = (cell.name.value, cell.layout.value, cell.classifier_label)
        if isinstance(outcome, Exception):
            failures.append(("/".join(key), f"{type(outcome).__name__}: {outcome}"))
            log.warning("grid cell %s failed: %s", key, outcome)
            continue
        results[key] = outcome
        for label in Label:
            report = outcome.subset_reports.get(label.value)
            if report is not None:
                rows.append(_row_from_report(cell, report))
        pooled.append(_row_from_report(cell, outcome.pooled))

    subset_order = {label.value: i for i, label in enumerate(Label)}
    scenario_order = {name.value: i for i, name in enumerate(ScenarioName)}
    sort_key = lambda r: (  # noqa: E731
        scenario_order.get(r.train_scenario, 99),
        r.layout,
        r.classifier,
        subset_order.get(r.test_subset, 99),
    )
    rows.sort(key=sort_key)
    pooled.sort(key=sort_key)
    failures.sort()
    return GridResult(rows=rows, pooled=pooled, failures=failures, results=results)
