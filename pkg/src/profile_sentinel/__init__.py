"""Fake professional-profile detection on fused text + numeric features.

The pipeline: parse and clean profile corpora, embed section text (built-in
word vectors or external precomputed vectors), aggregate per-section
embeddings into one profile vector, reduce with train-fitted PCA, fuse with
17 normalized structural features, train calibrated-comparable classifiers,
and reproduce the adversarial study (baseline collapse on LLM-like fakes,
recovery after adversarial retraining) on seeded synthetic corpora.
"""

from .corpus import (
    CorpusError,
    CorpusSplit,
    Label,
    Profile,
    Rejection,
    Section,
    clean_profile,
    load_corpus,
    stratified_split,
    write_corpus,
)
from .embedding import (
    SectionEmbeddingSet,
    SteVector,
    WordVectorTable,
    embed_corpus,
    embed_profile,
    embed_section,
    hashed_table,
    ingest_external_embeddings,
    load_word_vectors,
    ste_aggregate,
    table_for_profiles,
    write_embeddings,
)
from .featurize import (
    FEATURE_NAMES,
    FeatureVector,
    Layout,
    Normalizer,
    PcaModel,
    apply_normalizer,
    extract_numeric,
    fit_normalizer,
    fit_pca,
    fuse,
    transform_pca,
)
from .learn import (
    DetectorModel,
    GbdtModel,
    GbdtParams,
    KnnModel,
    LogRegModel,
    load_model,
    save_model,
    train_gbdt,
    train_knn,
    train_logreg,
)
from .metrics import (
    CalibrationCurve,
    ConfusionCounts,
    MetricReport,
    Prediction,
    brier,
    confusion,
    metrics,
    pearson,
    reliability,
)
from .scenario import (
    ClassifierSpec,
    EvalPool,
    GridResult,
    ScenarioName,
    ScenarioResult,
    ScenarioSpec,
    build_pool,
    canonical_spec,
    run_attack,
    run_grid,
    run_scenario,
)
from .synthgen import GenConfig, GenReport, generate, validate_corpus
from .tune import SearchSpace, Trial, TuneBudget, cv_objective, tune_bo, tune_ga

__version__ = "0.1.0"
