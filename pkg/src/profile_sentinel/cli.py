"""Command-line front for the detection pipeline.

One verb per pipeline stage (generate, embed, train, tune, scenario,
report) plus `all`, which chains generate -> embed -> scenario -> report
for a quickstart run. Every invocation writes a RunManifest under --out,
even on failure. Validation failures exit 1 with a machine-readable error
JSON on stderr; usage errors exit 2. The PROFILE_SENTINEL_LOG environment
variable sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import embedding as emb_mod
from . import learn as learn_mod
from . import metrics as metrics_mod
from . import reports as reports_mod
from . import scenario as scenario_mod
from . import synthgen as synth_mod
from . import tune as tune_mod
from .featurize import FeatureError, Layout, fit_feature_state, build_features
from .manifest import RunManifest, derive_seed
from .metrics import MetricError
from .scenario import ClassifierSpec, ScenarioName

log = logging.getLogger(__name__)

_FAILURE_TYPES = (
    corpus_mod.CorpusError,
    emb_mod.WordVectorError,
    emb_mod.EmbeddingError,
    FeatureError,
    learn_mod.TrainingError,
    learn_mod.ModelFormatError,
    learn_mod.ModelVersionError,
    MetricError,
    tune_mod.TuneError,
    scenario_mod.ScenarioError,
    synth_mod.GenError,
    reports_mod.ReportError,
    OSError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)


class CliError(Exception):
    """Validation failure surfaced to the user (exit code 1)."""


def _configure_logging() -> None:
    level = os.environ.get("PROFILE_SENTINEL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="profile-sentinel",
        description="Fake-profile detection pipeline: synthesis, embeddings, training, "
                    "adversarial scenarios, and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, seed_default: int | None = 0) -> None:
        p.add_argument("--out", required=True, help="output directory")
        if seed_default is not None:
            p.add_argument("--seed", type=int, default=seed_default, help="master seed")

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    p.add_argument("--config", help="GenConfig JSON (counts, llm_similarity, numeric)")
    add_common(p)
    p.add_argument("--scale", type=float, default=None,
                   help="scale the canonical study composition instead of config counts")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", help="compute section embeddings for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--word-vectors", help="GloVe-format table; default is the built-in hashed encoder")
    add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="train one detector on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", help="precomputed embedding interchange JSONL")
    p.add_argument("--word-vectors")
    p.add_argument("--config", help="classifier params JSON")
    p.add_argument("--layout", choices=[l.value for l in Layout], default="fused")
    p.add_argument("--classifier", choices=list(learn_mod.CLASSIFIER_KINDS), default="gbdt")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperparameter search on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--word-vectors")
    p.add_argument("--layout", choices=[l.value for l in Layout], default="fused")
    p.add_argument("--classifier", choices=list(learn_mod.CLASSIFIER_KINDS), default="gbdt")
    p.add_argument("--tuner", choices=["bo", "ga"], default="bo")
    add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("scenario", help="run a scenario grid from a config file")
    p.add_argument("--config", required=True, help="grid config JSON")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--word-vectors")
    p.add_argument("--scale", type=float, default=None, help="override the config scale")
    p.add_argument("--jobs", type=int, default=1, help="max parallel grid cells")
    add_common(p, seed_default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("report", help="render SVG reports from result CSVs")
    p.add_argument("--results", required=True, help="directory holding grid/calibration/variance CSVs")
    add_common(p, seed_default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", help="generate -> embed -> scenario -> report")
    add_common(p)
    p.add_argument("--scale", type=float, default=1.0 / 6.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_all)
    return parser


# ---------------------------------------------------------------------------
# Shared input handling
# ---------------------------------------------------------------------------

def _read_json(path: str | Path) -> dict:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise CliError(f"{path}: expected a JSON object")
    return raw


def _load_profiles(path: str, manifest: RunManifest) -> list[corpus_mod.Profile]:
    manifest.record_input(path)
    result = corpus_mod.load_corpus(path)
    for rejection in result.rejections:
        log.warning("rejected record %s: %s (%s)", rejection.record_id, rejection.reason,
                    rejection.detail)
    if not result.profiles:
        raise CliError(f"{path}: no usable profiles")
    return result.profiles


def _embeddings_for(args, profiles, manifest: RunManifest):
    """Resolve (embedding map, encoder name) from flags, defaulting to hashed vectors."""
    if getattr(args, "embeddings", None):
        manifest.record_input(args.embeddings)
        result = emb_mod.ingest_external_embeddings(args.embeddings)
        for rejection in result.rejections:
            log.warning("rejected embedding record %s: %s (%s)", rejection.record_id,
                        rejection.reason, rejection.detail)
        if not result.sets:
            raise CliError(f"{args.embeddings}: no usable embedding records")
        encoders = {s.encoder_name for s in result.sets}
        if len(encoders) > 1:
            raise CliError(f"{args.embeddings}: mixed encoders {sorted(encoders)}")
        return {s.profile_id: s for s in result.sets}, encoders.pop()
    if getattr(args, "word_vectors", None):
        manifest.record_input(args.word_vectors)
        table = emb_mod.load_word_vectors(args.word_vectors)
    else:
        table = emb_mod.table_for_profiles(profiles)
    return emb_mod.embed_corpus(profiles, table), table.name


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args, manifest: RunManifest) -> list[Path]:
    out = Path(args.out)
    if args.config:
        manifest.config_paths.append(args.config)
        manifest.record_input(args.config)
        config = synth_mod.GenConfig.from_dict(_read_json(args.config))
        config = synth_mod.GenConfig(
            counts=config.counts, llm_similarity=config.llm_similarity,
            seed=args.seed, pools=config.pools, numeric=config.numeric,
        )
    else:
        counts = dict(synth_mod.DEFAULT_COUNTS)
        if args.scale is not None:
            totals = {}
            for name in ScenarioName:
                for label, c in scenario_mod.CANONICAL_TRAIN[name].items():
                    totals[label] = max(totals.get(label, 0), c)
                for label, c in scenario_mod.CANONICAL_TEST[name].items():
                    totals[label] = totals.get(label, 0)  # ensure key
            totals = {
                label: scenario_mod.CANONICAL_TRAIN[ScenarioName.GPT35P4_RETRAIN].get(label, 0)
                + scenario_mod.CANONICAL_TEST[ScenarioName.GPT35P4_RETRAIN].get(label, 0)
                for label in corpus_mod.Label
            }
            counts = {label: max(1, int(round(c * args.scale))) for label, c in totals.items()}
        config = synth_mod.GenConfig(counts=counts, seed=args.seed)

    corpus_path = out / "corpus.jsonl"
    _, report = synth_mod.generate(config, corpus_path)
    report_path = out / "gen_report.json"
    with report_path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    diagnostics = synth_mod.validate_corpus(corpus_path)
    for issue in diagnostics.issues:
        log.warning("corpus diagnostic: %s", issue)
    return [corpus_path, report_path]


def cmd_embed(args, manifest: RunManifest) -> list[Path]:
    profiles = _load_profiles(args.corpus, manifest)
    emb_map, _ = _embeddings_for(args, profiles, manifest)
    out_path = Path(args.out) / "embeddings.jsonl"
    emb_mod.write_embeddings([emb_map[p.id] for p in profiles], out_path)
    return [out_path]


def _fit_state_and_features(args, profiles, manifest, seed):
    emb_map, encoder = _embeddings_for(args, profiles, manifest)
    layout = Layout(args.layout)
    ste = None
    if layout.uses_text:
        ste = {pid: emb_mod.ste_aggregate(e) for pid, e in emb_map.items()}
    state = fit_feature_state(profiles, ste, layout)
    ids, X = build_features(profiles, ste, state)
    y = np.array([1 if p.label.is_fake else 0 for p in profiles], dtype=int)
    return emb_map, encoder, layout, state, ids, X, y


def cmd_train(args, manifest: RunManifest) -> list[Path]:
    profiles = _load_profiles(args.corpus, manifest)
    params = {}
    if args.config:
        manifest.config_paths.append(args.config)
        manifest.record_input(args.config)
        params = _read_json(args.config)
    _, encoder, layout, state, ids, X, y = _fit_state_and_features(
        args, profiles, manifest, args.seed
    )
    classifier = learn_mod.train_classifier(
        args.classifier, X, y, params, seed=derive_seed(args.seed, "train")
    )
    model = learn_mod.DetectorModel(
        layout=layout, encoder=encoder, normalizer=state.normalizer, pca=state.pca,
        classifier_kind=args.classifier, classifier_params=params, classifier=classifier,
    )
    out = Path(args.out)
    model_path = out / "model.json"
    learn_mod.save_model(model, model_path)

    preds = metrics_mod.predictions_from_proba(ids, model.predict_proba(X))
    report = metrics_mod.evaluate(preds, y, subset="train")
    metrics_path = out / "metrics.csv"
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    with metrics_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subset", "f1", "far", "frr", "brier", "n"])
        writer.writerow([
            report.subset,
            *("NA" if v is None else f"{v:.6f}" for v in (report.f1, report.far, report.frr, report.brier)),
            report.n,
        ])
    curve = metrics_mod.reliability(preds, y)
    calibration_path = out / "calibration.csv"
    reports_mod.write_calibration_csv(curve, calibration_path)
    written = [model_path, metrics_path, calibration_path]
    if state.pca is not None:
        variance_path = out / "variance.csv"
        reports_mod.write_variance_csv(state.pca, variance_path)
        written.append(variance_path)
    return written


def cmd_tune(args, manifest: RunManifest) -> list[Path]:
    profiles = _load_profiles(args.corpus, manifest)
    _, _, _, _, _, X, y = _fit_state_and_features(args, profiles, manifest, args.seed)
    space = tune_mod.search_space_for(args.classifier)
    trainer = scenario_mod._trainer_for(args.classifier)
    seed = derive_seed(args.seed, "tune")
    val_obj = tune_mod.make_val_objective(X, y, trainer, seed=seed)
    if args.tuner == "bo":
        cv_obj = tune_mod.make_cv_objective(X, y, trainer, seed=seed)
        result = tune_mod.tune_bo(space, val_obj, seed=seed, cv_objective=cv_obj)
    else:
        result = tune_mod.tune_ga(space, val_obj, seed=seed)
    out = Path(args.out)
    best_path = out / "best_params.json"
    best_path.parent.mkdir(parents=True, exist_ok=True)
    with best_path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump({"params": result.best.params, "objective": result.best.objective},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    log_path = out / "tuning_log.csv"
    tune_mod.write_tuning_log(result.trials, log_path)
    return [best_path, log_path]


def _parse_grid_config(raw: dict, scale: float | None, seed: int | None):
    scale = scale if scale is not None else float(raw.get("scale", 1.0))
    seed = seed if seed is not None else int(raw.get("seed", 0))
    scenario_entries = raw.get("scenarios") or [n.value for n in ScenarioName]
    layouts = [Layout(v) for v in raw.get("layouts", ["fused"])]
    classifier_entries = raw.get("classifiers") or ["gbdt"]
    classifiers = []
    for entry in classifier_entries:
        if isinstance(entry, str):
            classifiers.append(ClassifierSpec(kind=entry))
        else:
            classifiers.append(ClassifierSpec(
                kind=entry["kind"], name=entry.get("name", ""),
                params=entry.get("params"), tune=entry.get("tune"),
            ))
    return scenario_entries, layouts, classifiers, scale, seed


def cmd_scenario(args, manifest: RunManifest) -> list[Path]:
    manifest.config_paths.append(args.config)
    manifest.record_input(args.config)
    raw = _read_json(args.config)
    scenario_entries, layouts, classifiers, scale, seed = _parse_grid_config(
        raw, args.scale, args.seed
    )
    manifest.seed = seed

    profiles = _load_profiles(args.corpus, manifest)
    emb_map, encoder = _embeddings_for(args, profiles, manifest)
    config_encoder = raw.get("encoder")
    if config_encoder and config_encoder != encoder:
        raise CliError(f"config encoder {config_encoder!r} != embeddings encoder {encoder!r}")

    specs = []
    for entry in scenario_entries:
        if isinstance(entry, str):
            entry = {"name": entry}
        specs.append(scenario_mod.canonical_spec(
            ScenarioName(entry["name"]), scale=scale, encoder=encoder, seed=seed,
            params=entry.get("params"), tune=entry.get("tune"),
        ))

    grid = scenario_mod.run_grid(specs, layouts, classifiers, profiles, emb_map,
                                 seed=seed, jobs=args.jobs)
    if not grid.results:
        raise CliError("every grid cell failed: " + "; ".join(e for _, e in grid.failures[:3]))

    calibration = None
    pca = None
    preferred = sorted(
        grid.results,
        key=lambda k: (k[0] != ScenarioName.GPT35P4_RETRAIN.value, k[1] != Layout.FUSED.value, k),
    )
    if preferred:
        chosen = grid.results[preferred[0]]
        calibration = metrics_mod.reliability(chosen.pooled_predictions, chosen.pooled_truth)
        pca = chosen.model.pca
    written = reports_mod.emit_reports(grid, Path(args.out), calibration=calibration, pca=pca)
    return written


def cmd_report(args, manifest: RunManifest) -> list[Path]:
    results = Path(args.results)
    out = Path(args.out)
    written: list[Path] = []

    grid_csv = results / "grid.csv"
    if grid_csv.is_file():
        manifest.record_input(grid_csv)
        rows = _read_grid_rows(grid_csv)
        for metric in ("f1", "far"):
            for (layout, classifier) in sorted({(r.layout, r.classifier) for r in rows}):
                slice_rows = [r for r in rows if r.layout == layout and r.classifier == classifier]
                path = out / f"heatmap_{metric}_{layout}_{classifier}.svg"
                reports_mod.write_heatmap_svg(slice_rows, metric, path)
                written.append(path)
    calib_csv = results / "calibration.csv"
    if calib_csv.is_file():
        manifest.record_input(calib_csv)
        curve = _read_calibration(calib_csv)
        path = out / "reliability.svg"
        reports_mod.write_reliability_svg(curve, path)
        written.append(path)
    var_csv = results / "variance.csv"
    if var_csv.is_file():
        manifest.record_input(var_csv)
        rows = _read_variance(var_csv)
        path = out / "variance.svg"
        reports_mod.write_variance_svg(rows, path)
        written.append(path)
    if not written:
        raise CliError(f"{results}: no report CSVs found (grid.csv, calibration.csv, variance.csv)")
    return written


def _read_grid_rows(path: Path) -> list[scenario_mod.GridRow]:
    def opt(v: str) -> float | None:
        return None if v == "NA" else float(v)

    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(scenario_mod.GridRow(
                train_scenario=record["train_scenario"], test_subset=record["test_subset"],
                encoder=record["encoder"], classifier=record["classifier"],
                layout=record["layout"], f1=opt(record["f1"]), far=opt(record["far"]),
                frr=opt(record["frr"]), brier=opt(record["brier"]), n=int(record["n"]),
            ))
    return rows


def _read_calibration(path: Path) -> metrics_mod.CalibrationCurve:
    bins = []
    with path.open(encoding="utf-8", newline="") as fh:
        for i, record in enumerate(csv.DictReader(fh)):
            bins.append(metrics_mod.CalibrationBin(
                index=i, lo=float(record["bin_lo"]), hi=float(record["bin_hi"]),
                mean_p=float(record["mean_p"]), emp_freq=float(record["emp_freq"]),
                count=int(record["count"]),
            ))
    return metrics_mod.CalibrationCurve(bins=tuple(bins), n_bins=max(2, len(bins)))


def _read_variance(path: Path) -> list[tuple[int, float, float]]:
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append((int(record["component_index"]), float(record["ratio"]),
                         float(record["cumulative"])))
    return rows


_DEFAULT_GRID_CONFIG = {
    "scenarios": [n.value for n in ScenarioName],
    "layouts": ["fused"],
    "classifiers": [
        {"kind": "gbdt", "params": {"n_trees": 120, "max_depth": 3,
                                    "learning_rate": 0.15, "min_samples_leaf": 3}},
    ],
    "seed": 0,
}


def cmd_all(args, manifest: RunManifest) -> list[Path]:
    out = Path(args.out)
    written: list[Path] = []

    gen_args = argparse.Namespace(out=str(out), seed=args.seed, config=None, scale=args.scale)
    written += cmd_generate(gen_args, manifest)
    corpus_path = out / "corpus.jsonl"

    embed_args = argparse.Namespace(out=str(out), seed=args.seed, corpus=str(corpus_path),
                                    word_vectors=None, embeddings=None)
    written += cmd_embed(embed_args, manifest)

    config = dict(_DEFAULT_GRID_CONFIG)
    config["scale"] = args.scale
    config["seed"] = args.seed
    config_path = out / "grid_config.json"
    with config_path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(config_path)

    scenario_args = argparse.Namespace(
        out=str(out / "results"), seed=None, config=str(config_path), corpus=str(corpus_path),
        embeddings=str(out / "embeddings.jsonl"), word_vectors=None, scale=None, jobs=args.jobs,
    )
    written += cmd_scenario(scenario_args, manifest)

    report_args = argparse.Namespace(out=str(out / "figures"), results=str(out / "results"))
    written += cmd_report(report_args, manifest)
    return written


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)

    manifest = RunManifest(command=args.command, argv=argv, seed=getattr(args, "seed", None))
    out_dir = Path(args.out)
    try:
        outputs = args.func(args, manifest)
        manifest.output_paths = sorted(str(p) for p in outputs)
        manifest.status = "ok"
        return 0
    except (CliError, *_FAILURE_TYPES) as exc:
        manifest.status = "error"
        manifest.error = f"{type(exc).__name__}: {exc}"
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1
    finally:
        try:
            manifest.write(out_dir / "manifest.json")
        except OSError as exc:  # manifest is best-effort when --out is unwritable
            log.error("could not write manifest: %s", exc)


if __name__ == "__main__":
    raise SystemExit(main())
