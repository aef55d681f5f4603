"""Hyperparameter search: density-ratio (TPE-style) BO and a genetic algorithm.

Budgets follow the study protocol: BO runs 30 trials on a fixed validation
split, then 20 trials scored by mean five-fold cross-validated F1 (seeded
from the stage-1 top five). The GA runs 50 individuals for three
generations, then two fine-tuning generations over the top ten with halved
mutation sigma. Both searches are pure functions of
(space, objective, budget, seed). A failing objective is recorded at a
worst-case sentinel and the search continues.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .metrics import confusion, metrics

log = logging.getLogger(__name__)

#: Finite objective value recorded for trials whose objective raised.
FAILED_OBJECTIVE = -1e18


class TuneError(Exception):
    """Invalid search space or infeasible cross-validation."""


# ---------------------------------------------------------------------------
# Search space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float
    log: bool = False
    default: float | None = None


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int
    default: int | None = None


@dataclass(frozen=True)
class Categorical:
    choices: tuple
    default: object | None = None


Domain = Continuous | IntRange | Categorical


@dataclass(frozen=True)
class SearchSpace:
    params: Mapping[str, Domain]

    def __post_init__(self) -> None:
        if not self.params:
            raise TuneError("empty search space")
        for name, dom in self.params.items():
            if isinstance(dom, (Continuous, IntRange)):
                if not (math.isfinite(dom.lo) and math.isfinite(dom.hi)) or dom.lo > dom.hi:
                    raise TuneError(f"parameter {name!r}: bad bounds [{dom.lo}, {dom.hi}]")
                if isinstance(dom, Continuous) and dom.log and dom.lo <= 0:
                    raise TuneError(f"parameter {name!r}: log domain needs lo > 0")
            elif isinstance(dom, Categorical):
                if not dom.choices:
                    raise TuneError(f"parameter {name!r}: empty categorical domain")
            else:
                raise TuneError(f"parameter {name!r}: unknown domain {dom!r}")

    def defaults(self) -> dict | None:
        """The space's default configuration, when every domain declares one."""
        out = {}
        for name, dom in self.params.items():
            if dom.default is None:
                return None
            out[name] = dom.default
        return out

    def sample(self, rng: np.random.Generator) -> dict:
        out = {}
        for name, dom in self.params.items():
            if isinstance(dom, Continuous):
                if dom.log:
                    out[name] = float(np.exp(rng.uniform(math.log(dom.lo), math.log(dom.hi))))
                else:
                    out[name] = float(rng.uniform(dom.lo, dom.hi))
            elif isinstance(dom, IntRange):
                out[name] = int(rng.integers(dom.lo, dom.hi + 1))
            else:
                out[name] = dom.choices[int(rng.integers(len(dom.choices)))]
        return out


def gbdt_search_space() -> SearchSpace:
    """Default GBDT space; defaults mirror the shipped GbdtParams."""
    return SearchSpace(
        {
            "n_trees": IntRange(50, 400, default=200),
            "learning_rate": Continuous(0.01, 0.3, log=True, default=0.1),
            "max_depth": IntRange(2, 8, default=4),
            "lambda_l2": Continuous(0.1, 10.0, log=True, default=1.0),
            "min_samples_leaf": IntRange(1, 20, default=1),
        }
    )


def logreg_search_space() -> SearchSpace:
    return SearchSpace(
        {
            "l2": Continuous(1e-6, 1.0, log=True, default=1e-4),
            "epochs": IntRange(100, 800, default=500),
            "lr": Continuous(0.05, 1.0, log=True, default=0.5),
        }
    )


def knn_search_space() -> SearchSpace:
    # Categorical keeps k odd under crossover and mutation.
    return SearchSpace({"k": Categorical((1, 3, 5, 7, 9, 11, 13, 15), default=5)})


def search_space_for(kind: str) -> SearchSpace:
    spaces = {"gbdt": gbdt_search_space, "logreg": logreg_search_space, "knn": knn_search_space}
    if kind not in spaces:
        raise TuneError(f"no search space for classifier kind {kind!r}")
    return spaces[kind]()


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    params: dict
    objective: float
    stage: str
    index: int
    fold_scores: tuple[float, ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class TuneBudget:
    bo_stage1_trials: int = 30
    bo_stage2_trials: int = 20
    ga_population: int = 50
    ga_generations: int = 3
    ga_finetune_generations: int = 2

    def __post_init__(self) -> None:
        if min(
            self.bo_stage1_trials,
            self.bo_stage2_trials,
            self.ga_population,
            self.ga_generations,
            self.ga_finetune_generations,
        ) <= 0:
            raise TuneError("all budget fields must be positive")


@dataclass
class TuneResult:
    best: Trial
    trials: list[Trial] = field(default_factory=list)


Objective = Callable[[dict], float]


def _safe_eval(objective: Objective, params: dict) -> tuple[float, tuple[float, ...]]:
    try:
        value = objective(params)
    except Exception as exc:  # objective failures are recorded, not fatal
        log.warning("objective failed for %s: %s", params, exc)
        return FAILED_OBJECTIVE, ()
    if isinstance(value, tuple):
        mean, scores = value
        return float(mean), tuple(float(s) for s in scores)
    return float(value), ()


# ---------------------------------------------------------------------------
# TPE-style proposals
# ---------------------------------------------------------------------------

def _to_unit(dom: Domain, value: object) -> float:
    """Map a parameter value into the density space (log for log domains)."""
    if isinstance(dom, Continuous):
        return math.log(float(value)) if dom.log else float(value)
    if isinstance(dom, IntRange):
        return float(value)
    return float(dom.choices.index(value))


def _bandwidth(values: np.ndarray, span: float) -> float:
    # Scott's rule with a floor so degenerate observation sets stay usable.
    n = len(values)
    if n < 2:
        return max(0.1 * span, 1e-12)
    std = float(values.std())
    return max(1.06 * std * n ** (-0.2), 0.05 * span, 1e-12)


def _kde_logpdf(x: float, centers: np.ndarray, bw: float) -> float:
    z = (x - centers) / bw
    dens = float(np.mean(np.exp(-0.5 * z * z))) / (bw * math.sqrt(2.0 * math.pi))
    return math.log(dens + 1e-300)


def _cat_prob(index: int, observed: Sequence[int], n_choices: int) -> float:
    count = sum(1 for o in observed if o == index)
    return (count + 1.0) / (len(observed) + n_choices)


def _tpe_propose(
    space: SearchSpace,
    history: Sequence[Trial],
    rng: np.random.Generator,
    gamma: float,
    n_candidates: int,
) -> dict:
    ranked = sorted(history, key=lambda t: (-t.objective, t.index))
    n_good = max(1, int(round(gamma * len(ranked))))
    good, bad = ranked[:n_good], ranked[n_good:]
    if not bad:
        return space.sample(rng)

    names = list(space.params)
    good_u = {n: np.array([_to_unit(space.params[n], t.params[n]) for t in good]) for n in names}
    bad_u = {n: np.array([_to_unit(space.params[n], t.params[n]) for t in bad]) for n in names}

    best_score = -math.inf
    best_params: dict | None = None
    for _ in range(n_candidates):
        candidate: dict = {}
        score = 0.0
        for name in names:
            dom = space.params[name]
            if isinstance(dom, Categorical):
                n_choices = len(dom.choices)
                probs = np.array([_cat_prob(i, good_u[name].astype(int), n_choices) for i in range(n_choices)])
                idx = int(rng.choice(n_choices, p=probs / probs.sum()))
                candidate[name] = dom.choices[idx]
                score += math.log(_cat_prob(idx, good_u[name].astype(int), n_choices))
                score -= math.log(_cat_prob(idx, bad_u[name].astype(int), n_choices))
                continue
            lo = math.log(dom.lo) if isinstance(dom, Continuous) and dom.log else float(dom.lo)
            hi = math.log(dom.hi) if isinstance(dom, Continuous) and dom.log else float(dom.hi)
            span = hi - lo
            bw_good = _bandwidth(good_u[name], span)
            center = float(good_u[name][int(rng.integers(len(good_u[name])))])
            u = float(np.clip(rng.normal(center, bw_good), lo, hi))
            score += _kde_logpdf(u, good_u[name], bw_good)
            score -= _kde_logpdf(u, bad_u[name], _bandwidth(bad_u[name], span))
            if isinstance(dom, IntRange):
                candidate[name] = int(np.clip(round(u), dom.lo, dom.hi))
            elif dom.log:
                candidate[name] = float(math.exp(u))
            else:
                candidate[name] = u
        if score > best_score:
            best_score = score
            best_params = candidate
    assert best_params is not None
    return best_params


def tune_bo(
    space: SearchSpace,
    objective: Objective,
    budget: TuneBudget = TuneBudget(),
    seed: int = 0,
    cv_objective: Objective | None = None,
    n_startup: int = 10,
    gamma: float = 0.25,
    n_candidates: int = 64,
    warm_start: bool = True,
) -> TuneResult:
    """Two-stage Bayesian optimization with a density-ratio surrogate.

    Stage 1 scores `objective` (a fixed validation split in the pipeline);
    stage 2 re-scores the stage-1 top five under `cv_objective` and continues
    proposing against the CV-scored history. Returns the best stage-2 trial.
    """
    cv_objective = cv_objective or objective
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []

    stage1: list[Trial] = []
    for i in range(budget.bo_stage1_trials):
        if i == 0 and warm_start and space.defaults() is not None:
            params = space.defaults()
        elif i < n_startup or len(stage1) < 2:
            params = space.sample(rng)
        else:
            params = _tpe_propose(space, stage1, rng, gamma, n_candidates)
        value, _ = _safe_eval(objective, params)
        trial = Trial(params=params, objective=value, stage="bo1", index=len(trials), seed=seed)
        stage1.append(trial)
        trials.append(trial)

    top5 = sorted(stage1, key=lambda t: (-t.objective, t.index))[:5]
    stage2: list[Trial] = []
    for i in range(budget.bo_stage2_trials):
        if i < len(top5):
            params = dict(top5[i].params)
        elif len(stage2) < 2:
            params = space.sample(rng)
        else:
            params = _tpe_propose(space, stage2, rng, gamma, n_candidates)
        value, folds = _safe_eval(cv_objective, params)
        trial = Trial(params=params, objective=value, stage="bo2", index=len(trials),
                      fold_scores=folds, seed=seed)
        stage2.append(trial)
        trials.append(trial)

    best = max(stage2, key=lambda t: (t.objective, -t.index))
    return TuneResult(best=best, trials=trials)


# ---------------------------------------------------------------------------
# Genetic algorithm
# ---------------------------------------------------------------------------

def _mutate(space: SearchSpace, genome: dict, rng: np.random.Generator,
            rate: float, sigma_frac: float) -> dict:
    out = dict(genome)
    for name, dom in space.params.items():
        if rng.uniform() >= rate:
            continue
        if isinstance(dom, Categorical):
            out[name] = dom.choices[int(rng.integers(len(dom.choices)))]
            continue
        lo = math.log(dom.lo) if isinstance(dom, Continuous) and dom.log else float(dom.lo)
        hi = math.log(dom.hi) if isinstance(dom, Continuous) and dom.log else float(dom.hi)
        u = _to_unit(dom, out[name]) + rng.normal(0.0, sigma_frac * (hi - lo))
        u = float(np.clip(u, lo, hi))
        if isinstance(dom, IntRange):
            out[name] = int(np.clip(round(u), dom.lo, dom.hi))
        elif dom.log:
            out[name] = float(math.exp(u))
        else:
            out[name] = u
    return out


def _crossover(a: dict, b: dict, rng: np.random.Generator, rate: float) -> dict:
    if rng.uniform() >= rate:
        return dict(a)
    return {name: (a[name] if rng.uniform() < 0.5 else b[name]) for name in a}


def _tournament(scored: list[tuple[dict, float]], rng: np.random.Generator, size: int) -> dict:
    picks = rng.integers(len(scored), size=size)
    best = max(picks, key=lambda i: (scored[i][1], -i))
    return dict(scored[best][0])


def tune_ga(
    space: SearchSpace,
    objective: Objective,
    budget: TuneBudget = TuneBudget(),
    seed: int = 0,
    tournament_size: int = 3,
    crossover_rate: float = 0.9,
    mutation_rate: float = 0.1,
    mutation_sigma: float = 0.1,
    warm_start: bool = True,
) -> TuneResult:
    """Tournament-selection GA with elitism of one and a fine-tuning phase.

    After `ga_generations` over the full population, the top ten individuals
    are refined for `ga_finetune_generations` with halved mutation sigma.
    Identical genomes are memoized, so objective evaluations never exceed
    the configured budget.
    """
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    memo: dict[str, float] = {}

    def evaluate(genome: dict, stage: str) -> float:
        key = json.dumps(genome, sort_keys=True, default=str)
        if key not in memo:
            value, _ = _safe_eval(objective, genome)
            memo[key] = value
        trials.append(Trial(params=dict(genome), objective=memo[key], stage=stage,
                            index=len(trials), seed=seed))
        return memo[key]

    population = []
    for i in range(budget.ga_population):
        if i == 0 and warm_start and space.defaults() is not None:
            population.append(space.defaults())
        else:
            population.append(space.sample(rng))

    def run_phase(pop: list[dict], generations: int, stage_prefix: str,
                  sigma: float, start_gen: int) -> list[tuple[dict, float]]:
        scored = [(g, evaluate(g, f"{stage_prefix}{start_gen}")) for g in pop]
        for gen in range(start_gen + 1, start_gen + generations):
            elite_i = max(range(len(scored)), key=lambda i: (scored[i][1], -i))
            nxt = [dict(scored[elite_i][0])]
            while len(nxt) < len(pop):
                parent_a = _tournament(scored, rng, tournament_size)
                parent_b = _tournament(scored, rng, tournament_size)
                child = _crossover(parent_a, parent_b, rng, crossover_rate)
                child = _mutate(space, child, rng, mutation_rate, sigma)
                nxt.append(child)
            scored = [(g, evaluate(g, f"{stage_prefix}{gen}")) for g in nxt]
        return scored

    scored = run_phase(population, budget.ga_generations, "ga", mutation_sigma, 1)

    ranked = sorted(range(len(scored)), key=lambda i: (-scored[i][1], i))
    top10 = [dict(scored[i][0]) for i in ranked[:10]]
    run_phase(top10, budget.ga_finetune_generations, "ga-ft", mutation_sigma / 2.0,
              budget.ga_generations + 1)

    best = max(trials, key=lambda t: (t.objective, -t.index))
    return TuneResult(best=best, trials=trials)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

Trainer = Callable[[np.ndarray, np.ndarray, dict, int], object]


def stratified_folds(y: Sequence[int] | np.ndarray, folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Deterministic stratified folding; returns validation index arrays."""
    y = np.asarray(y, dtype=int)
    assignments = np.empty(len(y), dtype=int)
    rng = np.random.default_rng(seed)
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        if len(idx) < folds:
            raise TuneError(f"class {cls} has {len(idx)} samples; cannot build {folds} folds")
        order = rng.permutation(len(idx))
        assignments[idx[order]] = np.arange(len(idx)) % folds
    return [np.nonzero(assignments == f)[0] for f in range(folds)]


def _f1_of(p_fake: np.ndarray, y: np.ndarray) -> float:
    report = metrics(confusion([_P(float(v)) for v in p_fake], y))
    return report.f1 if report.f1 is not None else 0.0


class _P:
    """Minimal Prediction stand-in for metric computation on raw probabilities."""

    __slots__ = ("p_fake",)

    def __init__(self, p_fake: float) -> None:
        self.p_fake = p_fake


def cv_scores(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    params: dict,
    trainer: Trainer,
    folds: int = 5,
    seed: int = 0,
) -> tuple[float, tuple[float, ...]]:
    """Mean and per-fold validation F1 under deterministic stratified folding."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    fold_idx = stratified_folds(y, folds=folds, seed=seed)
    scores = []
    for val_idx in fold_idx:
        train_mask = np.ones(len(y), dtype=bool)
        train_mask[val_idx] = False
        model = trainer(X[train_mask], y[train_mask], params, seed)
        p = model.predict_proba(X[val_idx])
        scores.append(_f1_of(p, y[val_idx]))
    return float(np.mean(scores)), tuple(scores)


def cv_objective(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    params: dict,
    trainer: Trainer,
    folds: int = 5,
    seed: int = 0,
) -> float:
    return cv_scores(X, y, params, trainer, folds=folds, seed=seed)[0]


def make_val_objective(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    trainer: Trainer,
    val_fraction: float = 0.25,
    seed: int = 0,
) -> Objective:
    """Objective scored on one fixed stratified validation split."""
    y = np.asarray(y, dtype=int)
    folds = max(2, int(round(1.0 / val_fraction)))
    val_idx = stratified_folds(y, folds=folds, seed=seed)[0]
    train_mask = np.ones(len(y), dtype=bool)
    train_mask[val_idx] = False
    X = np.asarray(X, dtype=np.float64)

    def objective(params: dict) -> float:
        model = trainer(X[train_mask], y[train_mask], params, seed)
        return _f1_of(model.predict_proba(X[val_idx]), y[val_idx])

    return objective


def make_cv_objective(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    trainer: Trainer,
    folds: int = 5,
    seed: int = 0,
) -> Objective:
    def objective(params: dict) -> tuple[float, tuple[float, ...]]:
        return cv_scores(X, y, params, trainer, folds=folds, seed=seed)

    return objective


def write_tuning_log(trials: Sequence[Trial], path: str | Path) -> None:
    """Tuning log CSV: trial index, params as JSON, objective, stage."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial_index", "params", "objective", "stage"])
        for trial in trials:
            writer.writerow(
                [trial.index, json.dumps(trial.params, sort_keys=True), f"{trial.objective:.6f}", trial.stage]
            )
