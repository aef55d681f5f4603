"""Binary classifiers with probability outputs, plus model serialization.

The primary classifier is an in-repo gradient-boosted decision tree
ensemble trained with second-order boosting on the logistic loss:
per round, g = p - y and h = p(1 - p); a leaf's value is -sum(g)/(sum(h)+L2);
splits are found by exact greedy search over midpoints of sorted unique
feature values, maximizing

    gain = 0.5 * (GL^2/(HL+L2) + GR^2/(HR+L2) - G^2/(H+L2))

with ties broken by lowest feature index, then lowest threshold. Logistic
regression and KNN serve as calibration baselines. Everything here is
deterministic; split statistics are accumulated in a canonical sort order
so training is exactly invariant to training-set permutation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .featurize import FeatureVector, Layout, Normalizer, PcaModel

MODEL_FILE_VERSION = 1


class TrainingError(Exception):
    """Invalid training inputs (single class, bad hyperparameters)."""


class ModelFormatError(Exception):
    """Corrupt model file."""


class ModelVersionError(Exception):
    """Model file written by an incompatible version."""


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.asarray(z)))


def _as_matrix(X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
    if isinstance(X, np.ndarray):
        return np.asarray(X, dtype=np.float64)
    return np.stack([fv.values for fv in X]).astype(np.float64)


def _check_classes(y: np.ndarray) -> None:
    classes = np.unique(y)
    if not np.array_equal(classes, np.array([0, 1])):
        raise TrainingError(f"training labels must contain both classes, got {classes.tolist()}")


# ---------------------------------------------------------------------------
# Gradient-boosted trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    learning_rate: float = 0.1
    max_depth: int = 4
    min_samples_leaf: int = 1
    lambda_l2: float = 1.0


@dataclass(frozen=True)
class TreeNode:
    """Axis-aligned split (feature >= 0) or leaf (feature == -1)."""

    feature: int
    threshold: float
    left: int
    right: int
    value: float


@dataclass
class GbdtModel:
    params: GbdtParams
    base_score: float          # log-odds of the positive class rate
    trees: list[list[TreeNode]]
    training_loss: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        X = _as_matrix(X)
        score = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            score += self.params.learning_rate * _tree_predict(tree, X)
        return score

    def predict_proba(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def _tree_predict(tree: list[TreeNode], X: np.ndarray) -> np.ndarray:
    feature = np.array([n.feature for n in tree])
    threshold = np.array([n.threshold for n in tree])
    left = np.array([n.left for n in tree])
    right = np.array([n.right for n in tree])
    value = np.array([n.value for n in tree])

    cur = np.zeros(X.shape[0], dtype=int)
    while True:
        f = feature[cur]
        at_leaf = f < 0
        if at_leaf.all():
            return value[cur]
        rows = ~at_leaf
        go_left = X[rows, f[rows]] < threshold[cur[rows]]
        cur[rows] = np.where(go_left, left[cur[rows]], right[cur[rows]])


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    left_idx: np.ndarray
    right_idx: np.ndarray
    gl: float
    hl: float
    gr: float
    hr: float


def _find_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    idx: np.ndarray,
    g_sum: float,
    h_sum: float,
    params: GbdtParams,
) -> _Split | None:
    """Exact greedy split for one node, or None when no split has positive gain.

    Per feature, samples are ordered by (value, g, h) so prefix sums do not
    depend on the incoming sample order.
    """
    lam = params.lambda_l2
    parent_score = g_sum * g_sum / (h_sum + lam)
    best: _Split | None = None
    for j in range(X.shape[1]):
        v = X[idx, j]
        order = np.lexsort((h[idx], g[idx], v))
        vs = v[order]
        boundaries = np.nonzero(np.diff(vs) > 0)[0]
        if boundaries.size == 0:
            continue
        gs = np.cumsum(g[idx][order])
        hs = np.cumsum(h[idx][order])
        n_left = boundaries + 1
        n_right = idx.size - n_left
        valid = (n_left >= params.min_samples_leaf) & (n_right >= params.min_samples_leaf)
        if not valid.any():
            continue
        gl = gs[boundaries]
        hl = hs[boundaries]
        gr = g_sum - gl
        hr = h_sum - hl
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score)
        gain = np.where(valid, gain, -np.inf)
        pick = int(np.argmax(gain))  # thresholds ascend; argmax keeps the lowest on ties
        if gain[pick] <= 0.0:
            continue
        if best is None or gain[pick] > best.gain:  # strict: lowest feature wins ties
            b = boundaries[pick]
            threshold = (vs[b] + vs[b + 1]) / 2.0
            left_mask = v < threshold
            best = _Split(
                gain=float(gain[pick]),
                feature=j,
                threshold=float(threshold),
                left_idx=idx[left_mask],
                right_idx=idx[~left_mask],
                gl=float(gl[pick]),
                hl=float(hl[pick]),
                gr=float(gr[pick]),
                hr=float(hr[pick]),
            )
    return best


def _build_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, params: GbdtParams) -> list[TreeNode]:
    nodes: list[TreeNode] = []
    lam = params.lambda_l2

    def grow(idx: np.ndarray, g_sum: float, h_sum: float, depth: int) -> int:
        pos = len(nodes)
        split = None
        if depth < params.max_depth and idx.size >= 2 * params.min_samples_leaf:
            split = _find_split(X, g, h, idx, g_sum, h_sum, params)
        if split is None:
            nodes.append(TreeNode(feature=-1, threshold=0.0, left=-1, right=-1,
                                  value=-g_sum / (h_sum + lam)))
            return pos
        nodes.append(TreeNode(feature=split.feature, threshold=split.threshold,
                              left=-1, right=-1, value=0.0))
        left = grow(split.left_idx, split.gl, split.hl, depth + 1)
        right = grow(split.right_idx, split.gr, split.hr, depth + 1)
        nodes[pos] = TreeNode(feature=split.feature, threshold=split.threshold,
                              left=left, right=right, value=0.0)
        return pos

    # Root sums over sorted values: permutation-invariant float accumulation.
    grow(np.arange(X.shape[0]), float(np.sort(g).sum()), float(np.sort(h).sum()), 0)
    return nodes


def _logistic_loss(score: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def train_gbdt(
    X: np.ndarray | Sequence[FeatureVector],
    y: Sequence[int] | np.ndarray,
    params: GbdtParams = GbdtParams(),
    seed: int = 0,
) -> GbdtModel:
    """Fit n_trees rounds of second-order boosting with logistic loss.

    `seed` is accepted for interface uniformity; exact greedy training has
    no stochastic component.
    """
    del seed
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("need at least 2 aligned training rows")
    _check_classes(y)

    p_pos = float(y.mean())
    base_score = math.log(p_pos / (1.0 - p_pos))
    score = np.full(X.shape[0], base_score, dtype=np.float64)
    trees: list[list[TreeNode]] = []
    losses = [_logistic_loss(score, y)]
    for _ in range(params.n_trees):
        p = sigmoid(score)
        g = p - y
        h = p * (1.0 - p)
        tree = _build_tree(X, g, h, params)
        trees.append(tree)
        score += params.learning_rate * _tree_predict(tree, X)
        losses.append(_logistic_loss(score, y))
    return GbdtModel(params=params, base_score=base_score, trees=trees, training_loss=losses)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2: float

    def decision_function(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        return _as_matrix(X) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def logreg_loss_grad(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """Regularized mean logistic loss and its analytic gradient (bias unpenalized)."""
    score = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, score) - y * score) + 0.5 * l2 * np.dot(weights, weights))
    residual = sigmoid(score) - y
    grad_w = X.T @ residual / X.shape[0] + l2 * weights
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


def train_logreg(
    X: np.ndarray | Sequence[FeatureVector],
    y: Sequence[int] | np.ndarray,
    l2: float = 1e-4,
    epochs: int = 500,
    lr: float = 0.5,
    seed: int = 0,
) -> LogRegModel:
    """Full-batch gradient descent from a zero initialization."""
    del seed  # zero init; nothing stochastic
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    _check_classes(y)
    weights = np.zeros(X.shape[1], dtype=np.float64)
    bias = 0.0
    for _ in range(epochs):
        _, grad_w, grad_b = logreg_loss_grad(weights, bias, X, y, l2)
        weights -= lr * grad_w
        bias -= lr * grad_b
    return LogRegModel(weights=weights, bias=bias, l2=l2)


# ---------------------------------------------------------------------------
# K nearest neighbors
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    points: np.ndarray
    labels: np.ndarray
    k: int

    def predict_proba(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        X = _as_matrix(X)
        d2 = ((X[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        # Stable sort: equal distances break toward the lower training index.
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.labels[order].mean(axis=1)


def train_knn(
    X: np.ndarray | Sequence[FeatureVector],
    y: Sequence[int] | np.ndarray,
    k: int = 5,
) -> KnnModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if k < 1 or k > X.shape[0]:
        raise TrainingError(f"k={k} outside [1, {X.shape[0]}]")
    if k % 2 == 0:
        raise TrainingError(f"k must be odd, got {k}")
    return KnnModel(points=X.copy(), labels=y.copy(), k=k)


# ---------------------------------------------------------------------------
# Detector pipeline + serialization
# ---------------------------------------------------------------------------

Classifier = GbdtModel | LogRegModel | KnnModel

CLASSIFIER_KINDS = ("gbdt", "logreg", "knn")


def train_classifier(
    kind: str,
    X: np.ndarray,
    y: np.ndarray,
    params: Mapping | None = None,
    seed: int = 0,
) -> Classifier:
    """Uniform entry point used by the tuner and the scenario runner."""
    params = dict(params or {})
    if kind == "gbdt":
        return train_gbdt(X, y, GbdtParams(**params), seed=seed)
    if kind == "logreg":
        return train_logreg(X, y, **params, seed=seed)
    if kind == "knn":
        return train_knn(X, y, **params)
    raise TrainingError(f"unknown classifier kind {kind!r}")


@dataclass
class DetectorModel:
    """A trained classifier plus the preprocessing state it was fitted with."""

    layout: Layout
    encoder: str
    normalizer: Normalizer | None
    pca: PcaModel | None
    classifier_kind: str
    classifier_params: dict
    classifier: Classifier

    def predict_proba(self, X: np.ndarray | Sequence[FeatureVector]) -> np.ndarray:
        return self.classifier.predict_proba(X)


def _classifier_payload(model: DetectorModel) -> dict:
    clf = model.classifier
    if isinstance(clf, GbdtModel):
        return {
            "base_score": clf.base_score,
            "trees": [[list(asdict(n).values()) for n in tree] for tree in clf.trees],
        }
    if isinstance(clf, LogRegModel):
        return {"weights": clf.weights.tolist(), "bias": clf.bias, "l2": clf.l2}
    return {"points": clf.points.tolist(), "labels": clf.labels.tolist(), "k": clf.k}


def _classifier_from_payload(kind: str, params: dict, payload: dict) -> Classifier:
    if kind == "gbdt":
        trees = [
            [TreeNode(feature=f, threshold=t, left=l, right=r, value=v) for f, t, l, r, v in tree]
            for tree in payload["trees"]
        ]
        return GbdtModel(params=GbdtParams(**params), base_score=payload["base_score"], trees=trees)
    if kind == "logreg":
        return LogRegModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=payload["bias"],
            l2=payload["l2"],
        )
    if kind == "knn":
        return KnnModel(
            points=np.asarray(payload["points"], dtype=np.float64),
            labels=np.asarray(payload["labels"], dtype=np.float64),
            k=payload["k"],
        )
    raise ModelFormatError(f"unknown classifier kind {kind!r}")


def save_model(model: DetectorModel, path: str | Path) -> None:
    """Write the versioned JSON model file. save -> load -> save is byte-stable."""
    doc = {
        "version": MODEL_FILE_VERSION,
        "layout": model.layout.value,
        "encoder": model.encoder,
        "normalizer": (
            {"mean": model.normalizer.mean.tolist(), "std": model.normalizer.std.tolist()}
            if model.normalizer is not None
            else None
        ),
        "pca": (
            {
                "mean": model.pca.mean.tolist(),
                "components": model.pca.components.tolist(),
                "explained_variance": model.pca.explained_variance.tolist(),
                "explained_variance_ratio": model.pca.explained_variance_ratio.tolist(),
            }
            if model.pca is not None
            else None
        ),
        "classifier_kind": model.classifier_kind,
        "classifier_params": model.classifier_params,
        "classifier": _classifier_payload(model),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | Path) -> DetectorModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ModelFormatError(f"corrupt model file {path}: missing version")
    if doc["version"] != MODEL_FILE_VERSION:
        raise ModelVersionError(f"model file version {doc['version']} != {MODEL_FILE_VERSION}")
    try:
        normalizer = None
        if doc["normalizer"] is not None:
            normalizer = Normalizer(
                mean=np.asarray(doc["normalizer"]["mean"], dtype=np.float64),
                std=np.asarray(doc["normalizer"]["std"], dtype=np.float64),
            )
        pca = None
        if doc["pca"] is not None:
            pca = PcaModel(
                mean=np.asarray(doc["pca"]["mean"], dtype=np.float64),
                components=np.asarray(doc["pca"]["components"], dtype=np.float64),
                explained_variance=np.asarray(doc["pca"]["explained_variance"], dtype=np.float64),
                explained_variance_ratio=np.asarray(
                    doc["pca"]["explained_variance_ratio"], dtype=np.float64
                ),
            )
        kind = doc["classifier_kind"]
        params = doc["classifier_params"]
        classifier = _classifier_from_payload(kind, params, doc["classifier"])
        return DetectorModel(
            layout=Layout(doc["layout"]),
            encoder=doc["encoder"],
            normalizer=normalizer,
            pca=pca,
            classifier_kind=kind,
            classifier_params=params,
            classifier=classifier,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
