"""Decision-tree learner and multi-horizon forecasting over hourly series.

Greedy top-down induction of binary trees: variance reduction scores splits in
regression mode, gain ratio in classification mode. Candidate thresholds are
midpoints between consecutive distinct sorted feature values; a split must
leave at least `min_leaf` rows on each side and strictly reduce impurity.
Forecasts train one tree per horizon (1, 2, 3 hours ahead) on lagged values
plus hour-of-day, with reduced-error pruning on a chronological hold-out.

All sums go through math.fsum, so every score is a pure function of the value
multiset involved. Induction is fully deterministic: score ties fall to the
lowest feature index, then the smallest threshold.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from aircast.domain import floor_to_hour, rfc3339_format, rfc3339_parse
from aircast.store import SeriesPoint

MODEL_DOC_VERSION = 1
FORECAST_HORIZONS = (1, 2, 3)
DEFAULT_WINDOW = 24


class ForecastError(ValueError):
    pass


class SeriesTooShort(ForecastError):
    pass


class EmptyDataset(ForecastError):
    pass


class RaggedFeatures(ForecastError):
    pass


class FeatureLengthMismatch(ForecastError):
    pass


class ModelFormatError(ForecastError):
    pass


class TreeMode(Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 5
    max_depth: int = 12
    mode: TreeMode = TreeMode.REGRESSION
    prune: bool = True

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class SupervisedRow:
    features: tuple[float, ...]
    target: float


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    score: float
    left_count: int
    right_count: int


@dataclass(frozen=True)
class TreeNode:
    """One node; internal nodes keep their training prediction for pruning."""

    value: float
    count: int
    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    mode: TreeMode
    n_features: int

    def node_count(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 1
            return 1 + walk(node.left) + walk(node.right)

        return walk(self.root)


@dataclass(frozen=True)
class ForecastSet:
    """Predictions for the next 1, 2 and 3 hours from base_time."""

    base_time: datetime
    horizons: dict[int, float]
    model_id: str

    def __post_init__(self):
        if tuple(sorted(self.horizons)) != FORECAST_HORIZONS:
            raise ValueError(f"horizons must be exactly {FORECAST_HORIZONS}")
        if not all(math.isfinite(v) for v in self.horizons.values()):
            raise ValueError("predictions must be finite")


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _sse(values: Sequence[float]) -> float:
    """Sum of squared deviations from the mean (two-pass, fsum-exact)."""
    m = _mean(values)
    return math.fsum((v - m) * (v - m) for v in values)


def _entropy(labels: Sequence[float]) -> float:
    counts = Counter(labels)
    n = len(labels)
    acc = math.fsum(
        (counts[label] / n) * math.log2(counts[label] / n) for label in sorted(counts)
    )
    return -acc


def _modal_class(labels: Sequence[float]) -> float:
    counts = Counter(labels)
    return min(counts, key=lambda label: (-counts[label], label))


def _node_value(targets: Sequence[float], mode: TreeMode) -> float:
    if mode is TreeMode.REGRESSION:
        return _mean(targets)
    return _modal_class(targets)


def best_split(
    rows: Sequence[SupervisedRow], feature_index: int, params: TreeParams
) -> SplitCandidate | None:
    """Best qualifying split of `rows` on one feature, or None.

    Candidates are midpoints between consecutive distinct sorted feature
    values; both sides must keep at least min_leaf rows and the score must be
    strictly positive. Threshold ties resolve to the smallest threshold.
    """
    if not rows:
        raise EmptyDataset("no rows")
    n = len(rows)
    pairs = sorted((row.features[feature_index], row.target) for row in rows)
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]

    if params.mode is TreeMode.REGRESSION:
        parent = _sse(ys)
    else:
        parent = _entropy(ys)

    best: SplitCandidate | None = None
    for i in range(n - 1):
        if xs[i] == xs[i + 1]:
            continue
        k = i + 1
        if k < params.min_leaf or n - k < params.min_leaf:
            continue
        threshold = (xs[i] + xs[i + 1]) / 2.0
        left, right = ys[:k], ys[k:]
        if params.mode is TreeMode.REGRESSION:
            score = parent - _sse(left) - _sse(right)
        else:
            p_left = k / n
            p_right = (n - k) / n
            split_info = -(p_left * math.log2(p_left) + p_right * math.log2(p_right))
            if split_info == 0.0:
                continue
            gain = parent - p_left * _entropy(left) - p_right * _entropy(right)
            score = gain / split_info
        if score <= 0.0:
            continue
        if best is None or score > best.score:
            best = SplitCandidate(feature_index, threshold, score, k, n - k)
    return best


def _grow(rows: Sequence[SupervisedRow], params: TreeParams, depth: int) -> TreeNode:
    targets = [row.target for row in rows]
    value = _node_value(targets, params.mode)
    count = len(rows)
    if count < 2 * params.min_leaf or depth >= params.max_depth:
        return TreeNode(value, count)

    best: SplitCandidate | None = None
    for feature_index in range(len(rows[0].features)):
        candidate = best_split(rows, feature_index, params)
        if candidate is not None and (best is None or candidate.score > best.score):
            best = candidate
    if best is None:
        return TreeNode(value, count)

    left_rows = [r for r in rows if r.features[best.feature_index] <= best.threshold]
    right_rows = [r for r in rows if r.features[best.feature_index] > best.threshold]
    return TreeNode(
        value,
        count,
        feature_index=best.feature_index,
        threshold=best.threshold,
        left=_grow(left_rows, params, depth + 1),
        right=_grow(right_rows, params, depth + 1),
    )


def fit_tree(rows: Sequence[SupervisedRow], params: TreeParams) -> DecisionTree:
    """Deterministic recursive induction; see module docstring for the rules."""
    if not rows:
        raise EmptyDataset("cannot fit on an empty dataset")
    n_features = len(rows[0].features)
    if any(len(row.features) != n_features for row in rows):
        raise RaggedFeatures("rows disagree on feature length")
    return DecisionTree(_grow(rows, params, depth=0), params.mode, n_features)


def predict(tree: DecisionTree, features: Sequence[float]) -> float:
    if len(features) != tree.n_features:
        raise FeatureLengthMismatch(
            f"expected {tree.n_features} features, got {len(features)}"
        )
    node = tree.root
    while not node.is_leaf:
        node = node.left if features[node.feature_index] <= node.threshold else node.right
    return node.value


def _prediction_error(
    value: float, rows: Sequence[SupervisedRow], mode: TreeMode
) -> float:
    if mode is TreeMode.REGRESSION:
        return math.fsum((row.target - value) * (row.target - value) for row in rows)
    return float(sum(1 for row in rows if row.target != value))


def _prune_node(
    node: TreeNode, rows: Sequence[SupervisedRow], mode: TreeMode
) -> tuple[TreeNode, float]:
    if node.is_leaf:
        return node, _prediction_error(node.value, rows, mode)
    left_rows = [r for r in rows if r.features[node.feature_index] <= node.threshold]
    right_rows = [r for r in rows if r.features[node.feature_index] > node.threshold]
    left, left_err = _prune_node(node.left, left_rows, mode)
    right, right_err = _prune_node(node.right, right_rows, mode)
    subtree_err = left_err + right_err
    leaf_err = _prediction_error(node.value, rows, mode)
    if leaf_err <= subtree_err:
        return TreeNode(node.value, node.count), leaf_err
    return (
        TreeNode(node.value, node.count, node.feature_index, node.threshold, left, right),
        subtree_err,
    )


def prune(tree: DecisionTree, validation_rows: Sequence[SupervisedRow]) -> DecisionTree:
    """Reduced-error pruning: collapse a subtree whenever a leaf does no worse
    on the validation rows routed to it. Bottom-up, left before right; an
    empty validation set leaves the tree unchanged."""
    if not validation_rows:
        return tree
    root, _ = _prune_node(tree.root, list(validation_rows), tree.mode)
    return DecisionTree(root, tree.mode, tree.n_features)


def build_supervised(
    series: Sequence[SeriesPoint], window: int, horizon: int
) -> list[SupervisedRow]:
    """Lagged-window rows over an hourly series.

    At each time t where v(t), v(t-1), ..., v(t-window+1) and v(t+horizon)
    all exist, emit features [v(t), v(t-1), ..., v(t-window+1), hour_of_day(t)]
    with target v(t+horizon). Rows whose window or target touches a gap are
    skipped. Output ascends in t.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if len(series) < window + horizon:
        raise SeriesTooShort(
            f"need at least {window + horizon} points, have {len(series)}"
        )
    by_hour = {floor_to_hour(p.timestamp): p.value for p in series}
    rows = []
    for t in sorted(by_hour):
        target = by_hour.get(t + timedelta(hours=horizon))
        if target is None:
            continue
        lags = []
        for i in range(window):
            v = by_hour.get(t - timedelta(hours=i))
            if v is None:
                break
            lags.append(v)
        if len(lags) < window:
            continue
        rows.append(SupervisedRow(tuple(lags) + (float(t.hour),), target))
    return rows


def _latest_window(series: Sequence[SeriesPoint], window: int) -> tuple[datetime, tuple[float, ...]]:
    by_hour = {floor_to_hour(p.timestamp): p.value for p in series}
    base = max(by_hour)
    lags = []
    for i in range(window):
        v = by_hour.get(base - timedelta(hours=i))
        if v is None:
            raise SeriesTooShort(f"gap at {base - timedelta(hours=i)} in the latest window")
        lags.append(v)
    return base, tuple(lags) + (float(base.hour),)


def _model_fingerprint(
    label: str, sizes: Sequence[int], params: TreeParams, window: int, base: datetime
) -> str:
    text = "|".join(
        [
            label,
            params.mode.value,
            f"n={','.join(str(s) for s in sizes)}",
            f"w={window}",
            f"min_leaf={params.min_leaf}",
            f"max_depth={params.max_depth}",
            f"prune={params.prune}",
            f"base={rfc3339_format(base)}",
        ]
    )
    return hashlib.sha1(text.encode()).hexdigest()[:12]


def chronological_split(
    rows: Sequence[SupervisedRow], train_fraction: float = 0.8
) -> tuple[list[SupervisedRow], list[SupervisedRow]]:
    """Leakage-free split: training prefix, validation = most recent rows."""
    n_train = max(1, int(len(rows) * train_fraction))
    return list(rows[:n_train]), list(rows[n_train:])


def forecast_next(
    series: Sequence[SeriesPoint],
    label: str = "",
    params: TreeParams | None = None,
    window: int = DEFAULT_WINDOW,
) -> ForecastSet:
    """Train one tree per horizon and predict from the latest window.

    Each horizon's rows are split 80/20 chronologically; the most recent 20%
    drives reduced-error pruning when params.prune is set.
    """
    params = params or TreeParams()
    if len(series) < window + max(FORECAST_HORIZONS):
        raise SeriesTooShort(
            f"need at least {window + max(FORECAST_HORIZONS)} points, have {len(series)}"
        )
    base, features = _latest_window(series, window)
    horizons: dict[int, float] = {}
    sizes: list[int] = []
    for horizon in FORECAST_HORIZONS:
        rows = build_supervised(series, window, horizon)
        if not rows:
            raise SeriesTooShort(f"no complete rows for horizon {horizon}")
        train, validation = chronological_split(rows)
        tree = fit_tree(train, params)
        if params.prune:
            tree = prune(tree, validation)
        horizons[horizon] = predict(tree, features)
        sizes.append(len(rows))
    return ForecastSet(base, horizons, _model_fingerprint(label, sizes, params, window, base))


def tree_to_doc(tree: DecisionTree) -> dict:
    """Flat, versioned JSON document for a fitted tree (root at index 0)."""
    nodes: list[dict] = []

    def add(node: TreeNode) -> int:
        index = len(nodes)
        nodes.append({})
        entry = {"value": node.value, "count": node.count}
        if not node.is_leaf:
            entry.update(
                feature_index=node.feature_index,
                threshold=node.threshold,
                left=add(node.left),
                right=add(node.right),
            )
        nodes[index] = entry
        return index

    add(tree.root)
    return {
        "version": MODEL_DOC_VERSION,
        "mode": tree.mode.value,
        "n_features": tree.n_features,
        "nodes": nodes,
    }


def tree_from_doc(doc: dict) -> DecisionTree:
    if doc.get("version") != MODEL_DOC_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        mode = TreeMode(doc["mode"])
        nodes = doc["nodes"]

        def build(index: int) -> TreeNode:
            entry = nodes[index]
            if "feature_index" in entry:
                return TreeNode(
                    float(entry["value"]),
                    int(entry["count"]),
                    int(entry["feature_index"]),
                    float(entry["threshold"]),
                    build(entry["left"]),
                    build(entry["right"]),
                )
            return TreeNode(float(entry["value"]), int(entry["count"]))

        return DecisionTree(build(0), mode, int(doc["n_features"]))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def save_model(tree: DecisionTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree_to_doc(tree), indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> DecisionTree:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    return tree_from_doc(doc)


__all__ = [
    "MODEL_DOC_VERSION",
    "FORECAST_HORIZONS",
    "DEFAULT_WINDOW",
    "ForecastError",
    "SeriesTooShort",
    "EmptyDataset",
    "RaggedFeatures",
    "FeatureLengthMismatch",
    "ModelFormatError",
    "TreeMode",
    "TreeParams",
    "SupervisedRow",
    "SplitCandidate",
    "TreeNode",
    "DecisionTree",
    "ForecastSet",
    "best_split",
    "fit_tree",
    "predict",
    "prune",
    "build_supervised",
    "chronological_split",
    "forecast_next",
    "tree_to_doc",
    "tree_from_doc",
    "save_model",
    "load_model",
]
