"""Random-forest classifier with OOB error, kappa, mtry tuning, and permutation importance.

Each of ``n_tree`` trees is grown unpruned on a bootstrap sample of the
rows; at every node a fresh uniform subset of ``m_try`` features is drawn
and the best midpoint threshold by Gini decrease is taken. Rows never
drawn into a tree's bootstrap are its out-of-bag (OOB) rows; aggregating
per-row votes from only those trees gives the OOB error estimate.

Variable importance is the unscaled mean decrease in accuracy: per tree,
the accuracy on its OOB rows minus the accuracy after permuting one
feature column within those rows, averaged over trees. The per-class
variant restricts the accuracies to OOB rows of that class.

Determinism: tree t consumes only the stream seeded with seed XOR t
(bootstrap first, then per-node feature subsets), so serial and
concurrent builds produce identical forests. Vote ties break toward the
earlier class label.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClassTooSmall,
    DimensionMismatch,
    EmptyMatrix,
    InvalidParam,
    NoOobCoverage,
    SingleClass,
)
from .features import FeatureMatrix, as_values
from .seeds import derive_seed, indexed_seed

DEFAULT_N_TREE = 500
DEFAULT_TRAIN_FRACTION = 0.7
DEFAULT_TUNING_REPEATS = 5


def _gini(counts: np.ndarray, total) -> np.ndarray:
    """Gini impurity 1 - sum_c p_c^2; vectorized over leading axes."""
    p = counts / np.asarray(total, dtype=float)[..., None]
    return 1.0 - np.sum(p * p, axis=-1)


def gini_best_split(x: np.ndarray, y: np.ndarray, candidate_features, n_classes: int):
    """Best (feature, threshold, impurity_decrease) over the candidates, or None.

    Thresholds are midpoints between consecutive distinct sorted values.
    Ties break toward the lower feature index, then the lower threshold.
    Returns None for a pure node or when no split strictly decreases the
    weighted Gini impurity.
    """
    n = y.size
    counts = np.bincount(y, minlength=n_classes).astype(float)
    parent = float(_gini(counts[None, :], np.array([n]))[0])
    if parent == 0.0:
        return None
    best = None
    for f in sorted(int(f) for f in candidate_features):
        xs = x[:, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        boundaries = np.flatnonzero(xs_sorted[1:] > xs_sorted[:-1])
        if boundaries.size == 0:
            continue
        one_hot = np.zeros((n, n_classes))
        one_hot[np.arange(n), y[order]] = 1.0
        cum = np.cumsum(one_hot, axis=0)
        left_counts = cum[boundaries]
        right_counts = counts - left_counts
        n_left = (boundaries + 1).astype(float)
        n_right = n - n_left
        weighted = (n_left * _gini(left_counts, n_left) + n_right * _gini(right_counts, n_right)) / n
        decreases = parent - weighted
        pos = int(np.argmax(decreases))
        dec = float(decreases[pos])
        if dec <= 0.0:
            continue
        if best is None or dec > best[2]:
            lo = float(xs_sorted[boundaries[pos]])
            hi = float(xs_sorted[boundaries[pos] + 1])
            threshold = 0.5 * (lo + hi)
            if not lo <= threshold < hi:
                threshold = lo
            best = (f, threshold, dec)
    return best


@dataclass
class DecisionTree:
    """Unpruned CART tree stored as preorder node arrays.

    Internal nodes have feature >= 0; rows with value <= threshold go
    left. Leaves carry class counts from the training sample.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_counts: np.ndarray
    leaf_class: np.ndarray
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class index per row of ``x`` by traversal from the root."""
        q = np.asarray(x, dtype=float)
        if q.ndim == 1:
            q = q[None, :]
        node = np.zeros(q.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[node]
            active = feats >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            f = feats[rows]
            go_left = q[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.leaf_class[node]


def fit_tree(x: np.ndarray, y: np.ndarray, m_try: int, rng: np.random.Generator, n_classes: int) -> DecisionTree:
    """Grow one unpruned tree; a fresh m_try feature subset is drawn per node.

    Stops at pure nodes, single-row nodes, or when no candidate split
    improves the impurity. With m_try == d the subset draw is skipped, so
    the result does not depend on the rng at all.
    """
    n, d = x.shape
    if not 1 <= m_try <= d:
        raise InvalidParam(f"m_try must be in [1, {d}]")
    if n < 1:
        raise InvalidParam("fit_tree needs at least one row")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts_list: list[np.ndarray] = []

    # (row indices, parent node id, True if right child); preorder growth.
    stack: list[tuple[np.ndarray, int, bool]] = [(np.arange(n), -1, False)]
    while stack:
        rows, parent, is_right = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_right:
                right[parent] = node_id
            else:
                left[parent] = node_id
        counts = np.bincount(y[rows], minlength=n_classes)
        split = None
        if rows.size > 1 and int((counts > 0).sum()) > 1:
            if m_try < d:
                candidates = rng.choice(d, size=m_try, replace=False)
            else:
                candidates = np.arange(d)
            split = gini_best_split(x[rows], y[rows], candidates, n_classes)
        if split is None:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts_list.append(counts)
            continue
        f, thr, _ = split
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        counts_list.append(counts)
        mask = x[rows, f] <= thr
        stack.append((rows[~mask], node_id, True))
        stack.append((rows[mask], node_id, False))

    counts_arr = np.stack(counts_list)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        leaf_counts=counts_arr,
        leaf_class=np.argmax(counts_arr, axis=1).astype(np.int64),
        n_classes=n_classes,
    )


def _encode_labels(labels) -> tuple[np.ndarray, tuple]:
    lab = list(labels)
    classes = tuple(sorted(set(lab)))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[v] for v in lab], dtype=np.int64), classes


@dataclass
class RandomForest:
    """A bagged ensemble of random-subspace trees plus its OOB bookkeeping."""

    trees: list[DecisionTree]
    m_try: int
    n_tree: int
    class_labels: tuple
    feature_names: tuple[str, ...]
    oob_masks: np.ndarray
    seed: int
    oob_error: float
    n_oob_uncovered: int

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _feature_names_of(matrix, d: int) -> tuple[str, ...]:
    if isinstance(matrix, FeatureMatrix):
        return tuple(matrix.feature_names)
    return tuple(f"f{i}" for i in range(d))


def fit_forest(
    matrix,
    labels,
    n_tree: int = DEFAULT_N_TREE,
    m_try: int | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> RandomForest:
    """Fit ``n_tree`` trees on bootstrap samples; tree t uses the seed XOR t stream.

    ``n_jobs`` > 1 builds trees in a thread pool; results are identical to
    the serial build because every tree owns its rng.
    """
    x = as_values(matrix)
    y, classes = _encode_labels(labels)
    n, d = x.shape
    if y.size != n:
        raise InvalidParam("labels must align with the data rows")
    if n < 2:
        raise InvalidParam("fit_forest needs at least 2 rows")
    if len(classes) < 2:
        raise SingleClass("labels are all identical")
    if n_tree < 1:
        raise InvalidParam("n_tree must be at least 1")
    if m_try is None:
        m_try = max(1, int(round(np.sqrt(d))))
    if not 1 <= m_try <= d:
        raise InvalidParam(f"m_try must be in [1, {d}]")

    def build(t: int) -> tuple[DecisionTree, np.ndarray]:
        rng = np.random.default_rng(indexed_seed(seed, t))
        boot = rng.integers(0, n, size=n)
        oob = np.ones(n, dtype=bool)
        oob[boot] = False
        tree = fit_tree(x[boot], y[boot], m_try, rng, len(classes))
        return tree, oob

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            built = list(pool.map(build, range(n_tree)))
    else:
        built = [build(t) for t in range(n_tree)]

    forest = RandomForest(
        trees=[tree for tree, _ in built],
        m_try=int(m_try),
        n_tree=int(n_tree),
        class_labels=classes,
        feature_names=_feature_names_of(matrix, d),
        oob_masks=np.stack([oob for _, oob in built]),
        seed=int(seed),
        oob_error=0.0,
        n_oob_uncovered=0,
    )
    forest.oob_error, forest.n_oob_uncovered = _oob_error_stats(forest, x, y)
    return forest


def _check_query(forest: RandomForest, x) -> np.ndarray:
    q = np.asarray(as_values(x), dtype=float)
    if q.shape[-1] != forest.n_features:
        raise DimensionMismatch(
            f"query has {q.shape[-1]} features, forest was fitted on {forest.n_features}"
        )
    return q


def predict_batch(forest: RandomForest, matrix) -> list:
    """Plurality vote over the trees; ties go to the earlier class label."""
    q = _check_query(forest, matrix)
    votes = np.zeros((q.shape[0], len(forest.class_labels)), dtype=np.int64)
    rows = np.arange(q.shape[0])
    for tree in forest.trees:
        votes[rows, tree.predict(q)] += 1
    winners = np.argmax(votes, axis=1)
    return [forest.class_labels[i] for i in winners]


def predict(forest: RandomForest, x):
    """Forest vote for a single feature vector."""
    return predict_batch(forest, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def _oob_votes(forest: RandomForest, x: np.ndarray) -> np.ndarray:
    votes = np.zeros((x.shape[0], len(forest.class_labels)), dtype=np.int64)
    for t, tree in enumerate(forest.trees):
        rows = np.flatnonzero(forest.oob_masks[t])
        if rows.size == 0:
            continue
        votes[rows, tree.predict(x[rows])] += 1
    return votes


def _oob_error_stats(forest: RandomForest, x: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    votes = _oob_votes(forest, x)
    covered = votes.sum(axis=1) > 0
    n_uncovered = int((~covered).sum())
    if not covered.any():
        raise NoOobCoverage("no row is out-of-bag for any tree")
    pred = np.argmax(votes[covered], axis=1)
    return float(np.mean(pred != y[covered])), n_uncovered


def oob_error(forest: RandomForest, matrix, labels) -> float:
    """OOB error on the training rows; uncovered rows are left out of the denominator."""
    x = _check_query(forest, matrix)
    y, classes = _encode_labels(labels)
    if classes != forest.class_labels:
        y = np.array([forest.class_labels.index(v) for v in labels], dtype=np.int64)
    if y.size != x.shape[0] or x.shape[0] != forest.oob_masks.shape[1]:
        raise InvalidParam("data must be the rows the forest was fitted on")
    error, _ = _oob_error_stats(forest, x, y)
    return error


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with actual classes in rows and predicted classes in columns."""

    counts: np.ndarray
    class_labels: tuple

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        k = len(self.class_labels)
        if counts.shape != (k, k):
            raise InvalidParam("confusion matrix must be square over the class labels")
        if (counts < 0).any():
            raise InvalidParam("confusion counts must be non-negative")

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(actual, predicted, class_labels=None) -> ConfusionMatrix:
    actual = list(actual)
    predicted = list(predicted)
    if len(actual) != len(predicted):
        raise InvalidParam("actual and predicted must have equal length")
    if class_labels is None:
        class_labels = tuple(sorted(set(actual) | set(predicted)))
    index = {c: i for i, c in enumerate(class_labels)}
    counts = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        counts[index[a], index[p]] += 1
    return ConfusionMatrix(counts=counts, class_labels=tuple(class_labels))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.n_total < 1:
        raise EmptyMatrix("confusion matrix has no observations")
    return float(np.trace(cm.counts)) / cm.n_total


def kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa (p_o - p_e) / (1 - p_e); the all-one-diagonal-cell case is 1."""
    n = cm.n_total
    if n < 1:
        raise EmptyMatrix("confusion matrix has no observations")
    p_o = float(np.trace(cm.counts)) / n
    rows = cm.counts.sum(axis=1).astype(float)
    cols = cm.counts.sum(axis=0).astype(float)
    p_e = float(np.sum(rows * cols)) / (n * n)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def stratified_split(matrix, labels, train_fraction: float = DEFAULT_TRAIN_FRACTION, seed: int = 0):
    """Disjoint, exhaustive (train, test) row indices, stratified per class.

    The per-class train count is round(fraction * n_c), clamped so both
    sides keep at least one row (half-up rounding for determinism).
    """
    x = as_values(matrix)
    y = np.asarray(list(labels))
    if y.size != x.shape[0]:
        raise InvalidParam("labels must align with the data rows")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidParam("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for c in sorted(set(y.tolist())):
        rows = np.flatnonzero(y == c)
        if rows.size < 2:
            raise ClassTooSmall(f"class {c!r} has fewer than 2 rows")
        n_train = int(np.floor(train_fraction * rows.size + 0.5))
        n_train = min(max(n_train, 1), rows.size - 1)
        perm = rng.permutation(rows)
        train.append(np.sort(perm[:n_train]))
        test.append(np.sort(perm[n_train:]))
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def sample_per_cluster(matrix, labels, cap: int, seed: int = 0):
    """Uniform without-replacement sample of at most ``cap`` rows per cluster.

    Row order is preserved within the sample. Returns (matrix, labels)
    restricted to the sampled rows.
    """
    if cap < 1:
        raise InvalidParam("cap must be at least 1")
    x_is_matrix = isinstance(matrix, FeatureMatrix)
    x = as_values(matrix)
    y = np.asarray(list(labels))
    if y.size != x.shape[0]:
        raise InvalidParam("labels must align with the data rows")
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for c in sorted(set(y.tolist())):
        rows = np.flatnonzero(y == c)
        take = min(cap, rows.size)
        keep.append(np.sort(rng.choice(rows, size=take, replace=False)))
    idx = np.sort(np.concatenate(keep))
    sub = matrix.take(idx) if x_is_matrix else x[idx]
    return sub, y[idx].tolist()


@dataclass(frozen=True)
class TuningRow:
    m_try: int
    mean_accuracy: float
    mean_kappa: float
    n_repeats: int


@dataclass(frozen=True)
class TuningReport:
    """Mean holdout accuracy and kappa per m_try; best by accuracy (ties -> smaller)."""

    rows: tuple[TuningRow, ...]
    best_m_try: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.best_m_try not in {row.m_try for row in self.rows}:
            raise InvalidParam("best_m_try must be one of the candidate rows")


def default_mtry_grid(d: int) -> tuple[int, ...]:
    """The three-point grid {2, (d+1)//2, d}, clipped to [1, d]."""
    grid = sorted({min(max(v, 1), d) for v in (2, (d + 1) // 2, d)})
    return tuple(grid)


def tune_mtry(
    matrix,
    labels,
    grid=None,
    n_repeats: int = DEFAULT_TUNING_REPEATS,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    seed: int = 0,
    n_tree: int = DEFAULT_N_TREE,
) -> TuningReport:
    """Score each m_try over repeated stratified holdouts and pick the accuracy argmax.

    All grid values share the same splits per repeat, so the comparison is
    paired. Deterministic given the seed.
    """
    x = as_values(matrix)
    d = x.shape[1]
    if grid is None:
        grid = default_mtry_grid(d)
    grid = [int(g) for g in grid]
    if not grid:
        raise InvalidParam("mtry grid must be non-empty")
    if any(not 1 <= g <= d for g in grid):
        raise InvalidParam(f"every grid value must be in [1, {d}]")
    if n_repeats < 1:
        raise InvalidParam("n_repeats must be at least 1")
    y = list(labels)

    splits = [
        stratified_split(x, y, train_fraction, seed=derive_seed(seed, f"tune-split:{r}"))
        for r in range(n_repeats)
    ]
    rows: list[TuningRow] = []
    for m in grid:
        accs: list[float] = []
        kappas: list[float] = []
        for r, (train_idx, test_idx) in enumerate(splits):
            forest = fit_forest(
                x[train_idx],
                [y[i] for i in train_idx],
                n_tree=n_tree,
                m_try=m,
                seed=derive_seed(seed, f"tune-fit:{m}:{r}"),
            )
            pred = predict_batch(forest, x[test_idx])
            cm = confusion_matrix([y[i] for i in test_idx], pred, forest.class_labels)
            accs.append(accuracy(cm))
            kappas.append(kappa(cm))
        rows.append(
            TuningRow(
                m_try=m,
                mean_accuracy=float(np.mean(accs)),
                mean_kappa=float(np.mean(kappas)),
                n_repeats=n_repeats,
            )
        )
    best = max(rows, key=lambda row: (row.mean_accuracy, -row.m_try))
    return TuningReport(rows=tuple(rows), best_m_try=best.m_try)


@dataclass(frozen=True)
class ImportanceReport:
    """Mean decrease in accuracy per feature, per class and overall.

    values has one row per feature; columns are the class labels in order
    followed by the overall column.
    """

    values: np.ndarray
    feature_names: tuple[str, ...]
    class_labels: tuple

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        if vals.shape != (len(self.feature_names), len(self.class_labels) + 1):
            raise InvalidParam("importance matrix must be features x (classes + overall)")
        if not np.isfinite(vals).all():
            raise InvalidParam("importance values must be finite")

    def overall(self) -> np.ndarray:
        return self.values[:, -1]

    def for_class(self, label) -> np.ndarray:
        return self.values[:, self.class_labels.index(label)]

    def top_features(self, label=None, n: int = 3) -> list[str]:
        col = self.overall() if label is None else self.for_class(label)
        order = np.argsort(-col, kind="stable")
        return [self.feature_names[i] for i in order[:n]]


def permutation_importance(
    forest: RandomForest,
    matrix,
    labels,
    n_permutations: int = 1,
    seed: int = 0,
) -> ImportanceReport:
    """Per-tree OOB accuracy drop from permuting one feature column at a time.

    A fresh permutation is drawn per (tree, feature, repeat) from the
    tree's seed XOR t stream; permuting a constant or unused column leaves
    predictions untouched, so such features score exactly zero. Per-class
    values average over the trees that have OOB rows of that class.
    """
    x = _check_query(forest, matrix)
    y = np.array([forest.class_labels.index(v) for v in labels], dtype=np.int64)
    if y.size != x.shape[0] or x.shape[0] != forest.oob_masks.shape[1]:
        raise InvalidParam("data must be the rows the forest was fitted on")
    if n_permutations < 1:
        raise InvalidParam("n_permutations must be at least 1")
    d = forest.n_features
    k = len(forest.class_labels)

    overall_sum = np.zeros(d)
    overall_trees = 0
    class_sum = np.zeros((d, k))
    class_trees = np.zeros(k)

    for t, tree in enumerate(forest.trees):
        rows = np.flatnonzero(forest.oob_masks[t])
        if rows.size == 0:
            continue
        rng = np.random.default_rng(indexed_seed(seed, t))
        x_oob = x[rows]
        y_oob = y[rows]
        base_correct = tree.predict(x_oob) == y_oob
        base_acc = float(base_correct.mean())
        masks = [y_oob == c for c in range(k)]
        present = [bool(m.any()) for m in masks]
        base_class_acc = np.array(
            [float(base_correct[m].mean()) if p else 0.0 for m, p in zip(masks, present)]
        )
        overall_trees += 1
        for c in range(k):
            if present[c]:
                class_trees[c] += 1
        scratch = x_oob.copy()
        for f in range(d):
            dec = 0.0
            dec_class = np.zeros(k)
            for _rep in range(n_permutations):
                perm = rng.permutation(rows.size)
                col = x_oob[perm, f]
                if np.array_equal(col, x_oob[:, f]):
                    correct = base_correct
                else:
                    scratch[:, f] = col
                    correct = tree.predict(scratch) == y_oob
                    scratch[:, f] = x_oob[:, f]
                dec += base_acc - float(correct.mean())
                for c in range(k):
                    if present[c]:
                        dec_class[c] += base_class_acc[c] - float(correct[masks[c]].mean())
            overall_sum[f] += dec / n_permutations
            class_sum[f] += dec_class / n_permutations

    if overall_trees == 0:
        raise NoOobCoverage("no tree has any out-of-bag row")
    values = np.zeros((d, k + 1))
    for c in range(k):
        if class_trees[c] > 0:
            values[:, c] = class_sum[:, c] / class_trees[c]
    values[:, -1] = overall_sum / overall_trees
    return ImportanceReport(
        values=values,
        feature_names=forest.feature_names,
        class_labels=forest.class_labels,
    )
