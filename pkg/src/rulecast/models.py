"""The data-driven classifier (logistic regression trained by mini-batch
SGD) and the CART decision tree used to model experts.

CART split selection compares impurities with exact integer arithmetic so
the lowest-feature/lowest-threshold tie-break is deterministic everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, Sample, rng_from_seed
from .dsl import Branch, CmpOp, Comparison, Leaf, RuleAst, Verdict


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    l2: float = 1e-4
    seed: int = 0
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must be in (0, 0.5)")


@dataclass(frozen=True)
class LinearModel:
    """Logistic classifier p(y=1|x) = sigmoid(w.x + b)."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)
        if not np.all(np.isfinite(arr)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])


def predict_proba(model: LinearModel, sample: Sample) -> float:
    if sample.features is None or sample.features.shape[0] != model.dimension:
        raise ValueError(
            f"sample {sample.id!r} dimension does not match model dimension {model.dimension}"
        )
    return float(sigmoid(float(sample.features @ model.weights) + model.bias))


def predict_proba_matrix(model: LinearModel, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != model.dimension:
        raise ValueError(f"feature matrix has dimension {X.shape[1]}, model expects {model.dimension}")
    return sigmoid(X @ model.weights + model.bias)


def train_logistic(data: Dataset, config: TrainConfig | None = None) -> LinearModel:
    """Minimize mean BCE + l2*||w||^2/2 by mini-batch SGD with per-epoch
    shuffling; deterministic under (data, config)."""
    config = config or TrainConfig()
    X = data.feature_matrix()
    y = data.label_vector().astype(np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("training data contains non-finite features")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    rng = rng_from_seed(config.seed)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            p = sigmoid(Xb @ w + b)
            grad_w = Xb.T @ (p - yb) / len(idx) + config.l2 * w
            grad_b = float(np.mean(p - yb))
            w -= config.learning_rate * grad_w
            b -= config.learning_rate * grad_b
    return LinearModel(weights=w, bias=b)


# --- CART -------------------------------------------------------------

@dataclass(frozen=True)
class TreeNode:
    prediction: int
    prob_class1: float
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    max_depth: int

    @property
    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


def _purity_score(c1_left: int, n_left: int, c1_right: int, n_right: int) -> tuple[int, int]:
    # Weighted Gini is (n - (A/nl + B/nr))/n with A, B the squared class
    # counts; minimizing it means maximizing the exact rational
    # (A*nr + B*nl) / (nl*nr), returned here as (numerator, denominator).
    c0_left = n_left - c1_left
    c0_right = n_right - c1_right
    a = c1_left * c1_left + c0_left * c0_left
    b = c1_right * c1_right + c0_right * c0_right
    return a * n_right + b * n_left, n_left * n_right


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    n, d = X.shape
    best: tuple[int, int, int, float] | None = None  # (num, den, feature, threshold)
    for f in range(d):
        col = X[:, f]
        order = np.argsort(col)
        sorted_vals = col[order]
        sorted_y = y[order]
        prefix_c1 = np.cumsum(sorted_y)
        total_c1 = int(prefix_c1[-1])
        for i in range(n - 1):
            if sorted_vals[i] == sorted_vals[i + 1]:
                continue
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            c1_left = int(prefix_c1[i])
            num, den = _purity_score(c1_left, n_left, total_c1 - c1_left, n_right)
            # Strict integer comparison keeps the first (lowest feature,
            # lowest threshold) candidate on exact ties.
            if best is None or num * best[1] > best[0] * den:
                threshold = float((sorted_vals[i] + sorted_vals[i + 1]) / 2.0)
                best = (num, den, f, threshold)
    if best is None:
        return None
    return best[2], best[3]


def _leaf(y: np.ndarray) -> TreeNode:
    n = len(y)
    c1 = int(np.sum(y))
    prediction = 1 if 2 * c1 > n else 0  # tie -> class 0
    return TreeNode(prediction=prediction, prob_class1=c1 / n)


def fit_cart(data: Dataset, max_depth: int, min_leaf: int = 1) -> DecisionTree:
    """Greedy Gini-impurity tree on numeric features.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; growth stops on a pure node, the depth limit, or too few
    samples; leaves predict the majority class (tie -> class 0).
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if len(data) == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    X = data.feature_matrix()
    y = data.label_vector()

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        ys = y[idx]
        if depth >= max_depth or len(idx) < 2 * min_leaf or len(np.unique(ys)) == 1:
            return _leaf(ys)
        split = _best_split(X[idx], ys, min_leaf)
        if split is None:
            return _leaf(ys)
        f, threshold = split
        mask = X[idx, f] <= threshold
        left = build(idx[mask], depth + 1)
        right = build(idx[~mask], depth + 1)
        return TreeNode(
            prediction=_leaf(ys).prediction,
            prob_class1=float(np.mean(ys)),
            feature=f,
            threshold=threshold,
            left=left,
            right=right,
        )

    return DecisionTree(root=build(np.arange(len(data)), 0), max_depth=max_depth)


def tree_predict(tree: DecisionTree, features: np.ndarray) -> int:
    node = tree.root
    while not node.is_leaf:
        node = node.left if features[node.feature] <= node.threshold else node.right
    return node.prediction


def tree_predict_matrix(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    return np.array([tree_predict(tree, row) for row in X], dtype=np.int64)


def tree_to_rule(tree: DecisionTree) -> RuleAst:
    """Structure-preserving conversion; evaluating the rule reproduces
    tree_predict exactly."""

    def convert(node: TreeNode) -> RuleAst:
        if node.is_leaf:
            return Leaf(Verdict.from_label(node.prediction))
        return Branch(
            condition=Comparison(node.feature, CmpOp.LE, node.threshold),
            then=convert(node.left),
            otherwise=convert(node.right),
        )

    return convert(tree.root)


# --- checkpoint format -------------------------------------------------

_MAGIC = b"RCLM"
_VERSION = 1


def save_model(model: LinearModel, path: str | Path) -> None:
    """Binary checkpoint: magic + version + dimension header, then the bias
    and weights as little-endian float64."""
    payload = struct.pack("<4sII", _MAGIC, _VERSION, model.dimension)
    payload += struct.pack("<d", model.bias)
    payload += model.weights.astype("<f8").tobytes()
    Path(path).write_bytes(payload)


def load_model(path: str | Path) -> LinearModel:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, dimension = struct.unpack_from("<4sII", raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    expected = 12 + 8 + 8 * dimension
    if len(raw) != expected:
        raise ValueError(f"{path}: checkpoint length {len(raw)} != expected {expected}")
    (bias,) = struct.unpack_from("<d", raw, 12)
    weights = np.frombuffer(raw, dtype="<f8", count=dimension, offset=20).astype(np.float64)
    return LinearModel(weights=weights, bias=bias)
