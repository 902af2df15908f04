"""CART regression trees grown greedily on squared error."""

from dataclasses import dataclass

import numpy as np

__all__ = ["Leaf", "Split", "fit_tree", "predict_tree", "iter_nodes", "tree_depth"]

# a split must reduce SSE by more than this fraction of the node SSE
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class Leaf:
    value: float
    count: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float  # rows with x[feature] <= threshold go left
    left: "Leaf | Split"
    right: "Leaf | Split"


TreeNode = Leaf | Split


def _best_split(Xn, yc, features, min_leaf):
    """Highest-gain split over ``features``; ties go to the lower feature, then lower threshold."""
    n = len(yc)
    nl = np.arange(1, n)
    size_ok = (nl >= min_leaf) & (n - nl >= min_leaf)
    best_gain, best_f, best_thr = -np.inf, -1, 0.0
    for f in features:
        x = Xn[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        sl = np.cumsum(yc[order])[:-1]
        # SSE reduction for centred targets: S_L^2 * n / (n_L * n_R)
        gain = np.where(valid, sl * sl * n / (nl * (n - nl)), -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= thr < xs[i + 1]:
                thr = xs[i]
            best_gain, best_f, best_thr = gain[i], int(f), float(thr)
    return best_gain, best_f, best_thr


def fit_tree(X, y, max_depth: int | None = None, min_leaf: int = 1, mtry: int | None = None,
             features=None, rng: np.random.Generator | None = None, min_gain: float = 0.0) -> TreeNode:
    """Grow a regression tree by recursive binary splitting.

    At each node the split maximising the reduction in sum of squared errors
    is chosen among the candidate features. Split thresholds are midpoints
    between consecutive distinct feature values. Growth stops at
    ``max_depth``, when a node cannot give ``min_leaf`` rows to both sides,
    or when the best reduction does not exceed ``min_gain``. Leaves predict
    the mean of their rows.

    Args:
        X: ``n x p`` predictor matrix.
        y: length-``n`` target.
        max_depth: depth limit (``None`` for unlimited).
        min_leaf: minimum rows per leaf.
        mtry: when set, sample this many of the allowed features afresh at
            every node using ``rng``.
        features: allowed feature indices (default all).
        rng: random generator, required when ``mtry`` is set.
        min_gain: a split must reduce SSE by strictly more than this.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    allowed = np.arange(X.shape[1]) if features is None else np.sort(np.asarray(features, dtype=int))
    if mtry is not None:
        if rng is None:
            raise ValueError("mtry sampling needs an rng")
        mtry = max(1, min(int(mtry), len(allowed)))
    min_leaf = max(1, int(min_leaf))

    def grow(idx, depth):
        yy = y[idx]
        n = len(idx)
        mean = float(yy.mean())
        if n < 2 * min_leaf or (max_depth is not None and depth >= max_depth) or yy.min() == yy.max():
            return Leaf(mean, n)
        if mtry is not None and mtry < len(allowed):
            cand = np.sort(rng.choice(allowed, size=mtry, replace=False))
        else:
            cand = allowed
        yc = yy - mean
        gain, f, thr = _best_split(X[idx], yc, cand, min_leaf)
        if f < 0 or not (gain > min_gain and gain > _GAIN_RTOL * float(yc @ yc)):
            return Leaf(mean, n)
        go_left = X[idx, f] <= thr
        return Split(f, thr, grow(idx[go_left], depth + 1), grow(idx[~go_left], depth + 1))

    if len(y) == 0:
        raise ValueError("cannot fit a tree to zero rows")
    return grow(np.arange(len(y)), 0)


def predict_tree(tree: TreeNode, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0])
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            out[idx] = node.value
            continue
        go_left = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def iter_nodes(tree: TreeNode):
    """Yield nodes in pre-order (node, left subtree, right subtree)."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Split):
            stack.append(node.right)
            stack.append(node.left)


def tree_depth(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))
