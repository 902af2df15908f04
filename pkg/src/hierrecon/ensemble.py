"""Tree ensembles (random forest and gradient boosting) and their tuning.

Randomness is drawn from per-tree (or per-round) generators seeded with
``(seed, index)``, so results do not depend on how many workers grow trees.
"""

import math
from dataclasses import asdict, dataclass, fields, replace
from functools import partial

import numpy as np

from .errors import ConfigError, ModelFormatError, TooFewRows
from .fileio import fmt_float, read_text, write_text_atomic
from .parallel import pmap
from .trees import Leaf, Split, fit_tree, iter_nodes, predict_tree

__all__ = [
    "TrainingTable",
    "HyperParams",
    "SearchSpace",
    "EnsembleModel",
    "fit_random_forest",
    "fit_gbt",
    "fit_ensemble",
    "cv_rmse",
    "sample_candidates",
    "tune_hyperparameters",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
]

KINDS = ("random_forest", "gradient_boosted")


@dataclass(frozen=True, eq=False)
class TrainingTable:
    """Predictors (one-step base forecasts of all series) and one bottom target."""

    predictors: np.ndarray
    target: np.ndarray
    bottom_index: int = 0
    target_times: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.predictors, dtype=float)
        y = np.array(self.target, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"predictors {X.shape} and target {y.shape} do not align")
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "target", y)

    @property
    def rows(self) -> int:
        return len(self.target)

    def subset(self, idx) -> "TrainingTable":
        times = None if self.target_times is None else self.target_times[idx]
        return TrainingTable(self.predictors[idx], self.target[idx], self.bottom_index, times)


@dataclass(frozen=True)
class HyperParams:
    # random forest
    ntree: int = 100
    mtry: int = 3
    nodesize: int = 10
    # gradient boosting
    eta: float = 0.05
    subsample: float = 0.8
    colsample_bytree: float = 0.8
    min_child_weight: float = 1.0
    max_depth: int = 6
    gamma: float = 0.0
    nrounds: int = 100


@dataclass(frozen=True)
class SearchSpace:
    """Tuning ranges; integer bounds are inclusive."""

    ntree: tuple = (50, 150, 5)  # (low, high, step)
    mtry: tuple = (2, 6)
    nodesize: tuple = (10, 50)
    eta: tuple = (0.01, 0.05)
    subsample: tuple = (0.3, 1.0)
    colsample_bytree: tuple = (0.3, 1.0)
    min_child_weight: tuple = (0.0, 10.0)
    max_depth: tuple = (2, 10)
    gamma: tuple = (0.0, 5.0)
    nrounds: tuple = (50, 200)

    def contains(self, hp: HyperParams, kind: str) -> bool:
        names = ("ntree", "mtry", "nodesize") if kind == "random_forest" else (
            "eta", "subsample", "colsample_bytree", "min_child_weight", "max_depth", "gamma", "nrounds")
        for name in names:
            lo, hi = getattr(self, name)[:2]
            if not lo <= getattr(hp, name) <= hi:
                return False
        return True


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str
    trees: tuple
    hyperparams: HyperParams
    seed: int
    feature_count: int
    base_score: float = 0.0
    weights: tuple = ()  # boosting: learning-rate weight of each tree

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"model expects {self.feature_count} features, got {X.shape[1]}")
        if self.kind == "random_forest":
            total = np.zeros(X.shape[0])
            for t in self.trees:
                total += predict_tree(t, X)
            return total / len(self.trees)
        out = np.full(X.shape[0], self.base_score)
        for w, t in zip(self.weights, self.trees):
            out += w * predict_tree(t, X)
        return out

    def tree_predictions(self, X) -> np.ndarray:
        """``n_trees x n`` matrix of raw per-tree outputs."""
        X = np.asarray(X, dtype=float)
        return np.vstack([predict_tree(t, X) for t in self.trees])


def _rf_tree(i: int, X, y, hp: HyperParams, seed: int, bootstrap: bool):
    rng = np.random.default_rng([seed, i])
    n = len(y)
    idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    return fit_tree(X[idx], y[idx], max_depth=None, min_leaf=hp.nodesize,
                    mtry=min(hp.mtry, X.shape[1]), rng=rng)


def fit_random_forest(table: TrainingTable, hp: HyperParams, seed: int = 0, bootstrap: bool = True,
                      workers: int = 1) -> EnsembleModel:
    """Bagged regression trees with ``hp.mtry`` features tried at each split.

    Each tree sees a bootstrap resample of the rows (``bootstrap=False`` fits
    every tree on the full table, which is only useful for testing).
    """
    X, y = table.predictors, table.target
    if hp.ntree < 1:
        raise ConfigError("ntree must be >= 1")
    fit_one = partial(_rf_tree, X=X, y=y, hp=hp, seed=seed, bootstrap=bootstrap)
    trees = pmap(fit_one, range(hp.ntree), workers)
    return EnsembleModel("random_forest", tuple(trees), hp, seed, X.shape[1])


def fit_gbt(table: TrainingTable, hp: HyperParams, seed: int = 0) -> EnsembleModel:
    """Gradient boosting on squared error.

    Starts from the target mean and, each round, fits a tree to the current
    residuals on a row subsample and a per-tree column subsample, then adds
    ``eta`` times its output. ``gamma`` is the minimum SSE reduction a split
    must exceed and ``min_child_weight`` the minimum row count per child.
    """
    X, y = table.predictors, table.target
    n, p = X.shape
    base = float(y.mean())
    F = np.full(n, base)
    n_rows = max(1, int(round(hp.subsample * n)))
    n_cols = max(1, int(round(hp.colsample_bytree * p)))
    min_leaf = max(1, math.ceil(hp.min_child_weight - 1e-12))
    trees = []
    for r in range(hp.nrounds):
        rng = np.random.default_rng([seed, r])
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        cols = np.sort(rng.choice(p, size=n_cols, replace=False)) if n_cols < p else None
        resid = y - F
        tree = fit_tree(X[rows], resid[rows], max_depth=hp.max_depth, min_leaf=min_leaf,
                        features=cols, min_gain=hp.gamma)
        F += hp.eta * predict_tree(tree, X)
        trees.append(tree)
    return EnsembleModel("gradient_boosted", tuple(trees), hp, seed, p, base, (hp.eta,) * len(trees))


def fit_ensemble(kind: str, table: TrainingTable, hp: HyperParams, seed: int = 0, workers: int = 1):
    if kind == "random_forest":
        return fit_random_forest(table, hp, seed, workers=workers)
    if kind == "gradient_boosted":
        return fit_gbt(table, hp, seed)
    raise ConfigError(f"unknown ensemble kind {kind!r}; expected one of {KINDS}")


def cv_rmse(table: TrainingTable, kind: str, hp: HyperParams, folds: int = 10, seed: int = 0) -> float:
    """Mean RMSE over contiguous, time-ordered folds."""
    n = table.rows
    if folds < 2 or n < folds:
        raise TooFewRows(f"{n} rows cannot be split into {folds} folds")
    scores = []
    for test in np.array_split(np.arange(n), folds):
        train = np.setdiff1d(np.arange(n), test)
        model = fit_ensemble(kind, table.subset(train), hp, seed)
        err = model.predict(table.predictors[test]) - table.target[test]
        scores.append(math.sqrt(float(err @ err) / len(test)))
    return float(np.mean(scores))


def sample_candidates(kind: str, budget: int, seed: int = 0, space: SearchSpace = SearchSpace(),
                      base: HyperParams = HyperParams()) -> list[HyperParams]:
    """Seeded random candidates inside ``space``.

    Random-forest candidates walk a shuffled grid of ``ntree`` values and draw
    ``mtry`` and ``nodesize`` uniformly. Boosting candidates draw every
    parameter uniformly (integers inclusive).
    """
    if budget < 1:
        raise ConfigError("tuning budget must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    if kind == "random_forest":
        lo, hi, step = space.ntree
        grid = rng.permutation(np.arange(lo, hi + 1, step))
        for i in range(budget):
            out.append(replace(
                base,
                ntree=int(grid[i % len(grid)]),
                mtry=int(rng.integers(space.mtry[0], space.mtry[1] + 1)),
                nodesize=int(rng.integers(space.nodesize[0], space.nodesize[1] + 1)),
            ))
    elif kind == "gradient_boosted":
        for _ in range(budget):
            out.append(replace(
                base,
                eta=float(rng.uniform(*space.eta)),
                subsample=float(rng.uniform(*space.subsample)),
                colsample_bytree=float(rng.uniform(*space.colsample_bytree)),
                min_child_weight=float(rng.uniform(*space.min_child_weight)),
                max_depth=int(rng.integers(space.max_depth[0], space.max_depth[1] + 1)),
                gamma=float(rng.uniform(*space.gamma)),
                nrounds=int(rng.integers(space.nrounds[0], space.nrounds[1] + 1)),
            ))
    else:
        raise ConfigError(f"unknown ensemble kind {kind!r}")
    return out


def _score(hp, tables, kind, folds, seed):
    return float(np.mean([cv_rmse(t, kind, hp, folds, seed) for t in tables]))


def tune_hyperparameters(table, kind: str, budget: int = 20, folds: int = 10, seed: int = 0,
                         space: SearchSpace = SearchSpace(), base: HyperParams = HyperParams(),
                         candidates=None, workers: int = 1) -> HyperParams:
    """Pick the candidate with the lowest cross-validated RMSE.

    ``table`` may be a single :class:`TrainingTable` or a list of them, in
    which case a candidate's score is its mean CV RMSE over all tables (one
    shared setting for a whole hierarchy). Ties keep the earlier candidate.
    """
    tables = [table] if isinstance(table, TrainingTable) else list(table)
    for t in tables:
        if folds < 2 or t.rows < folds:
            raise TooFewRows(f"{t.rows} rows cannot be split into {folds} folds")
    if candidates is None:
        candidates = sample_candidates(kind, budget, seed, space, base)
    candidates = list(candidates)
    if len(candidates) == 1:
        return candidates[0]
    scores = pmap(partial(_score, tables=tables, kind=kind, folds=folds, seed=seed), candidates, workers)
    best = 0
    for i, sc in enumerate(scores):
        if sc < scores[best]:
            best = i
    return candidates[best]


# ---- text export ---------------------------------------------------------

_INT_FIELDS = {f.name for f in fields(HyperParams) if f.type in (int, "int")}


def _dump_tree(tree, lines):
    ids = {}
    nodes = list(iter_nodes(tree))
    for i, nd in enumerate(nodes):
        ids[id(nd)] = i
    for i, nd in enumerate(nodes):
        if isinstance(nd, Leaf):
            lines.append(f"{i},leaf,{fmt_float(nd.value)},{nd.count}")
        else:
            lines.append(f"{i},{nd.feature},{fmt_float(nd.threshold)},{ids[id(nd.left)]},{ids[id(nd.right)]}")


def dumps_model(model: EnsembleModel) -> str:
    """Serialise to the line-oriented text format (exact float round-trip)."""
    lines = [
        "# hierrecon ensemble v1",
        f"kind={model.kind}",
        f"seed={model.seed}",
        f"feature_count={model.feature_count}",
        f"base_score={fmt_float(model.base_score)}",
    ]
    for k, v in asdict(model.hyperparams).items():
        lines.append(f"hp.{k}={fmt_float(v) if isinstance(v, float) else v}")
    lines.append(f"trees={len(model.trees)}")
    for i, tree in enumerate(model.trees):
        weight = model.weights[i] if model.weights else 1.0
        lines.append(f"tree {i} weight={fmt_float(weight)}")
        _dump_tree(tree, lines)
        lines.append("end")
    return "\n".join(lines) + "\n"


def _build(rows: dict, i: int):
    row = rows[i]
    if row[1] == "leaf":
        return Leaf(float(row[2]), int(row[3]))
    return Split(int(row[1]), float(row[2]), _build(rows, int(row[3])), _build(rows, int(row[4])))


def loads_model(text: str) -> EnsembleModel:
    header, hp, trees, weights = {}, {}, [], []
    lines = iter(text.splitlines())
    try:
        for line in lines:
            if not line or line.startswith("#"):
                continue
            if line.startswith("tree "):
                weights.append(float(line.split("weight=", 1)[1]))
                rows = {}
                for body in lines:
                    if body == "end":
                        break
                    parts = body.split(",")
                    rows[int(parts[0])] = parts
                trees.append(_build(rows, 0))
                continue
            key, value = line.split("=", 1)
            if key.startswith("hp."):
                name = key[3:]
                hp[name] = int(value) if name in _INT_FIELDS else float(value)
            else:
                header[key] = value
        kind = header["kind"]
        if kind not in KINDS:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        if int(header["trees"]) != len(trees):
            raise ModelFormatError("tree count does not match header")
        return EnsembleModel(
            kind,
            tuple(trees),
            HyperParams(**hp),
            int(header["seed"]),
            int(header["feature_count"]),
            float(header["base_score"]),
            tuple(weights) if kind == "gradient_boosted" else (),
        )
    except (KeyError, ValueError, IndexError, TypeError) as exc:
        raise ModelFormatError(f"malformed model text: {exc}") from exc


def save_model(model: EnsembleModel, path):
    return write_text_atomic(path, dumps_model(model))


def load_model(path) -> EnsembleModel:
    return loads_model(read_text(path))
