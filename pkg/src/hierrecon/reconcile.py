"""Linear reconciliation: every method maps base forecasts through ``S @ G``.

``G`` is stored as an ``m_k x m`` matrix taking the full vector of base
forecasts to bottom-level values, so reconciled forecasts are ``S @ G @ y_hat``.
"""

from dataclasses import dataclass

import numpy as np

from .base_forecast import ForecastPanel
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    InvalidLevel,
    MissingResiduals,
    SingularGram,
    ZeroTotal,
)
from .fileio import fmt_float, write_text_atomic
from .hierarchy import Hierarchy, SeriesPanel

__all__ = [
    "GMatrix",
    "ProportionVector",
    "CovarianceEstimate",
    "historical_proportions",
    "g_bottom_up",
    "td_proportions",
    "mo_proportions",
    "g_top_down",
    "g_middle_out",
    "estimate_w",
    "shrinkage_intensity",
    "mint_g",
    "reconcile",
    "trace_vh",
    "write_matrix_csv",
]

SCHEMES = ("avg_hist", "hist_avg", "forecasted")
W_KINDS = ("ols", "wls", "structural", "shrinkage")

PINV_RTOL = 1e-10
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GMatrix:
    values: np.ndarray  # m_k x m
    method: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise DataError("G must be a finite 2-D matrix")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ProportionVector:
    p: np.ndarray
    scheme: str

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise DataError("proportions must be a finite vector")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """An estimate of the base forecast error covariance.

    ``lam`` is the shrinkage intensity (shrinkage kind only); ``excluded``
    names the positions of zero-variance residual series left out of it.
    """

    W: np.ndarray
    kind: str
    lam: float | None = None
    residuals: np.ndarray | None = None
    excluded: tuple = ()


def _check_g(h_m: int, m_k: int, G: GMatrix):
    if G.shape != (m_k, h_m):
        raise DimensionMismatch(f"G is {G.shape}, expected {(m_k, h_m)}")


def g_bottom_up(h: Hierarchy) -> GMatrix:
    G = np.zeros((h.m_k, h.m))
    G[:, h.m - h.m_k:] = np.eye(h.m_k)
    return GMatrix(G, "bu")


def historical_proportions(top, bottom, scheme: str = "avg_hist", top_id: str = "total") -> np.ndarray:
    """Shares of ``top`` (length ``n``) held by each row of ``bottom`` (``r x n``).

    ``avg_hist`` is the mean over periods of ``bottom / top``; ``hist_avg`` is
    ``sum(bottom) / sum(top)``.
    """
    top = np.asarray(top, dtype=float)
    bottom = np.atleast_2d(np.asarray(bottom, dtype=float))
    if scheme == "avg_hist":
        zero = np.flatnonzero(top == 0)
        if zero.size:
            raise ZeroTotal(f"series {top_id!r} is zero at t={zero[0] + 1}")
        return (bottom / top).mean(axis=1)
    total = top.sum()
    if total == 0:
        raise ZeroTotal(f"series {top_id!r} sums to zero over the sample")
    return bottom.sum(axis=1) / total


def _forecasted(h: Hierarchy, f: np.ndarray, top: int) -> np.ndarray:
    """Product of forecast shares along each path from ``top`` down to its leaves."""
    share = np.ones(h.m)
    below = [top]
    while below:
        nxt = []
        for i in below:
            kids = h.children[i]
            total = f[kids].sum()
            if kids and total == 0:
                raise ZeroTotal(f"forecasts of the children of {h.ids[i]!r} sum to zero")
            for c in kids:
                share[c] = share[i] * f[c] / total
            nxt.extend(kids)
        below = nxt
    offset = h.m - h.m_k
    return np.array([share[offset + j] for j in h.leaves_under(top)])


def _subtree_proportions(panel: SeriesPanel, top: int, scheme: str, base, step: int) -> ProportionVector:
    h = panel.hierarchy
    leaves = h.leaves_under(top)
    if scheme == "forecasted":
        if base is None:
            raise ConfigError("forecasted proportions need base forecasts")
        if not 1 <= step <= base.h:
            raise DataError(f"step {step} outside 1..{base.h}")
        p = _forecasted(h, base.values[:, step - 1], top)
    elif scheme in ("avg_hist", "hist_avg"):
        offset = h.m - h.m_k
        p = historical_proportions(panel.values[top], panel.values[[offset + j for j in leaves]], scheme, h.ids[top])
    else:
        raise ConfigError(f"unknown proportion scheme {scheme!r}; expected one of {SCHEMES}")
    return ProportionVector(p, scheme)


def td_proportions(panel: SeriesPanel, scheme: str = "avg_hist", base: ForecastPanel | None = None,
                   step: int = 1) -> ProportionVector:
    """Top-down disaggregation proportions for the bottom series.

    ``avg_hist`` averages the per-period shares of the total, ``hist_avg``
    divides total bottom volume by total volume, and ``forecasted`` multiplies
    forecast shares down each path of the tree for horizon ``step``.
    """
    return _subtree_proportions(panel, 0, scheme, base, step)


def mo_proportions(panel: SeriesPanel, anchor_level: int, scheme: str = "avg_hist",
                   base: ForecastPanel | None = None, step: int = 1) -> dict:
    """Per-anchor-node proportions over each anchor's own leaves."""
    h = panel.hierarchy
    if not 0 <= anchor_level <= h.k:
        raise InvalidLevel(f"anchor level {anchor_level} outside 0..{h.k}")
    return {h.ids[a]: _subtree_proportions(panel, a, scheme, base, step) for a in h.level_indices(anchor_level)}


def g_top_down(h: Hierarchy, p: ProportionVector) -> GMatrix:
    if p.p.shape != (h.m_k,):
        raise DimensionMismatch(f"{p.p.size} proportions for {h.m_k} bottom series")
    G = np.zeros((h.m_k, h.m))
    G[:, 0] = p.p
    return GMatrix(G, f"td-{p.scheme}")


def g_middle_out(h: Hierarchy, anchor_level: int, p_below: dict | None = None) -> GMatrix:
    """Split each anchor node's forecast over its leaves; sum upward from there.

    ``p_below`` maps anchor ids to their proportion vectors. At the bottom level
    it may be omitted (each leaf is its own anchor).
    """
    if not 0 <= anchor_level <= h.k:
        raise InvalidLevel(f"anchor level {anchor_level} outside 0..{h.k}")
    G = np.zeros((h.m_k, h.m))
    for a in h.level_indices(anchor_level):
        leaves = h.leaves_under(a)
        if p_below is None and anchor_level == h.k:
            props = np.ones(1)
        else:
            if p_below is None or h.ids[a] not in p_below:
                raise DataError(f"no proportions for anchor {h.ids[a]!r}")
            props = p_below[h.ids[a]].p
        if props.shape != (len(leaves),):
            raise DimensionMismatch(f"anchor {h.ids[a]!r} has {len(leaves)} leaves, got {props.size} proportions")
        G[leaves, a] = props
    return GMatrix(G, f"mo-{anchor_level}")


def shrinkage_intensity(residuals: np.ndarray) -> tuple[float, tuple]:
    """Shrinkage intensity toward the diagonal target, and the excluded series.

    Correlations come from the uncentered one-step error covariance. The
    variance of each sample correlation uses the unbiased product-moment
    estimator. Pairs that are exactly collinear in the sample have a
    deterministic correlation, so their variance term is zero. Series with
    zero variance have undefined correlations and are left out of both sums.
    """
    R = np.asarray(residuals, dtype=float)
    m, T = R.shape
    X = R.T
    var = (X * X).sum(axis=0) / T
    excluded = tuple(int(i) for i in np.flatnonzero(var <= 0))
    keep = var > 0
    Xs = X[:, keep] / np.sqrt(var[keep])
    corr = Xs.T @ Xs / T
    v = ((Xs ** 2).T @ (Xs ** 2) - (Xs.T @ Xs) ** 2 / T) / (T * (T - 1))
    np.fill_diagonal(v, 0.0)
    v[np.abs(corr) >= 1.0 - COLLINEAR_TOL] = 0.0
    off = corr ** 2
    np.fill_diagonal(off, 0.0)
    den = off.sum()
    if den == 0:
        return 1.0, excluded
    return float(min(max(v.sum() / den, 0.0), 1.0)), excluded


def estimate_w(kind: str, h: Hierarchy, residuals=None) -> CovarianceEstimate:
    """Estimate the base forecast error covariance ``W`` (scale factor fixed at 1).

    Args:
        kind: ``ols`` (identity), ``wls`` (diagonal of the one-step error
            covariance), ``structural`` (diagonal of leaf counts) or
            ``shrinkage`` (error covariance shrunk toward its diagonal).
        h: the hierarchy.
        residuals: ``m x T`` one-step errors, required for ``wls`` and
            ``shrinkage``.
    """
    if kind == "ols":
        return CovarianceEstimate(np.eye(h.m), kind)
    if kind == "structural":
        return CovarianceEstimate(np.diag(h.S.sum(axis=1)), kind)
    if kind not in W_KINDS:
        raise ConfigError(f"unknown W kind {kind!r}; expected one of {W_KINDS}")
    if residuals is None:
        raise MissingResiduals(
            f"mint-{kind} needs one-step residuals; enable rolling residual capture (set p_start)"
        )
    R = np.asarray(residuals, dtype=float)
    if R.ndim != 2 or R.shape[0] != h.m:
        raise DimensionMismatch(f"residuals must be {h.m} x T, got {R.shape}")
    if R.shape[1] < 3:
        raise MissingResiduals(f"need at least 3 residual columns, got {R.shape[1]}")
    W1 = R @ R.T / R.shape[1]
    if kind == "wls":
        return CovarianceEstimate(np.diag(np.diag(W1)), kind, residuals=R)
    lam, excluded = shrinkage_intensity(R)
    W = lam * np.diag(np.diag(W1)) + (1.0 - lam) * W1
    W = (W + W.T) / 2
    return CovarianceEstimate(W, kind, lam, R, excluded)


def _pinv_sym(W: np.ndarray) -> np.ndarray:
    """Generalized inverse of a symmetric PSD matrix, small eigenvalues dropped."""
    if np.count_nonzero(W - np.diag(np.diag(W))) == 0:
        d = np.diag(W)
        tol = PINV_RTOL * max(d.max(), 0.0)
        out = np.zeros_like(d)
        big = d > tol
        out[big] = 1.0 / d[big]
        return np.diag(out)
    vals, vecs = np.linalg.eigh(W)
    tol = PINV_RTOL * max(vals.max(), 0.0)
    big = vals > tol
    return (vecs[:, big] / vals[big]) @ vecs[:, big].T


def mint_g(S: np.ndarray, W) -> GMatrix:
    """Minimum-trace combiner ``(S' W^+ S)^{-1} S' W^+``.

    Raises:
        SingularGram: ``S' W^+ S`` is rank deficient after the eigenvalue cut.
    """
    if isinstance(W, CovarianceEstimate):
        kind, W = W.kind, W.W
    else:
        kind = "custom"
    W = np.asarray(W, dtype=float)
    m, m_k = S.shape
    if W.shape != (m, m):
        raise DimensionMismatch(f"W is {W.shape}, expected {(m, m)}")
    Wp = _pinv_sym(W)
    StW = S.T @ Wp
    A = StW @ S
    ev = np.linalg.eigvalsh((A + A.T) / 2)
    if ev.max() <= 0 or ev.min() <= PINV_RTOL * ev.max():
        raise SingularGram("S' W^+ S is singular; fall back to the ols kind")
    return GMatrix(np.linalg.solve(A, StW), f"mint-{kind}")


def reconcile(S: np.ndarray, G, base: ForecastPanel) -> ForecastPanel:
    """``S @ G @ base`` per horizon step.

    ``G`` is one :class:`GMatrix` or a sequence with one per step (used when
    proportions vary with the horizon).
    """
    m, m_k = S.shape
    Y = base.values
    if Y.shape[0] != m:
        raise DimensionMismatch(f"base panel has {Y.shape[0]} rows, S has {m}")
    if isinstance(G, GMatrix):
        _check_g(m, m_k, G)
        out = S @ (G.values @ Y)
    else:
        G = list(G)
        if len(G) != base.h:
            raise DimensionMismatch(f"{len(G)} G matrices for horizon {base.h}")
        for g in G:
            _check_g(m, m_k, g)
        out = np.column_stack([S @ (g.values @ Y[:, j]) for j, g in enumerate(G)])
    return ForecastPanel(base.node_ids, out, base.origin, base.fallback)


def trace_vh(S: np.ndarray, G, W) -> float:
    """Trace of ``S G W G' S'``, the reconciled error covariance."""
    G = G.values if isinstance(G, GMatrix) else np.asarray(G, dtype=float)
    W = W.W if isinstance(W, CovarianceEstimate) else np.asarray(W, dtype=float)
    m, m_k = S.shape
    if G.shape != (m_k, m) or W.shape != (m, m):
        raise DimensionMismatch(f"G {G.shape} / W {W.shape} do not fit S {S.shape}")
    SG = S @ G
    return float(np.trace(SG @ W @ SG.T))


def write_matrix_csv(M, path):
    """Dense ``row,col,value`` dump (0-based indices) for auditing G or W."""
    M = M.values if isinstance(M, GMatrix) else (M.W if isinstance(M, CovarianceEstimate) else np.asarray(M))
    lines = ["row,col,value"]
    for i in range(M.shape[0]):
        lines.extend(f"{i},{j},{fmt_float(M[i, j])}" for j in range(M.shape[1]))
    return write_text_atomic(path, "\n".join(lines) + "\n")
