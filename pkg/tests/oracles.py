"""Reference implementations written independently of the package, for cross-checking."""

import math

import numpy as np


def leaf_counts(edges):
    """Per-node number of leaf descendants by recursive tree walk."""
    kids = {}
    for p, c in edges:
        kids.setdefault(p, []).append(c)

    def count(n):
        if n not in kids:
            return 1
        return sum(count(c) for c in kids[n])

    nodes = {p for p, _ in edges} | {c for _, c in edges}
    return {n: count(n) for n in nodes}


def normal_equations_g(S, W):
    """Dense ``(S' W^-1 S)^-1 S' W^-1`` via plain inverses."""
    Wi = np.linalg.inv(W)
    return np.linalg.inv(S.T @ Wi @ S) @ S.T @ Wi


def shrinkage_lambda_loop(R):
    """Shrinkage intensity toward the diagonal, element by element.

    Uses the uncentered second-moment covariance; the sampling variance of
    each correlation is the unbiased variance of the products of the
    standardized series divided by T.
    """
    m, T = R.shape
    sd = [math.sqrt(sum(R[i, t] ** 2 for t in range(T)) / T) for i in range(m)]
    z = [[R[i, t] / sd[i] for t in range(T)] for i in range(m)]
    num = 0.0
    den = 0.0
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            w = [z[i][t] * z[j][t] for t in range(T)]
            wbar = sum(w) / T
            var_r = sum((wk - wbar) ** 2 for wk in w) / (T * (T - 1))
            num += var_r
            den += wbar ** 2
    return min(max(num / den, 0.0), 1.0)


def mase_loop(actual, forecast, insample, s):
    n, h = len(insample), len(actual)
    den = sum(abs(insample[t] - insample[t - s]) for t in range(s, n))
    return (n - s) / h * sum(abs(a - f) for a, f in zip(actual, forecast)) / den
