"""Hierarchy structure, summing matrix, coherence checks and panel I/O."""

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    CycleDetected,
    DataError,
    DimensionMismatch,
    DisconnectedNode,
    IncoherentPanel,
    MissingNode,
    MultipleParents,
    MultipleRoots,
    NonNumericValue,
    UnbalancedHierarchy,
    UnknownNode,
)
from .fileio import fmt_float, read_text, write_text_atomic

__all__ = [
    "Node",
    "Hierarchy",
    "SeriesPanel",
    "build_hierarchy",
    "summing_matrix",
    "aggregate_bottom",
    "coherence_check",
    "read_hierarchy_csv",
    "write_hierarchy_csv",
    "read_series_csv",
    "write_series_csv",
]


@dataclass(frozen=True)
class Node:
    id: str
    level: int
    parent: int | None  # index into Hierarchy.nodes


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """A strict tree of series, stored level-major.

    All level-``i`` nodes precede all level-``i+1`` nodes, so the bottom level
    occupies the last ``m_k`` positions. Construct via :func:`build_hierarchy`.
    """

    nodes: tuple[Node, ...]

    def __post_init__(self):
        _validate_nodes(self.nodes)

    def __eq__(self, other):
        return isinstance(other, Hierarchy) and self.nodes == other.nodes

    def __hash__(self):
        return hash(self.nodes)

    @cached_property
    def ids(self) -> list[str]:
        return [nd.id for nd in self.nodes]

    @cached_property
    def index(self) -> dict[str, int]:
        return {nd.id: i for i, nd in enumerate(self.nodes)}

    @property
    def m(self) -> int:
        return len(self.nodes)

    @cached_property
    def k(self) -> int:
        return self.nodes[-1].level

    @cached_property
    def level_counts(self) -> list[int]:
        counts = [0] * (self.k + 1)
        for nd in self.nodes:
            counts[nd.level] += 1
        return counts

    @property
    def m_k(self) -> int:
        return self.level_counts[-1]

    @cached_property
    def levels(self) -> np.ndarray:
        return np.array([nd.level for nd in self.nodes], dtype=int)

    def level_indices(self, level: int) -> np.ndarray:
        return np.flatnonzero(self.levels == level)

    @cached_property
    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for i, nd in enumerate(self.nodes):
            if nd.parent is not None:
                out[nd.parent].append(i)
        return out

    @cached_property
    def bottom_indices(self) -> np.ndarray:
        return np.arange(self.m - self.m_k, self.m)

    def leaves_under(self, i: int) -> list[int]:
        """Bottom-level positions (0..m_k-1) of the leaves below node ``i``."""
        offset = self.m - self.m_k
        stack, out = [i], []
        while stack:
            j = stack.pop()
            if self.nodes[j].level == self.k:
                out.append(j - offset)
            else:
                stack.extend(self.children[j])
        return sorted(out)

    def ancestors(self, i: int) -> list[int]:
        """Path from the root down to ``i`` (inclusive)."""
        path = [i]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path[::-1]

    def edges(self) -> list[tuple[str, str]]:
        return [(self.nodes[nd.parent].id, nd.id) for nd in self.nodes if nd.parent is not None]

    @cached_property
    def S(self) -> np.ndarray:
        return summing_matrix(self)


def _validate_nodes(nodes):
    if not nodes:
        raise DataError("hierarchy has no nodes")
    roots = [i for i, nd in enumerate(nodes) if nd.parent is None]
    if roots != [0] or nodes[0].level != 0:
        raise MultipleRoots("exactly one root at position 0 is required")
    ids = set()
    prev_level = 0
    has_child = [False] * len(nodes)
    for i, nd in enumerate(nodes):
        if nd.id in ids:
            raise DataError(f"duplicate node id {nd.id!r}")
        ids.add(nd.id)
        if nd.level < prev_level:
            raise DataError("nodes are not in level-major order")
        prev_level = nd.level
        if nd.parent is not None:
            if not 0 <= nd.parent < i or nodes[nd.parent].level != nd.level - 1:
                raise DataError(f"node {nd.id!r} has an invalid parent")
            has_child[nd.parent] = True
    k = nodes[-1].level
    for i, nd in enumerate(nodes):
        if not has_child[i] and nd.level != k:
            raise UnbalancedHierarchy(
                f"leaf {nd.id!r} sits at level {nd.level}; every leaf must be at level {k}"
            )


def build_hierarchy(edges, nodes=None) -> Hierarchy:
    """Build a :class:`Hierarchy` from ``(parent_id, child_id)`` pairs.

    Levels are distances from the root. Within a level, nodes keep the order
    in which their incoming edge first appears. ``nodes`` optionally lists ids
    that must all be connected to the tree.
    """
    edges = [(str(p), str(c)) for p, c in edges]
    parent_of: dict[str, str] = {}
    order: dict[str, int] = {}
    children: dict[str, list[str]] = {}
    seen: dict[str, None] = {}
    for pos, (p, c) in enumerate(edges):
        if p == c:
            raise CycleDetected(f"self-loop on {p!r}")
        if c in parent_of:
            if parent_of[c] == p:
                continue
            raise MultipleParents(f"node {c!r} has parents {parent_of[c]!r} and {p!r}")
        parent_of[c] = p
        order[c] = pos
        children.setdefault(p, []).append(c)
        seen.setdefault(p)
        seen.setdefault(c)
    if nodes is not None:
        for nid in map(str, nodes):
            if nid not in seen:
                raise DisconnectedNode(f"node {nid!r} has no edges")
    if not seen:
        raise DataError("empty edge list")
    roots = [nid for nid in seen if nid not in parent_of]
    if not roots:
        raise CycleDetected("every node has a parent")
    if len(roots) > 1:
        raise MultipleRoots(f"found {len(roots)} roots: {', '.join(roots)}")

    level = {roots[0]: 0}
    frontier = [roots[0]]
    ordered = [roots[0]]
    while frontier:
        nxt = []
        for p in frontier:
            for c in children.get(p, []):
                level[c] = level[p] + 1
                nxt.append(c)
        nxt.sort(key=order.__getitem__)
        ordered.extend(nxt)
        frontier = nxt
    if len(ordered) != len(seen):
        missing = [nid for nid in seen if nid not in level]
        raise CycleDetected(f"nodes unreachable from root {roots[0]!r}: {', '.join(missing)}")

    pos = {nid: i for i, nid in enumerate(ordered)}
    return Hierarchy(
        tuple(
            Node(nid, level[nid], pos[parent_of[nid]] if nid in parent_of else None)
            for nid in ordered
        )
    )


def summing_matrix(h: Hierarchy) -> np.ndarray:
    """Binary ``m x m_k`` matrix; entry (i, j) is 1 iff leaf j lies under node i."""
    S = np.zeros((h.m, h.m_k))
    offset = h.m - h.m_k
    for j in range(h.m_k):
        for i in h.ancestors(offset + j):
            S[i, j] = 1.0
    S.flags.writeable = False
    return S


def aggregate_bottom(S: np.ndarray, b) -> np.ndarray:
    """Return ``S @ b`` for a bottom vector (or an ``m_k x h`` block of them)."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected {S.shape[1]} bottom values, got {b.shape[0]}")
    return S @ b


def coherence_check(S: np.ndarray, y, rel_tol: float = 1e-9) -> bool:
    """True iff ``y`` equals ``S`` times its own bottom block within ``rel_tol``.

    The error is the max-norm of the discrepancy divided by ``max(1, |y|_inf)``.
    ``y`` may be a single vector or an ``m x h`` matrix checked column-wise.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    y = np.asarray(y, dtype=float)
    m, m_k = S.shape
    if y.shape[0] != m:
        raise DimensionMismatch(f"expected {m} rows, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        return False
    resid = np.abs(y - S @ y[m - m_k:])
    scale = np.maximum(1.0, np.abs(y).max(axis=0))
    return bool(np.all(resid.max(axis=0) / scale <= rel_tol))


@dataclass(frozen=True, eq=False)
class SeriesPanel:
    """Observations for every node of a hierarchy, ``m x n``.

    Rows follow ``hierarchy.ids``. ``regressors`` maps a regressor name to an
    ``m x n'`` matrix of exogenous values aligned with ``values``; ``n' >= n``,
    and columns past ``n`` hold regressor values known for future periods.
    """

    hierarchy: Hierarchy
    values: np.ndarray
    s: int = 1
    regressors: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        h = self.hierarchy
        if values.ndim != 2 or values.shape[0] != h.m:
            raise DimensionMismatch(f"panel must be {h.m} x n, got {values.shape}")
        if self.s < 1:
            raise DataError("seasonal period must be >= 1")
        if self.n <= 2 * self.s:
            raise DataError(f"need n > 2s, got n={self.n}, s={self.s}")
        if not np.all(np.isfinite(values)):
            raise NonNumericValue("panel contains non-finite values")
        regs = {}
        for name, x in self.regressors.items():
            x = np.array(x, dtype=float)
            # extra trailing columns carry known future values
            if x.ndim != 2 or x.shape[0] != h.m or x.shape[1] < self.n:
                raise DimensionMismatch(f"regressor {name!r} has shape {x.shape}, expected ({h.m}, >= {self.n})")
            x.flags.writeable = False
            regs[name] = x
        object.__setattr__(self, "regressors", regs)
        _check_panel_coherent(h, values)

    @property
    def node_ids(self) -> list[str]:
        return self.hierarchy.ids

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def head(self, n: int) -> "SeriesPanel":
        """The first ``n`` periods as a new panel."""
        return SeriesPanel(
            self.hierarchy,
            self.values[:, :n],
            self.s,
            dict(self.regressors),
        )


def _check_panel_coherent(h: Hierarchy, values: np.ndarray, rel_tol: float = 1e-9):
    for i in range(h.m - h.m_k):
        kids = h.children[i]
        diff = np.abs(values[i] - values[kids].sum(axis=0))
        scale = np.maximum(1.0, np.abs(values[i]))
        bad = np.flatnonzero(diff > rel_tol * scale)
        if bad.size:
            t = int(bad[0]) + 1
            raise IncoherentPanel(
                f"node {h.ids[i]!r} at t={t} is {values[i, t - 1]!r} but its children sum to "
                f"{values[kids, t - 1].sum()!r}"
            )


def _read_csv_rows(path):
    return list(csv.reader(io.StringIO(read_text(path))))


def read_hierarchy_csv(path) -> Hierarchy:
    rows = _read_csv_rows(path)
    if not rows or [c.strip() for c in rows[0]] != ["parent_id", "child_id"]:
        raise DataError(f"{path}: header must be 'parent_id,child_id'")
    edges = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        edges.append((row[0].strip(), row[1].strip()))
    return build_hierarchy(edges)


def write_hierarchy_csv(h: Hierarchy, path):
    lines = ["parent_id,child_id"] + [f"{p},{c}" for p, c in h.edges()]
    return write_text_atomic(path, "\n".join(lines) + "\n")


def _read_matrix_csv(path, hierarchy: Hierarchy) -> np.ndarray:
    rows = _read_csv_rows(path)
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "t":
        raise DataError(f"{path}: first column must be 't'")
    cols = header[1:]
    known = set(hierarchy.ids)
    for c in cols:
        if c not in known:
            raise UnknownNode(f"{path}: column {c!r} is not a node of the hierarchy")
    for nid in hierarchy.ids:
        if nid not in cols:
            raise MissingNode(f"{path}: no column for node {nid!r}")
    if len(set(cols)) != len(cols):
        raise DataError(f"{path}: duplicate node columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError:
            raise NonNumericValue(f"{path}:{lineno}: bad period index {row[0]!r}") from None
        if t != len(data) + 1:
            raise DataError(f"{path}:{lineno}: expected t={len(data) + 1}, got {t}")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise NonNumericValue(f"{path}:{lineno}: {exc}") from None
        data.append(vals)
    if not data:
        raise DataError(f"{path}: no observations")
    arr = np.array(data).T
    order = [cols.index(nid) for nid in hierarchy.ids]
    return arr[order]


def read_series_csv(path, hierarchy: Hierarchy, s: int = 1, regressors=None) -> SeriesPanel:
    """Load an observation panel; ``regressors`` maps names to CSV paths of the same layout."""
    values = _read_matrix_csv(path, hierarchy)
    regs = {}
    for name, rpath in (regressors or {}).items():
        regs[name] = _read_matrix_csv(rpath, hierarchy)
    return SeriesPanel(hierarchy, values, s, regs)


def write_series_csv(panel: SeriesPanel, path):
    ids = panel.node_ids
    lines = ["t," + ",".join(ids)]
    for t in range(panel.n):
        lines.append(str(t + 1) + "," + ",".join(fmt_float(v) for v in panel.values[:, t]))
    return write_text_atomic(path, "\n".join(lines) + "\n")
