"""Information orders over a finite policy grid.

Policies are addressed by their row index in ``PolicyOrder.grid``. Three
relation modes are supported:

* ``total``: a total order given by lexicographic comparison of key rows
  (every case-study order is of this form);
* ``identity``: the trivial order where only ``a == b`` is related;
* ``general``: an arbitrary predicate over index pairs, used for small
  hand-built posets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import IopeaError, PolicyParam, Trajectory

WIDTH_CAP = 10_000

Estimator = Callable[[np.ndarray, Trajectory], np.ndarray]


@dataclass(frozen=True, eq=False)
class PolicyOrder:
    grid: np.ndarray
    mode: str = "general"
    relation: Optional[Callable[[int, int], bool]] = None
    keys: Optional[np.ndarray] = None
    estimator: Optional[Estimator] = None
    kind: str = "sample_path"
    alpha: float = 1.0
    t_h: Callable[[float], int] = field(default=lambda delta: 1)
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        object.__setattr__(self, "grid", grid)
        if self.mode not in ("total", "identity", "general"):
            raise ValueError(f"unknown order mode {self.mode!r}")
        if self.mode == "total" and self.keys is None:
            raise ValueError("total order needs key rows")
        if self.mode == "general" and self.relation is None:
            raise ValueError("general order needs a relation")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.kind == "sample_path" and (self.alpha != 1.0 or self.t_h(0.05) != 1):
            raise ValueError("sample-path orders have alpha == 1 and t_h == 1")
        self._index.update({tuple(row): i for i, row in enumerate(grid.tolist())})

    def __len__(self) -> int:
        return self.grid.shape[0]

    def index_of(self, p) -> int:
        if isinstance(p, (int, np.integer)):
            if not 0 <= int(p) < len(self):
                raise IopeaError("unknown-policy", f"index {p} outside ground set")
            return int(p)
        coords = p.coords if isinstance(p, PolicyParam) else tuple(np.atleast_1d(p).tolist())
        try:
            return self._index[tuple(float(c) for c in coords)]
        except KeyError:
            raise IopeaError("unknown-policy", f"{coords} not in ground set") from None

    def param(self, i: int) -> PolicyParam:
        return PolicyParam(tuple(self.grid[i].tolist()))

    def related(self, i: int, j: int) -> bool:
        if self.mode == "identity":
            return i == j
        if self.mode == "total":
            return tuple(self.keys[i]) <= tuple(self.keys[j])
        return bool(self.relation(i, j))

    def canonical(self, idx) -> np.ndarray:
        """Indices sorted lexicographically by grid coordinates."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return idx
        pts = self.grid[idx]
        return idx[np.lexsort(pts.T[::-1])]

    def estimate(self, theta_prime, traj: Trajectory, source=None) -> float:
        return float(self.estimate_many([theta_prime], traj, source)[0])

    def estimate_many(self, targets, traj: Trajectory, source=None) -> np.ndarray:
        if self.estimator is None:
            raise IopeaError("order-violated", "order has no estimator attached")
        t_idx = np.array([self.index_of(t) for t in targets], dtype=np.int64)
        src = self.index_of(source) if source is not None else self.index_of(traj.policy)
        for i in t_idx:
            if not self.related(int(i), src):
                raise IopeaError("not-dominated", f"{self.param(int(i))} is not below {self.param(src)}")
        return np.asarray(self.estimator(self.grid[t_idx], traj), dtype=float)


def leq(order: PolicyOrder, a, b) -> bool:
    return order.related(order.index_of(a), order.index_of(b))


def maximal_set(order: PolicyOrder, active) -> np.ndarray:
    """Maximal elements of ``active`` in canonical (lexicographic) order."""
    idx = _indices(order, active)
    if idx.size == 0:
        raise IopeaError("empty-active-set")
    if order.mode == "identity":
        return order.canonical(idx)
    if order.mode == "total":
        keys = order.keys[idx]
        top = idx[np.lexsort(keys.T[::-1])[-1]]
        return np.array([top], dtype=np.int64)
    out = []
    for i in idx:
        dominated = any(j != i and order.related(int(i), int(j)) for j in idx)
        if not dominated:
            out.append(i)
    return order.canonical(out)


def _indices(order: PolicyOrder, active) -> np.ndarray:
    if isinstance(active, np.ndarray) and active.dtype.kind in "iu":
        return np.unique(active.astype(np.int64))
    return np.unique(np.array([order.index_of(a) for a in active], dtype=np.int64))


def relation_matrix(order: PolicyOrder, idx=None) -> np.ndarray:
    idx = np.arange(len(order)) if idx is None else np.asarray(idx)
    n = idx.size
    if order.mode == "identity":
        return np.eye(n, dtype=bool)
    if order.mode == "total":
        keys = order.keys[idx]
        # rank rows so lexicographic comparison becomes integer comparison
        rank = np.empty(n, dtype=np.int64)
        order_ = np.lexsort(keys.T[::-1])
        sorted_keys = keys[order_]
        r = 0
        for pos in range(n):
            if pos > 0 and not np.array_equal(sorted_keys[pos], sorted_keys[pos - 1]):
                r += 1
            rank[order_[pos]] = r
        return rank[:, None] <= rank[None, :]
    m = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(n):
            m[a, b] = order.related(int(idx[a]), int(idx[b]))
    return m


def transitive_closure(rel: np.ndarray) -> np.ndarray:
    closure = rel.copy()
    n = closure.shape[0]
    for k in range(n):
        closure |= closure[:, k : k + 1] & closure[k : k + 1, :]
    return closure


def width(order: PolicyOrder, cap: int = WIDTH_CAP) -> int:
    """Maximum antichain size, via Dilworth: n minus a maximum matching in
    the strict comparability graph of the transitive closure."""
    n = len(order)
    if order.mode == "total":
        return 1
    if order.mode == "identity":
        return n
    if n > cap:
        raise IopeaError("poset-too-large", f"{n} policies exceed cap {cap}")
    closure = transitive_closure(relation_matrix(order))
    np.fill_diagonal(closure, False)
    matching = maximum_bipartite_matching(csr_matrix(closure.astype(np.int8)), perm_type="column")
    return int(n - np.count_nonzero(matching >= 0))


def assign_estimators(order: PolicyOrder, active, maxima) -> dict[int, int]:
    """Map every active index to the first canonical maximum dominating it."""
    act = _indices(order, active)
    maxs = order.canonical(_indices(order, maxima))
    out: dict[int, int] = {}
    if order.mode == "total" and maxs.size == 1:
        top = int(maxs[0])
        highest = act[np.lexsort(order.keys[act].T[::-1])[-1]]
        if tuple(order.keys[highest]) > tuple(order.keys[top]):
            raise IopeaError("order-violated", "an active policy is not below the maximum")
        return {int(i): top for i in act}
    for i in act:
        for m in maxs:
            if order.related(int(i), int(m)):
                out[int(i)] = int(m)
                break
        else:
            raise IopeaError("order-violated", f"{order.param(int(i))} dominated by no maximal element")
    return out


def total_order(grid: np.ndarray, keys: np.ndarray, estimator: Optional[Estimator] = None,
                kind: str = "sample_path", alpha: float = 1.0, t_h: int = 1) -> PolicyOrder:
    return PolicyOrder(grid=grid, mode="total", keys=np.asarray(keys, dtype=float),
                       estimator=estimator, kind=kind, alpha=alpha, t_h=_const(t_h))


def trivial_order(grid: np.ndarray, estimator: Optional[Estimator] = None) -> PolicyOrder:
    return PolicyOrder(grid=grid, mode="identity", estimator=estimator)


def _const(value: int) -> Callable[[float], int]:
    v = int(value)
    return lambda delta: v
