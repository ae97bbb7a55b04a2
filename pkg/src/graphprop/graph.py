"""kNN edge sets over observed fibers, edge-set unions, and Laplacian assembly.

Node ids are 0-based throughout the Python API; the text edge-list format
uses 1-based ids.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import DataError, NonFiniteInput, TooFewObserved
from .tensor import FiberMatrix

# Exact tree search is only worthwhile in low dimension; above this the
# blocked brute-force path is used.
KDTREE_MAX_CHANNELS = 16


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Ids of the fully observed fibers of one acquisition."""

    n: int
    observed: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("node count must be positive")
        ids = np.sort(np.asarray(self.observed, dtype=np.int64).ravel())
        if ids.size and (ids[0] < 0 or ids[-1] >= n):
            raise ValueError(f"observed ids must lie in [0, {n})")
        if ids.size > 1 and np.any(np.diff(ids) == 0):
            raise ValueError("observed ids must be unique")
        ids.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "observed", ids)

    @cached_property
    def missing(self) -> np.ndarray:
        """Complement ids, in increasing order."""
        out = np.setdiff1d(np.arange(self.n, dtype=np.int64), self.observed)
        out.setflags(write=False)
        return out

    @property
    def n_observed(self) -> int:
        return int(self.observed.size)


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Undirected edges without self-loops, stored as canonical (u, v)
    rows with u < v, lexicographically sorted and unique."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("node count must be positive")
        arr = np.asarray(self.edges, dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("edges must be given as (E, 2) pairs")
        if arr.size:
            if arr.min() < 0 or arr.max() >= n:
                raise ValueError(f"edge endpoints must lie in [0, {n})")
            if np.any(arr[:, 0] == arr[:, 1]):
                raise ValueError("self-loops are not allowed")
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            arr = np.unique(np.column_stack([lo, hi]), axis=0)
        arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", arr)

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "EdgeSet":
        arr = np.array(sorted((int(u), int(v)) for u, v in pairs), dtype=np.int64)
        return cls(n, arr.reshape(-1, 2))

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)

    def to_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}


def _knn_neighbors_tree(pts: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Directed kNN relations via an exact kd-tree query.

    Ties at the k-th distance are resolved by smaller index through an
    exact ball query around the boundary radius.
    """
    n_obs = pts.shape[0]
    tree = cKDTree(pts)
    kk = k + 2  # one slot for self plus one to certify the boundary
    dists, idxs = tree.query(pts, k=kk)
    self_mask = idxs == np.arange(n_obs)[:, None]
    # Distances to *other* points, ascending (self pushed to the end).
    other_d = np.sort(np.where(self_mask, np.inf, dists), axis=1)
    dk = other_d[:, k - 1]
    strict = other_d[:, k] > other_d[:, k - 1]

    src = []
    dst = []
    cheap = np.nonzero(strict)[0]
    if cheap.size:
        sel = (~self_mask[cheap]) & (dists[cheap] <= dk[cheap, None])
        rows, cols = np.nonzero(sel)
        src.append(cheap[rows])
        dst.append(idxs[cheap][rows, cols])
    for i in np.nonzero(~strict)[0]:
        radius = dk[i] * (1.0 + 1e-12) + 1e-300
        cand = np.asarray(tree.query_ball_point(pts[i], radius), dtype=np.int64)
        cand = cand[cand != i]
        dd = np.linalg.norm(pts[cand] - pts[i], axis=1)
        order = np.lexsort((cand, dd))
        chosen = cand[order[:k]]
        src.append(np.full(chosen.size, i, dtype=np.int64))
        dst.append(chosen)
    return np.concatenate(src), np.concatenate(dst)


def _knn_neighbors_brute(pts: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Directed kNN relations by blocked brute force; ties broken by
    smaller index via a per-row lexicographic sort."""
    n_obs = pts.shape[0]
    sq = np.einsum("ij,ij->i", pts, pts)
    ids = np.arange(n_obs, dtype=np.int64)
    block = max(1, int(2e7) // max(1, n_obs))
    src = []
    dst = []
    for start in range(0, n_obs, block):
        stop = min(start + block, n_obs)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (pts[start:stop] @ pts.T)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        keys = np.broadcast_to(ids, d2.shape)
        order = np.lexsort((keys, d2), axis=-1)[:, :k]
        src.append(np.repeat(np.arange(start, stop, dtype=np.int64), k))
        dst.append(order.ravel())
    return np.concatenate(src), np.concatenate(dst)


def knn_edges(features: FiberMatrix, observed: ObservationSet, k: int) -> EdgeSet:
    """Connect each observed fiber to its k nearest observed fibers by
    Euclidean distance, symmetrised by union of the directed relations.

    Distance ties are broken by smaller node id; duplicate feature rows
    are legal neighbours (distance zero) but a node is never its own
    neighbour.
    """
    if features.n != observed.n:
        raise ValueError(
            f"features describe {features.n} nodes, observation set has {observed.n}"
        )
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    obs = observed.observed
    if obs.size < k + 1:
        raise TooFewObserved(
            f"need at least {k + 1} observed fibers for k={k}, got {obs.size}"
        )
    pts = np.ascontiguousarray(features.values[obs])
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput("observed fiber features must be finite")
    n_obs = pts.shape[0]
    if n_obs == k + 1:
        # Every other observed node is among the k nearest.
        grid = np.arange(n_obs, dtype=np.int64)
        src, dst = np.meshgrid(grid, grid, indexing="ij")
        keep = src != dst
        src, dst = src[keep], dst[keep]
    elif pts.shape[1] <= KDTREE_MAX_CHANNELS:
        src, dst = _knn_neighbors_tree(pts, k)
    else:
        src, dst = _knn_neighbors_brute(pts, k)
    pairs = np.column_stack([obs[src], obs[dst]])
    return EdgeSet(observed.n, pairs)


def union_edges(sets) -> EdgeSet:
    """Set union of edge sets sharing the same node count."""
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one edge set")
    n = sets[0].n
    for s in sets[1:]:
        if s.n != n:
            raise ValueError(f"mismatched node counts: {s.n} != {n}")
    stacked = np.concatenate([s.edges for s in sets], axis=0)
    return EdgeSet(n, stacked)


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Symmetric adjacency without self-loops plus degree and Laplacian views."""

    n: int
    adjacency: sp.csr_array
    degrees: np.ndarray
    zero_degree_ids: np.ndarray

    @cached_property
    def laplacian(self) -> sp.csr_array:
        return (sp.diags_array(self.degrees, format="csr") - self.adjacency).tocsr()


def build_graph(e: EdgeSet, weights: np.ndarray | None = None) -> SparseGraph:
    """Assemble adjacency/degree/Laplacian from an edge set.

    ``weights`` optionally assigns a positive weight per canonical edge row
    (default: unweighted, all ones). Zero-degree nodes are reported in
    ``zero_degree_ids`` and left in place.
    """
    if weights is None:
        vals = np.ones(e.n_edges, dtype=np.float64)
    else:
        vals = np.asarray(weights, dtype=np.float64).ravel()
        if vals.shape[0] != e.n_edges:
            raise ValueError(f"need one weight per edge ({e.n_edges}), got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("edge weights must be finite and positive")
    rows = np.concatenate([e.edges[:, 0], e.edges[:, 1]])
    cols = np.concatenate([e.edges[:, 1], e.edges[:, 0]])
    adjacency = sp.csr_array(
        (np.concatenate([vals, vals]), (rows, cols)), shape=(e.n, e.n)
    )
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    zero_degree = np.nonzero(degrees == 0)[0].astype(np.int64)
    return SparseGraph(e.n, adjacency, degrees, zero_degree)


@dataclass(frozen=True, eq=False)
class GraphBlocks:
    """Blocks of A and L under the (observed, missing) node ordering."""

    observed: np.ndarray
    missing: np.ndarray
    a_oo: sp.csr_array
    a_oc: sp.csr_array
    a_co: sp.csr_array
    a_cc: sp.csr_array
    l_co: sp.csr_array
    l_cc: sp.csr_array
    d_cc: np.ndarray


def partition_blocks(g: SparseGraph, omega: ObservationSet) -> GraphBlocks:
    """Slice adjacency and Laplacian into observed/missing blocks, indexed
    by increasing observed ids then increasing missing ids."""
    if omega.n != g.n:
        raise ValueError(f"observation set is over {omega.n} nodes, graph has {g.n}")
    obs = omega.observed
    mis = omega.missing
    a_obs_rows = g.adjacency[obs]
    a_mis_rows = g.adjacency[mis]
    a_oo = a_obs_rows[:, obs].tocsr()
    a_oc = a_obs_rows[:, mis].tocsr()
    a_co = a_mis_rows[:, obs].tocsr()
    a_cc = a_mis_rows[:, mis].tocsr()
    d_cc = g.degrees[mis]
    l_cc = (sp.diags_array(d_cc, format="csr") - a_cc).tocsr()
    l_co = (-a_co).tocsr()
    return GraphBlocks(obs, mis, a_oo, a_oc, a_co, a_cc, l_co, l_cc, d_cc)


_EDGE_HEADER = re.compile(r"#\s*n\s*=\s*(\d+)\s*$")


def save_edge_list(e: EdgeSet, path) -> None:
    """Text edge list: header '# n=<N>', then one '<u> <v>' line per edge,
    1-based ids."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={e.n}\n")
        for u, v in e.edges:
            fh.write(f"{u + 1} {v + 1}\n")


def load_edge_list(path) -> EdgeSet:
    """Parse the text edge-list format written by :func:`save_edge_list`.

    Duplicate edges collapse to one; self-loop lines are skipped (external
    datasets sometimes carry them, the graphs here never do).
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    it = iter(enumerate(lines, start=1))
    n = None
    for lineno, line in it:
        if not line.strip():
            continue
        m = _EDGE_HEADER.match(line.strip())
        if not m:
            raise DataError(f"{path}:{lineno}: expected header '# n=<N>'")
        n = int(m.group(1))
        break
    if n is None:
        raise DataError(f"{path}: empty file")
    pairs = []
    for lineno, line in it:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected '<u> <v>', got {text!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-integer ids") from exc
        if not (1 <= u <= n and 1 <= v <= n):
            raise DataError(f"{path}:{lineno}: ids must lie in 1..{n}")
        if u == v:
            continue
        pairs.append((u - 1, v - 1))
    try:
        return EdgeSet.from_pairs(n, pairs)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
