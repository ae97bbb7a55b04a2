"""Masked diffusion over the unified graph: steady-state solves, explicit
iteration, the end-to-end multi-acquisition pipeline, and median
thresholding for label tasks.

The steady state pins observed fibers and drives every missing fiber to
the arithmetic mean of its neighbours' fibers, i.e. it solves the grounded
Laplacian system

    L_cc F_c = -L_co F_o

where c/o index missing/observed nodes. The system is symmetric positive
definite whenever every missing component touches an observed node.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.csgraph import connected_components

from .errors import (
    CoverageViolationWarning,
    MaxItersExceeded,
    NonFiniteInput,
    UnreachableComponent,
)
from .graph import ObservationSet, SparseGraph, build_graph, knn_edges, union_edges
from .tensor import FiberMatrix

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SolverStats:
    method: str
    iterations: int
    residual_norm: float
    converged: bool


@dataclass(frozen=True, eq=False)
class CompletionResult:
    """Completed fiber matrix plus bookkeeping.

    Rows of ``completed`` at observed ids equal the inputs bit for bit.
    ``filled_ids`` are the missing nodes actually solved; ``excluded_ids``
    are zero-degree or unreachable missing nodes, filled with the
    per-channel mean of the observed fibers.
    """

    completed: FiberMatrix
    observed_ids: np.ndarray
    filled_ids: np.ndarray
    excluded_ids: np.ndarray
    stats: SolverStats


def _split_reachable(g: SparseGraph, omega: ObservationSet, on_unreachable: str):
    """Partition the missing ids into solvable and excluded nodes.

    Zero-degree missing nodes are always excluded (no propagation can reach
    them). Missing nodes whose component has edges but no observed node
    raise :class:`UnreachableComponent` unless ``on_unreachable='exclude'``.
    """
    if on_unreachable not in ("raise", "exclude"):
        raise ValueError(f"on_unreachable must be 'raise' or 'exclude', got {on_unreachable!r}")
    mis = omega.missing
    if mis.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    _, labels = connected_components(g.adjacency, directed=False)
    observed_labels = np.zeros(labels.max() + 1, dtype=bool)
    observed_labels[labels[omega.observed]] = True
    reachable = observed_labels[labels[mis]] & (g.degrees[mis] > 0)
    excluded = mis[~reachable]
    if on_unreachable == "raise":
        bad = excluded[g.degrees[excluded] > 0]
        if bad.size:
            raise UnreachableComponent(
                f"{bad.size} missing node(s) lie in components with no observed node"
            )
    return mis[reachable], excluded


def _fill_rows(values: np.ndarray, omega: ObservationSet, f_obs: np.ndarray,
               kept: np.ndarray, solution: np.ndarray, excluded: np.ndarray) -> None:
    values[omega.observed] = f_obs
    if kept.size:
        values[kept] = solution
    if excluded.size:
        values[excluded] = f_obs.mean(axis=0)


def _laplacian_blocks(g: SparseGraph, omega: ObservationSet, kept: np.ndarray):
    lap = g.laplacian
    rows = lap[kept]
    l_kk = rows[:, kept].tocsr()
    l_ko = rows[:, omega.observed].tocsr()
    return l_kk, l_ko


def solve_steady_state(
    g: SparseGraph,
    omega: ObservationSet,
    f_obs: np.ndarray,
    *,
    method: str = "cg",
    tol: float = DEFAULT_TOL,
    max_iters: int | None = None,
    on_unreachable: str = "raise",
) -> CompletionResult:
    """Solve the grounded Laplacian system for the missing fibers.

    Parameters
    ----------
    g, omega : graph and observation set over the same nodes.
    f_obs : (n_observed, channels) observed fiber values, row order
        matching ``omega.observed``.
    method : 'cg' (Jacobi-preconditioned conjugate gradient, the default),
        'splu' (sparse direct), or 'cholesky' (dense, for small systems).
    tol : relative residual target per channel (iterative path).
    max_iters : CG iteration cap; defaults to 10x the system size.
    on_unreachable : 'raise' (default) or 'exclude'; see
        :func:`_split_reachable`.
    """
    f_obs = np.asarray(f_obs, dtype=np.float64)
    if f_obs.ndim != 2 or f_obs.shape[0] != omega.observed.size:
        raise ValueError(
            f"observed values must be ({omega.observed.size}, channels), got {f_obs.shape}"
        )
    if not np.all(np.isfinite(f_obs)):
        raise NonFiniteInput("observed fiber values must be finite")
    if g.n != omega.n:
        raise ValueError(f"graph has {g.n} nodes, observation set {omega.n}")

    kept, excluded = _split_reachable(g, omega, on_unreachable)
    channels = f_obs.shape[1]
    values = np.empty((g.n, channels), dtype=np.float64)

    if kept.size == 0:
        _fill_rows(values, omega, f_obs, kept, np.empty((0, channels)), excluded)
        stats = SolverStats(method, 0, 0.0, True)
        return CompletionResult(FiberMatrix(values), omega.observed, kept, excluded, stats)

    l_kk, l_ko = _laplacian_blocks(g, omega, kept)
    b = -(l_ko @ f_obs)

    if method == "cg":
        if max_iters is None:
            max_iters = 10 * kept.size
        solution = np.empty_like(b)
        precond = sp.diags_array(1.0 / l_kk.diagonal(), format="csr")
        iterations = 0
        converged = True
        for j in range(channels):
            count = 0

            def _cb(_xk):
                nonlocal count
                count += 1

            xj, info = spla.cg(
                l_kk, b[:, j], rtol=tol, atol=0.0, maxiter=max_iters, M=precond, callback=_cb
            )
            solution[:, j] = xj
            iterations = max(iterations, count)
            converged = converged and info == 0
        if not converged:
            warnings.warn(
                f"conjugate gradient hit the {max_iters}-iteration cap", MaxItersExceeded
            )
    elif method == "splu":
        lu = spla.splu(l_kk.tocsc())
        solution = lu.solve(b)
        iterations, converged = 0, True
    elif method == "cholesky":
        factor = cho_factor(l_kk.toarray())
        solution = cho_solve(factor, b)
        iterations, converged = 0, True
    else:
        raise ValueError(f"unknown method {method!r}")

    residual = float(np.linalg.norm(l_kk @ solution - b))
    _fill_rows(values, omega, f_obs, kept, solution, excluded)
    stats = SolverStats(method, iterations, residual, converged)
    return CompletionResult(FiberMatrix(values), omega.observed, kept, excluded, stats)


def diffuse_iterative(
    g: SparseGraph,
    omega: ObservationSet,
    f_init: FiberMatrix,
    *,
    step: float | None = None,
    max_iters: int = 10_000,
    tol: float = DEFAULT_TOL,
    on_unreachable: str = "raise",
) -> CompletionResult:
    """Explicit diffusion updates towards the steady state.

    Repeatedly applies ``F_c <- F_c - step * (L_co F_o + L_cc F_c)`` while
    holding observed rows of ``f_init`` fixed, and stops once the Frobenius
    norm of the applied update drops to ``tol``. The default step
    1/max-degree over the solvable missing nodes guarantees contraction.
    """
    if f_init.n != g.n:
        raise ValueError(f"initial matrix has {f_init.n} rows, graph has {g.n} nodes")
    if omega.n != g.n:
        raise ValueError(f"observation set is over {omega.n} nodes, graph has {g.n}")
    f_obs = f_init.values[omega.observed]
    kept, excluded = _split_reachable(g, omega, on_unreachable)
    channels = f_init.channels
    values = np.array(f_init.values, copy=True)

    if kept.size == 0:
        _fill_rows(values, omega, f_obs, kept, np.empty((0, channels)), excluded)
        stats = SolverStats("diffusion", 0, 0.0, True)
        return CompletionResult(FiberMatrix(values), omega.observed, kept, excluded, stats)

    if step is None:
        step = 1.0 / float(g.degrees[kept].max())
    elif step <= 0:
        raise ValueError("step must be positive")

    l_kk, l_ko = _laplacian_blocks(g, omega, kept)
    fixed = l_ko @ f_obs
    current = values[kept].copy()
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        update = step * (fixed + l_kk @ current)
        current -= update
        if np.linalg.norm(update) <= tol:
            converged = True
            break
    if not converged and max_iters > 0:
        warnings.warn(
            f"diffusion did not reach tol={tol} within {max_iters} iterations",
            MaxItersExceeded,
        )
    residual = float(np.linalg.norm(fixed + l_kk @ current))
    _fill_rows(values, omega, f_obs, kept, current, excluded)
    stats = SolverStats("diffusion", it, residual, converged)
    return CompletionResult(FiberMatrix(values), omega.observed, kept, excluded, stats)


def graphprop(
    acquisitions,
    k: int,
    *,
    method: str = "cg",
    tol: float = DEFAULT_TOL,
    max_iters: int | None = None,
) -> list[CompletionResult]:
    """Complete every acquisition over one unified kNN graph.

    ``acquisitions`` is a list of ``(f_obs, omega)`` pairs: per-acquisition
    observed fiber values (rows matching ``omega.observed``) and
    observation sets sharing the node count. Per-acquisition kNN edge sets
    are built over the observed fibers only, their union defines a single
    Laplacian, and one steady-state solve runs per acquisition.

    Nodes observed in no acquisition trigger a
    :class:`CoverageViolationWarning` and end up excluded with the mean
    fill policy.
    """
    acquisitions = [(np.asarray(f, dtype=np.float64), om) for f, om in acquisitions]
    if not acquisitions:
        raise ValueError("need at least one acquisition")
    n = acquisitions[0][1].n
    channels = acquisitions[0][0].shape[1]
    for f, om in acquisitions:
        if om.n != n:
            raise ValueError("acquisitions must share the node count")
        if f.ndim != 2 or f.shape != (om.observed.size, channels):
            raise ValueError(
                f"observed values must be ({om.observed.size}, {channels}), got {f.shape}"
            )

    covered = np.zeros(n, dtype=bool)
    for _, om in acquisitions:
        covered[om.observed] = True
    if not covered.all():
        warnings.warn(
            f"{int((~covered).sum())} node(s) observed in no acquisition; "
            "they will be excluded and mean-filled",
            CoverageViolationWarning,
        )

    edge_sets = []
    for f, om in acquisitions:
        features = np.zeros((n, channels), dtype=np.float64)
        features[om.observed] = f
        edge_sets.append(knn_edges(FiberMatrix(features), om, k))
    graph = build_graph(union_edges(edge_sets))

    return [
        solve_steady_state(
            graph, om, f, method=method, tol=tol, max_iters=max_iters,
            on_unreachable="exclude",
        )
        for f, om in acquisitions
    ]


def median_threshold(values: np.ndarray, solved_ids: np.ndarray,
                     unobserved_ids: np.ndarray, out: np.ndarray) -> None:
    """Label ``unobserved_ids`` as 1 where their value exceeds the median
    of the values at ``solved_ids`` (ties and below give 0), writing into
    ``out``."""
    if solved_ids.size:
        med = float(np.median(values[solved_ids]))
    elif unobserved_ids.size:
        med = float(np.median(values[unobserved_ids]))
    else:
        return
    out[unobserved_ids] = (values[unobserved_ids] > med).astype(np.int64)


def classify_by_median(result: CompletionResult, channel: int) -> np.ndarray:
    """Binary labels for every node: observed nodes keep their given 0/1
    values, unobserved nodes are thresholded at the median of the solved
    values."""
    if not 0 <= channel < result.completed.channels:
        raise ValueError(f"channel {channel} out of range")
    values = result.completed.values[:, channel]
    labels = np.zeros(result.completed.n, dtype=np.int64)
    labels[result.observed_ids] = values[result.observed_ids].astype(np.int64)
    unobserved = np.concatenate([result.filled_ids, result.excluded_ids])
    median_threshold(values, result.filled_ids, unobserved, labels)
    return labels
