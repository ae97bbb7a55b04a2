"""Error-bound quantities for masked-diffusion completion.

With D, A the degree/adjacency matrices and c/o indexing missing/observed
nodes, the bound machinery works with the block shorthands

    P = [[0, 0], [0, I]] (I - D^-1 A)        (rows at observed nodes zeroed)
    Q = [[0, 0], [0, I]] (I + D^-1 A)
    U = I + D_cc^-1 A_cc
    V = I - D_cc^-1 A_cc
    Y = D_cc^-1 A_co

and the two scalars

    psi = ||P F0||_F      (diffusion-objective cost of the true signal)
    phi = ||U||_2         (spectral norm; in (0, 2) when every missing
                           node has an edge leaving the missing set)

The completion error over missing nodes satisfies
``||W_c||_F <= psi / (2 - phi)`` whenever ``phi < 2``. The analogous bound
for total-variation inpainting uses ``eta = ||F0 - A' F0||_F`` and
``q = || [A'_oc ; I + A'_cc] ||_2`` with A' the adjacency scaled by its
largest eigenvalue magnitude, giving ``2 |eta| / (2 - q)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraph, SingularDegree
from .graph import ObservationSet, SparseGraph, partition_blocks

PHI_GUARD = 1e-9
SPECTRAL_TOL = 1e-9
SPECTRAL_MAX_ITERS = 10_000


def spectral_norm(matrix, *, tol: float = SPECTRAL_TOL,
                  max_iters: int = SPECTRAL_MAX_ITERS, seed: int = 0) -> float:
    """Largest singular value via power iteration on the Gram operator,
    with a seeded start vector for determinism."""
    cols = matrix.shape[1]
    if cols == 0 or matrix.shape[0] == 0:
        return 0.0
    if sp.issparse(matrix):
        m = matrix.tocsr()
        mt = m.T.tocsr()
    else:
        m = np.asarray(matrix, dtype=np.float64)
        mt = m.T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(cols)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = mt @ (m @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / norm_w
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def _require_invertible_degrees(g: SparseGraph) -> None:
    if g.zero_degree_ids.size:
        raise SingularDegree(
            f"{g.zero_degree_ids.size} node(s) have degree zero; exclude them first"
        )


@dataclass(frozen=True, eq=False)
class BoundMatrices:
    """Dense block shorthands in the (observed, missing) node ordering.
    Intended for small instances and test oracles; the bound scalars are
    computed from sparse blocks instead."""

    p: np.ndarray
    q: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray


def bound_matrices(g: SparseGraph, omega: ObservationSet) -> BoundMatrices:
    """Materialise P, Q, U, V, Y as dense arrays (see module docstring)."""
    _require_invertible_degrees(g)
    if omega.n != g.n:
        raise ValueError(f"observation set is over {omega.n} nodes, graph has {g.n}")
    perm = np.concatenate([omega.observed, omega.missing])
    a = g.adjacency[perm][:, perm].toarray()
    d = g.degrees[perm]
    scaled = a / d[:, None]
    eye = np.eye(g.n)
    selector = np.zeros((g.n, 1))
    selector[omega.observed.size :] = 1.0
    p = selector * (eye - scaled)
    q = selector * (eye + scaled)
    blocks = partition_blocks(g, omega)
    n_mis = omega.missing.size
    a_cc = blocks.a_cc.toarray()
    a_co = blocks.a_co.toarray()
    d_cc = blocks.d_cc[:, None] if n_mis else np.empty((0, 1))
    u = np.eye(n_mis) + (a_cc / d_cc if n_mis else a_cc)
    v = np.eye(n_mis) - (a_cc / d_cc if n_mis else a_cc)
    y = a_co / d_cc if n_mis else a_co
    return BoundMatrices(p, q, u, v, y)


def compute_psi(g: SparseGraph, omega: ObservationSet, f0) -> float:
    """Frobenius cost of the reference signal under the masked diffusion
    objective: ``psi = ||P F0||_F``, computed from sparse blocks."""
    _require_invertible_degrees(g)
    values = f0.values if hasattr(f0, "values") else np.asarray(f0, dtype=np.float64)
    if values.shape[0] != g.n:
        raise ValueError(f"signal has {values.shape[0]} rows, graph has {g.n} nodes")
    mis = omega.missing
    if mis.size == 0:
        return 0.0
    neighbour_mean = (g.adjacency[mis] @ values) / g.degrees[mis][:, None]
    return float(np.linalg.norm(values[mis] - neighbour_mean))


def compute_phi(g: SparseGraph, omega: ObservationSet, *,
                tol: float = SPECTRAL_TOL, max_iters: int = SPECTRAL_MAX_ITERS) -> float:
    """Spectral norm of ``U = I + D_cc^-1 A_cc``."""
    _require_invertible_degrees(g)
    blocks = partition_blocks(g, omega)
    n_mis = blocks.missing.size
    if n_mis == 0:
        return 0.0
    scaled = sp.diags_array(1.0 / blocks.d_cc, format="csr") @ blocks.a_cc
    u = (sp.eye_array(n_mis, format="csr") + scaled).tocsr()
    return spectral_norm(u, tol=tol, max_iters=max_iters)


def graphprop_bound(psi: float, phi: float) -> float | None:
    """``psi / (2 - phi)`` when ``phi < 2`` (within a small guard),
    otherwise None: the bound is inapplicable."""
    if phi >= 2.0 - PHI_GUARD:
        return None
    return abs(psi) / (2.0 - phi)


@dataclass(frozen=True)
class GtvmBound:
    eta: float
    q: float
    bound: float | None


def gtvm_bound(g: SparseGraph, omega: ObservationSet, f0) -> GtvmBound:
    """Bound quantities for total-variation inpainting on the same graph
    (see module docstring)."""
    if g.adjacency.nnz == 0:
        raise EmptyGraph("adjacency has no edges; largest eigenvalue is zero")
    values = f0.values if hasattr(f0, "values") else np.asarray(f0, dtype=np.float64)
    if values.shape[0] != g.n:
        raise ValueError(f"signal has {values.shape[0]} rows, graph has {g.n} nodes")
    # For a symmetric nonnegative adjacency the dominant eigenvalue equals
    # the spectral norm.
    lam_max = spectral_norm(g.adjacency)
    a_norm = g.adjacency / lam_max
    eta = float(np.linalg.norm(values - a_norm @ values))
    mis = omega.missing
    if mis.size == 0:
        return GtvmBound(eta, 0.0, abs(eta))
    obs = omega.observed
    a_oc = a_norm[obs][:, mis]
    a_cc = a_norm[mis][:, mis]
    stacked = sp.vstack([a_oc, sp.eye_array(mis.size, format="csr") + a_cc]).tocsr()
    q = spectral_norm(stacked)
    bound = 2.0 * abs(eta) / (2.0 - q) if q < 2.0 - PHI_GUARD else None
    return GtvmBound(eta, q, bound)


@dataclass(frozen=True)
class BoundReport:
    """All bound quantities plus the measured error for one completion."""

    psi: float
    phi: float
    bound: float | None
    measured_error: float
    gtvm_eta: float
    gtvm_q: float
    gtvm_bound: float | None
    applicable: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "BoundReport":
        return cls(**data)


def evaluate_bounds(g: SparseGraph, omega: ObservationSet, f0, fhat,
                    *, exclude_zero_degree: bool = True) -> BoundReport:
    """Compute a :class:`BoundReport` for one completion instance.

    ``f0`` is the true full fiber matrix, ``fhat`` the completed one. When
    ``exclude_zero_degree`` is set, zero-degree nodes are dropped from the
    graph and both signals before any quantity is computed (they cannot be
    reached by propagation and the degree matrix would be singular).
    """
    f0_values = f0.values if hasattr(f0, "values") else np.asarray(f0, dtype=np.float64)
    fhat_values = fhat.values if hasattr(fhat, "values") else np.asarray(fhat, dtype=np.float64)
    if f0_values.shape != fhat_values.shape:
        raise ValueError("true and estimated signals must share a shape")
    if exclude_zero_degree and g.zero_degree_ids.size:
        keep = np.setdiff1d(np.arange(g.n, dtype=np.int64), g.zero_degree_ids)
        sub_adj = g.adjacency[keep][:, keep].tocsr()
        degrees = np.asarray(sub_adj.sum(axis=1)).ravel()
        g = SparseGraph(keep.size, sub_adj, degrees, np.empty(0, dtype=np.int64))
        keep_observed = np.searchsorted(keep, np.intersect1d(omega.observed, keep))
        omega = ObservationSet(keep.size, keep_observed)
        f0_values = f0_values[keep]
        fhat_values = fhat_values[keep]
    psi = compute_psi(g, omega, f0_values)
    phi = compute_phi(g, omega)
    bound = graphprop_bound(psi, phi)
    measured = float(np.linalg.norm(f0_values[omega.missing] - fhat_values[omega.missing]))
    gtvm = gtvm_bound(g, omega, f0_values)
    return BoundReport(
        psi=psi,
        phi=phi,
        bound=bound,
        measured_error=measured,
        gtvm_eta=gtvm.eta,
        gtvm_q=gtvm.q,
        gtvm_bound=gtvm.bound,
        applicable=bound is not None,
    )
