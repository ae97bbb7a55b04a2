import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphprop import (
    BoundReport,
    EdgeSet,
    ObservationSet,
    bound_matrices,
    build_graph,
    compute_phi,
    compute_psi,
    evaluate_bounds,
    graphprop_bound,
    gtvm_bound,
    gtvm_inpaint,
    solve_steady_state,
    spectral_norm,
)
from graphprop.errors import EmptyGraph, SingularDegree
from graphprop.graph import partition_blocks


def path3():
    return build_graph(EdgeSet.from_pairs(3, [(0, 1), (1, 2)]))


def random_instance(seed, n_lo=5, n_hi=40, channels=2, require_missing=True):
    """Random connected-enough instance with no zero-degree nodes."""
    rng = np.random.default_rng(seed)
    while True:
        n = int(rng.integers(n_lo, n_hi))
        tri = np.array([(u, v) for u in range(n) for v in range(u + 1, n)])
        keep = rng.random(len(tri)) < rng.uniform(0.15, 0.6)
        if not keep.any():
            continue
        g = build_graph(EdgeSet(n, tri[keep]))
        if g.zero_degree_ids.size:
            continue
        n_obs = int(rng.integers(1, n))
        omega = ObservationSet(n, np.sort(rng.choice(n, size=n_obs, replace=False)))
        if require_missing and omega.missing.size == 0:
            continue
        f0 = rng.standard_normal((n, channels))
        return g, omega, f0


def test_matrices_with_no_missing_adjacency():
    # two missing nodes, no edges between them
    g = build_graph(EdgeSet.from_pairs(4, [(0, 2), (0, 3), (1, 2), (1, 3)]))
    omega = ObservationSet(4, [0, 1])
    m = bound_matrices(g, omega)
    assert np.array_equal(m.u, np.eye(2))
    assert np.array_equal(m.v, np.eye(2))


def test_matrices_path_example():
    m = bound_matrices(path3(), ObservationSet(3, [0, 2]))
    assert np.array_equal(m.u, [[1.0]])
    assert np.array_equal(m.v, [[1.0]])
    assert np.array_equal(m.y, [[0.5, 0.5]])


def test_matrices_require_degrees():
    g = build_graph(EdgeSet.from_pairs(3, [(0, 1)]))
    with pytest.raises(SingularDegree):
        bound_matrices(g, ObservationSet(3, [0]))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_p_plus_q_collapses_to_missing_selector(seed):
    g, omega, _ = random_instance(seed)
    m = bound_matrices(g, omega)
    rng = np.random.default_rng(seed + 1)
    w = rng.standard_normal((g.n, 3))
    w[: omega.observed.size] = 0.0  # reordered basis: observed rows first
    lhs = np.linalg.norm((m.p + m.q) @ w)
    rhs = 2.0 * np.linalg.norm(w[omega.observed.size :])
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, rhs)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_block_identities(seed):
    g, omega, _ = random_instance(seed)
    m = bound_matrices(g, omega)
    blocks = partition_blocks(g, omega)
    d_inv = 1.0 / blocks.d_cc[:, None]
    assert np.max(np.abs(m.v - d_inv * blocks.l_cc.toarray())) <= 1e-12
    assert np.max(np.abs(m.y - (-d_inv * blocks.l_co.toarray()))) <= 1e-12


def test_psi_constant_signal_is_zero():
    g, omega, _ = random_instance(11)
    f0 = np.ones((g.n, 2)) * 3.7
    assert compute_psi(g, omega, f0) <= 1e-12


def test_psi_all_observed_is_zero():
    g, _, f0 = random_instance(12, require_missing=False)
    omega = ObservationSet(g.n, np.arange(g.n))
    assert compute_psi(g, omega, f0) == 0.0


def test_psi_path_example():
    f0 = np.array([[0.0], [0.9], [1.0]])
    assert abs(compute_psi(path3(), ObservationSet(3, [0, 2]), f0) - 0.4) <= 1e-12


def test_psi_matches_dense_p():
    g, omega, f0 = random_instance(13)
    m = bound_matrices(g, omega)
    perm = np.concatenate([omega.observed, omega.missing])
    dense = np.linalg.norm(m.p @ f0[perm])
    assert abs(compute_psi(g, omega, f0) - dense) <= 1e-10


def test_phi_identity_when_no_missing_edges():
    g = build_graph(EdgeSet.from_pairs(4, [(0, 2), (0, 3), (1, 2), (1, 3)]))
    assert abs(compute_phi(g, ObservationSet(4, [0, 1])) - 1.0) <= 1e-9


def test_phi_pair_example():
    # two missing nodes joined to each other and one observed node each
    g = build_graph(EdgeSet.from_pairs(4, [(0, 1), (0, 2), (1, 3)]))
    omega = ObservationSet(4, [2, 3])
    assert abs(compute_phi(g, omega) - 1.5) <= 1e-8


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_phi_matches_dense_svd(seed):
    g, omega, _ = random_instance(seed)
    m = bound_matrices(g, omega)
    dense = np.linalg.svd(m.u, compute_uv=False)[0] if m.u.size else 0.0
    assert abs(compute_phi(g, omega) - dense) <= 1e-7 * max(1.0, dense)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_row_normalised_adjacency_spectrum_in_unit_interval(seed):
    g, omega, _ = random_instance(seed)
    blocks = partition_blocks(g, omega)
    scaled = blocks.a_cc.toarray() / blocks.d_cc[:, None]
    eigvals = np.linalg.eigvals(scaled)
    assert np.all(np.abs(eigvals) <= 1.0 + 1e-12)


def test_bound_zero_psi():
    assert graphprop_bound(0.0, 1.3) == 0.0


def test_bound_inapplicable_guard():
    assert graphprop_bound(1.0, 2.0) is None
    assert graphprop_bound(1.0, 2.0 - 1e-12) is None
    assert graphprop_bound(0.4, 1.0) == pytest.approx(0.4)


def test_single_missing_node_bound_is_tight():
    g = path3()
    omega = ObservationSet(3, [0, 2])
    f0 = np.array([[0.0], [0.9], [1.0]])
    res = solve_steady_state(g, omega, f0[omega.observed], method="cholesky")
    psi = compute_psi(g, omega, f0)
    phi = compute_phi(g, omega)
    bound = graphprop_bound(psi, phi)
    measured = float(np.linalg.norm(f0[1] - res.completed.values[1]))
    assert abs(measured - bound) <= 1e-12


def test_zero_energy_and_stationarity():
    g, omega, f0 = random_instance(17)
    res = solve_steady_state(g, omega, f0[omega.observed], method="cholesky")
    fhat = res.completed.values
    assert compute_psi(g, omega, fhat) <= 1e-8 * max(1.0, np.linalg.norm(fhat))
    m = bound_matrices(g, omega)
    grad = 2.0 * m.v.T @ (-m.y @ f0[omega.observed] + m.v @ fhat[omega.missing])
    assert np.max(np.abs(grad)) <= 1e-8


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_bound_validity_sampled(seed):
    g, omega, f0 = random_instance(seed)
    try:
        res = solve_steady_state(g, omega, f0[omega.observed], method="cholesky")
    except Exception:
        return
    psi = compute_psi(g, omega, f0)
    phi = compute_phi(g, omega)
    bound = graphprop_bound(psi, phi)
    if bound is None:
        return
    measured = float(np.linalg.norm(f0[omega.missing] - res.completed.values[omega.missing]))
    assert measured <= bound + 1e-9


def test_gtvm_bound_eigenvector_signal():
    g, omega, _ = random_instance(23)
    vals, vecs = np.linalg.eigh(g.adjacency.toarray())
    top = vecs[:, [np.argmax(np.abs(vals))]]
    out = gtvm_bound(g, omega, top)
    assert out.eta <= 1e-9
    assert out.bound is not None and out.bound <= 1e-8


def test_gtvm_bound_all_observed_degenerate():
    g, _, f0 = random_instance(29, require_missing=False)
    omega = ObservationSet(g.n, np.arange(g.n))
    out = gtvm_bound(g, omega, f0)
    assert out.q == 0.0
    measured = 0.0  # nothing missing
    assert measured <= out.bound


def test_gtvm_bound_path_numeric():
    g = path3()
    omega = ObservationSet(3, [0, 2])
    f0 = np.array([[0.0], [0.9], [1.0]])
    adjacency = g.adjacency.toarray()
    lam = np.max(np.abs(np.linalg.eigvalsh(adjacency)))
    assert abs(lam - np.sqrt(2.0)) <= 1e-12
    scaled = adjacency / lam
    eta_dense = np.linalg.norm(f0 - scaled @ f0)
    stack = np.vstack([scaled[np.ix_([0, 2], [1])], np.eye(1) + scaled[np.ix_([1], [1])]])
    q_dense = np.linalg.svd(stack, compute_uv=False)[0]
    out = gtvm_bound(g, omega, f0)
    assert abs(out.eta - eta_dense) <= 1e-10
    assert abs(out.q - q_dense) <= 1e-8
    est = gtvm_inpaint(g, omega, f0[omega.observed])
    measured = float(np.linalg.norm(f0[1] - est.values[1]))
    assert measured <= out.bound + 1e-9


def test_gtvm_bound_needs_edges():
    g = build_graph(EdgeSet.from_pairs(3, []))
    with pytest.raises(EmptyGraph):
        gtvm_bound(g, ObservationSet(3, [0]), np.zeros((3, 1)))


def test_spectral_norm_matches_dense():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((12, 7))
    dense = np.linalg.svd(m, compute_uv=False)[0]
    assert abs(spectral_norm(m) - dense) <= 1e-8 * dense


def test_bound_report_serialisation():
    g, omega, f0 = random_instance(31)
    res = solve_steady_state(g, omega, f0[omega.observed], method="cholesky")
    report = evaluate_bounds(g, omega, f0, res.completed.values)
    data = json.loads(report.to_json())
    assert set(data) == {
        "psi", "phi", "bound", "measured_error",
        "gtvm_eta", "gtvm_q", "gtvm_bound", "applicable",
    }
    assert BoundReport.from_dict(data) == report
    if report.applicable:
        assert report.measured_error <= report.bound + 1e-9


def test_evaluate_bounds_drops_zero_degree_nodes():
    # node 3 isolated: bounds computed on the remaining subgraph
    g = build_graph(EdgeSet.from_pairs(4, [(0, 1), (1, 2)]))
    omega = ObservationSet(4, [0, 2])
    f0 = np.array([[0.0], [0.9], [1.0], [5.0]])
    fhat = f0.copy()
    fhat[1, 0] = 0.5
    report = evaluate_bounds(g, omega, f0, fhat)
    assert abs(report.psi - 0.4) <= 1e-12
    assert abs(report.measured_error - 0.4) <= 1e-12
