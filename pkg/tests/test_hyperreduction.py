import numpy as np
import pytest

from esdg.hyperreduction import (
    CONDITION_LIMIT,
    HyperReducedQuadrature,
    boundary_caratheodory,
    build_from_quadrature,
    build_hyperreduction,
    build_target_space,
    build_test_basis,
    build_test_basis_fvm,
    caratheodory_prune,
    empirical_cubature,
    hybridized_sbp,
    hyperreduced_Q,
    ideal_quadrature,
    stabilize_quadrature,
)
from esdg.operators import (
    PERIODIC,
    WEAK,
    assemble_global,
    build_reference_element,
    mesh_1d,
    mesh_2d,
)
from esdg.physics import Burgers1D
from esdg.pod import build_snapshots, weighted_pod

RNG = np.random.default_rng(99)


def small_basis(ops, num_modes=4):
    """Reproducible reduced basis from smooth synthetic snapshots."""
    x = ops.x
    snaps = np.column_stack(
        [np.sin((k + 1) * np.pi * x[:, 0]) + 0.3 * np.cos(k * np.pi * x[:, -1])
         for k in range(2 * num_modes)])
    basis, _ = weighted_pod(snaps, ops.mass, num_modes)
    return basis


# --- target space ------------------------------------------------------------

def test_target_space_contains_products_and_constants():
    ops = assemble_global(mesh_1d(8, (-1, 1), PERIODIC),
                          build_reference_element(2))
    basis = small_basis(ops, 3)
    target = build_target_space(basis, ops.mass)
    q = target.matrix
    # Columns are ordered by importance: unit leading column, the rest no
    # larger, none numerically zero.
    norms = np.linalg.norm(q, axis=0)
    assert abs(norms[0] - 1.0) < 1e-12
    assert np.all(norms[1:] <= norms[:-1] + 1e-12)
    assert np.all(norms > 0.0)
    # Constants and every pairwise product lie in the span.
    for f in [np.ones(ops.num_nodes)] + \
             [basis[:, i] * basis[:, j] for i in range(3) for j in range(i, 3)]:
        coeff, *_ = np.linalg.lstsq(q, f, rcond=None)
        assert np.linalg.norm(q @ coeff - f) < 1e-9 * max(1.0, np.linalg.norm(f))
    # Moments are the full-rule integrals of the columns.
    assert np.allclose(target.moments, q.T @ ops.mass)


def test_target_space_moment_oracle():
    # For basis = [x] on [-1, 1] the products span {1, x^2}; the exact
    # integrals are 2 and 2/3, reproduced through the moment vector.
    ops = assemble_global(mesh_1d(6, (-1, 1), WEAK), build_reference_element(3))
    x = ops.x[:, :1]
    scale = np.sqrt(x[:, 0] @ (ops.mass * x[:, 0]))
    target = build_target_space(x / scale, ops.mass)
    q = target.matrix
    for f, exact in [(np.ones(ops.num_nodes), 2.0), (x[:, 0] ** 2, 2.0 / 3.0)]:
        coeff, *_ = np.linalg.lstsq(q, f, rcond=None)
        assert abs(coeff @ target.moments - exact) < 1e-12


# --- empirical cubature -------------------------------------------------------

def test_empirical_cubature_matches_moments():
    ops = assemble_global(mesh_1d(16, (-1, 1), PERIODIC),
                          build_reference_element(3))
    basis = small_basis(ops, 4)
    target = build_target_space(basis, ops.mass)
    quad = empirical_cubature(target, ops.mass, tol=1e-7)
    assert quad.num_nodes < ops.num_nodes
    assert np.all(quad.weights > 0.0)
    assert np.all(np.diff(quad.index) > 0)
    achieved = np.linalg.norm(target.matrix[quad.index].T @ quad.weights
                              - target.moments) / np.linalg.norm(target.moments)
    assert achieved <= 1e-7 and abs(achieved - quad.residual) < 1e-12
    # Constants integrate to the domain measure within tolerance.
    ones_coeff, *_ = np.linalg.lstsq(target.matrix, np.ones(ops.num_nodes),
                                     rcond=None)
    vol = (target.matrix[quad.index] @ ones_coeff) @ quad.weights
    assert abs(vol - 2.0) < 1e-5


def test_empirical_cubature_constant_target_single_node():
    m = 10
    matrix = np.full((m, 1), 1.0 / np.sqrt(m))
    w = np.full(m, 0.2)
    quad = empirical_cubature(
        type(build_target_space(np.ones((m, 1)), w))(matrix=matrix,
                                                     moments=matrix.T @ w),
        w, tol=1e-12)
    assert quad.num_nodes == 1
    assert abs(quad.weights[0] - 2.0) < 1e-12


def test_empirical_cubature_rejects_bad_tolerance():
    ops = assemble_global(mesh_1d(4, (-1, 1), PERIODIC),
                          build_reference_element(1))
    target = build_target_space(small_basis(ops, 2), ops.mass)
    with pytest.raises(ValueError):
        empirical_cubature(target, ops.mass, tol=0.0)


def test_ideal_quadrature_is_identity_rule():
    w = RNG.uniform(0.1, 1.0, 12)
    quad = ideal_quadrature(w)
    assert np.array_equal(quad.index, np.arange(12))
    assert np.allclose(quad.weights, w)
    assert quad.residual == 0.0


# --- test bases ---------------------------------------------------------------

def test_test_basis_rank_and_contents():
    ops = assemble_global(mesh_1d(8, (-1, 1), PERIODIC),
                          build_reference_element(3))
    basis = small_basis(ops, 5)
    vt = build_test_basis(basis, ops.mass, ops.Q[0])
    assert vt.shape[1] <= 2 * 5 + 1
    assert np.allclose(vt.T @ vt, np.eye(vt.shape[1]), atol=1e-12)
    # Constants, the basis, and its derivative images are all in the span.
    targets = [np.ones(ops.num_nodes)]
    targets += list(basis.T)
    targets += list(((ops.Q[0].T @ basis) / ops.mass[:, None]).T)
    for f in targets:
        proj = vt @ (vt.T @ f)
        assert np.linalg.norm(proj - f) < 1e-8 * max(1.0, np.linalg.norm(f))


def test_fvm_test_basis_lacks_derivatives():
    ops = assemble_global(mesh_1d(8, (-1, 1), PERIODIC),
                          build_reference_element(3))
    basis = small_basis(ops, 4)
    vt = build_test_basis_fvm(basis)
    assert vt.shape[1] <= 5
    deriv = (ops.Q[0].T @ basis[:, 0]) / ops.mass
    proj = vt @ (vt.T @ deriv)
    assert np.linalg.norm(proj - deriv) > 1e-3 * np.linalg.norm(deriv)


# --- stabilization -------------------------------------------------------------

def test_stabilization_reaches_condition_target():
    ops = assemble_global(mesh_1d(24, (-1, 1), PERIODIC),
                          build_reference_element(3))
    basis = small_basis(ops, 6)
    target = build_target_space(basis, ops.mass)
    # Deliberately tiny starting rule: badly conditioned test mass.
    quad = HyperReducedQuadrature(index=np.array([0, 1]),
                                  weights=np.array([1.0, 1.0]),
                                  residual=1.0)
    test_bases = tuple(build_test_basis(basis, ops.mass, q) for q in ops.Q)
    out = stabilize_quadrature(quad, test_bases, target, ops.mass)
    for vt in test_bases:
        sampled = vt[out.index]
        mt = sampled.T @ (out.weights[:, None] * sampled)
        assert np.linalg.cond(mt) <= CONDITION_LIMIT
    assert np.all(out.weights > 0.0)


def test_stabilization_keeps_good_rules_unchanged():
    ops = assemble_global(mesh_1d(8, (-1, 1), PERIODIC),
                          build_reference_element(2))
    basis = small_basis(ops, 3)
    target = build_target_space(basis, ops.mass)
    quad = ideal_quadrature(ops.mass)
    test_bases = tuple(build_test_basis(basis, ops.mass, q) for q in ops.Q)
    out = stabilize_quadrature(quad, test_bases, target, ops.mass)
    assert np.array_equal(out.index, quad.index)
    assert np.allclose(out.weights, quad.weights)


# --- Caratheodory pruning -------------------------------------------------------

@pytest.mark.parametrize("trial", range(50))
def test_caratheodory_preserves_moments_randomized(trial):
    rng = np.random.default_rng(1000 + trial)
    n_mom = rng.integers(2, 8)
    m = n_mom + rng.integers(1, 20)
    rows = rng.normal(size=(n_mom, m))
    w = rng.uniform(0.0, 2.0, m)
    w_new, idx = caratheodory_prune(rows, w)
    assert idx.size <= n_mom
    assert np.all(w_new >= 0.0)
    assert np.allclose(rows[:, idx] @ w_new, rows @ w, atol=1e-12)


def test_caratheodory_collapses_duplicate_nodes():
    rows = np.array([[1.0, 1.0, 1.0, 2.0]])
    w = np.array([0.5, 0.25, 0.25, 0.0])
    w_new, idx = caratheodory_prune(rows, w)
    assert idx.size == 1
    assert abs(rows[:, idx] @ w_new - 1.0) < 1e-14


def test_caratheodory_noop_when_already_small():
    rows = RNG.normal(size=(4, 3))
    w = RNG.uniform(0.1, 1.0, 3)
    w_new, idx = caratheodory_prune(rows, w)
    assert np.array_equal(idx, np.arange(3))
    assert np.allclose(w_new, w)


def test_caratheodory_rejects_negative_weights():
    with pytest.raises(ValueError):
        caratheodory_prune(np.ones((1, 3)), np.array([1.0, -0.1, 1.0]))
    with pytest.raises(ValueError):
        caratheodory_prune(np.ones((1, 3)), np.ones(4))


def test_boundary_pruning_preserves_normal_moments_2d():
    ops = assemble_global(mesh_2d((3, 3), ((-1, 1), (-1, 1)), (WEAK, WEAK)),
                          build_reference_element(2))
    basis = small_basis(ops, 3)
    test_bases = tuple(build_test_basis(basis, ops.mass, q) for q in ops.Q)
    pruned = boundary_caratheodory(test_bases, ops.Q, ops.boundary)
    assert pruned.size < ops.boundary.size
    assert np.all(pruned.weights >= 0.0)
    for i, vt in enumerate(test_bases):
        full = (ops.boundary.weights * ops.boundary.normals[:, i]) \
            @ vt[ops.boundary.index]
        small = (pruned.weights * pruned.normals[:, i]) @ vt[pruned.index]
        assert np.allclose(full, small, atol=1e-10)


def test_boundary_pruning_noop_in_1d():
    ops = assemble_global(mesh_1d(6, (-1, 1), WEAK), build_reference_element(2))
    basis = small_basis(ops, 3)
    test_bases = tuple(build_test_basis(basis, ops.mass, q) for q in ops.Q)
    pruned = boundary_caratheodory(test_bases, ops.Q, ops.boundary)
    assert pruned is ops.boundary


# --- reduced operators ----------------------------------------------------------

def test_hyperreduced_Q_exact_on_ideal_rule():
    # With the full quadrature, P_t V_t = identity on the test space, so
    # Qbar acts on sampled test functions exactly like Q does.
    ops = assemble_global(mesh_1d(8, (-1, 1), PERIODIC),
                          build_reference_element(2))
    basis = small_basis(ops, 3)
    vt = build_test_basis(basis, ops.mass, ops.Q[0])
    quad = ideal_quadrature(ops.mass)
    qbar, pt = hyperreduced_Q(ops.Q[0], vt, quad)
    f = vt @ RNG.normal(size=vt.shape[1])
    assert np.allclose(qbar @ f[quad.index],
                       (pt.T @ (vt.T @ (ops.Q[0] @ f))), atol=1e-10)
    # pt is a left inverse of the sampled test basis.
    assert np.allclose(pt @ vt[quad.index], np.eye(vt.shape[1]), atol=1e-11)


def test_hybridized_block_identity():
    c, cb = 5, 4
    q = RNG.normal(size=(c, c))
    e = RNG.normal(size=(cb, c))
    # Signed boundary weights (n_i * w) over a closed boundary sum to zero.
    b = np.array([0.7, -0.7, 0.4, -0.4])
    out = hybridized_sbp(q, e, b)
    sym = out + out.T
    expected = np.zeros_like(sym)
    expected[c:, c:] = np.diag(b)
    assert np.allclose(sym, expected, atol=1e-12)
    assert np.allclose(out @ np.ones(c + cb), 0.0, atol=1e-10)


@pytest.mark.parametrize("bc", [PERIODIC, WEAK])
def test_pipeline_invariants_1d(bc):
    ops = assemble_global(mesh_1d(16, (-1, 1), bc), build_reference_element(3))
    basis = small_basis(ops, 5)
    hr = build_hyperreduction(ops, basis, tol=1e-7)
    c = hr.num_volume_nodes
    assert c < ops.num_nodes
    for i in range(ops.dim):
        qbar = hr.Q_reduced[i]
        ones = np.ones(c)
        assert np.allclose(qbar @ ones, 0.0, atol=1e-10)
        if bc == PERIODIC:
            assert np.allclose(qbar + qbar.T, 0.0, atol=1e-11)
        else:
            # Generalized SBP identity against the full boundary rule.
            e_full = hr.test_bases[i][ops.boundary.index] @ hr.projections[i]
            b_full = ops.boundary.normals[:, i] * ops.boundary.weights
            assert np.allclose(qbar + qbar.T,
                               e_full.T @ (b_full[:, None] * e_full),
                               atol=1e-11)
        qh = hr.Q_hybrid[i]
        sym = qh + qh.T
        expected = np.zeros_like(sym)
        if hr.boundary.size:
            expected[c:, c:] = np.diag(hr.boundary.normals[:, i]
                                       * hr.boundary.weights)
        assert np.allclose(sym, expected, atol=1e-11)
        assert np.allclose(qh @ np.ones(qh.shape[0]), 0.0, atol=1e-10)


def test_pipeline_invariants_2d_wall():
    ops = assemble_global(mesh_2d((3, 3), ((-1, 1), (-1, 1)), (WEAK, WEAK)),
                          build_reference_element(2))
    basis = small_basis(ops, 4)
    hr = build_hyperreduction(ops, basis, tol=1e-6)
    c = hr.num_volume_nodes
    for i in range(2):
        qh = hr.Q_hybrid[i]
        sym = qh + qh.T
        expected = np.zeros_like(sym)
        expected[c:, c:] = np.diag(hr.boundary.normals[:, i]
                                   * hr.boundary.weights)
        assert np.allclose(sym, expected, atol=1e-11)
        assert np.allclose(qh @ np.ones(qh.shape[0]), 0.0, atol=1e-9)
    assert hr.basis_hybrid.shape == (c + hr.boundary.size, 4)


def test_ideal_pipeline_reproduces_full_operator_action():
    ops = assemble_global(mesh_1d(10, (-1, 1), WEAK), build_reference_element(2))
    basis = small_basis(ops, 4)
    hr = build_hyperreduction(ops, basis, ideal=True)
    assert hr.num_volume_nodes == ops.num_nodes
    assert hr.boundary.size == ops.boundary.size
    vt = hr.test_bases[0]
    f = vt @ RNG.normal(size=vt.shape[1])
    # Qbar f = P^T V_t^T Q f for any f in the test span.
    expected = hr.projections[0].T @ (vt.T @ (ops.Q[0] @ f))
    assert np.allclose(hr.Q_reduced[0] @ f, expected, atol=1e-9)
