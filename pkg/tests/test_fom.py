import numpy as np
import pytest

from esdg.fom import (
    FomProblem,
    convective_rhs,
    entropy_residual,
    fom_rhs,
    run_fom,
    total_entropy,
    viscous_matrix,
)
from esdg.operators import (
    PERIODIC,
    WEAK,
    assemble_global,
    build_reference_element,
    mesh_1d,
    mesh_2d,
)
from esdg.physics import Advection1D, Burgers1D, Euler, mirror_state

RNG = np.random.default_rng(7)


def make_problem(law, p=1, k=3, bc=PERIODIC, epsilon=0.0, boundary=None):
    if law.dim == 1:
        mesh = mesh_1d(k, (-1, 1), bc)
    else:
        mesh = mesh_2d((k, k), ((-1, 1), (-1, 1)), (bc, bc))
    ops = assemble_global(mesh, build_reference_element(p))
    return FomProblem(law, ops, epsilon=epsilon, boundary_state=boundary)


def nodal_state(law, ops):
    x = ops.x
    if law.n == 1:
        return np.sin(np.pi * x[:, 0])[None, :] + 1.5
    rho = 1.0 + 0.2 * np.sin(np.pi * x[:, 0])
    vel = 0.3 * np.cos(np.pi * x.T)
    p = 1.0 + 0.1 * np.sin(2 * np.pi * x[:, 0])
    return law.from_primitives(rho, vel[:law.dim], p)


# --- oracle: brute-force dense flux differencing ----------------------------

def brute_force_convective(problem, u):
    """Dense reference evaluation: conv = ((Q - Q^T) o F) 1 + B f*,
    formed with explicit loops over every node pair."""
    law, ops = problem.law, problem.ops
    m = ops.num_nodes
    out = np.zeros_like(u)
    for i in range(ops.dim):
        skew = (ops.Q[i] - ops.Q[i].T).toarray()
        for j in range(m):
            for k in range(m):
                if skew[j, k] != 0.0:
                    f = law.flux_ec(u[:, [j]], u[:, [k]], i)[:, 0]
                    out[:, j] += skew[j, k] * f
    bnd = ops.boundary
    if bnd.size:
        u_in = u[:, bnd.index]
        u_out = problem.boundary_state(u_in, ops.x[bnd.index], bnd.normals, 0.0)
        for b, idx in enumerate(bnd.index):
            for i in range(ops.dim):
                if bnd.normals[b, i] == 0.0:
                    continue
                f = law.flux_ec(u_in[:, [b]], u_out[:, [b]], i)[:, 0]
                out[:, idx] += bnd.normals[b, i] * bnd.weights[b] * f
    return out


@pytest.mark.parametrize("law,bc", [
    (Burgers1D(), PERIODIC),
    (Burgers1D(), WEAK),
    (Euler(dim=1), PERIODIC),
    (Euler(dim=2), PERIODIC),
])
def test_convective_rhs_matches_brute_force(law, bc):
    boundary = None
    if bc == WEAK:
        boundary = lambda u_in, x, n, t: np.ones_like(u_in)
    problem = make_problem(law, p=1, k=3, bc=bc, boundary=boundary)
    u = nodal_state(law, problem.ops)
    fast = convective_rhs(problem, u)
    slow = brute_force_convective(problem, u)
    assert np.max(np.abs(fast - slow)) < 1e-13


def test_strong_form_equivalence():
    """((Q - Q^T) o F) 1 equals the strong form 2 (Q o F) 1 - f(u)
    contraction for a periodic mesh (dense check)."""
    law = Burgers1D()
    problem = make_problem(law, p=2, k=4)
    ops = problem.ops
    u = nodal_state(law, ops)
    q = ops.Q[0].toarray()
    m = ops.num_nodes
    f_mat = np.empty((m, m))
    for j in range(m):
        f_mat[j] = law.flux_ec(np.repeat(u[:, [j]], m, axis=1), u, 0)[0]
    strong = 2.0 * (q * f_mat) @ np.ones(m)  # B = 0 here
    assert np.allclose(convective_rhs(problem, u)[0], strong, atol=1e-12)


# --- structural properties ---------------------------------------------------

def test_viscous_matrix_is_spsd_and_annihilates_constants():
    ops = assemble_global(mesh_1d(4, (-1, 1), WEAK), build_reference_element(3))
    lap = viscous_matrix(ops).toarray()
    assert np.allclose(lap, lap.T, atol=1e-14)
    eigs = np.linalg.eigvalsh(lap)
    assert eigs.min() > -1e-12
    assert np.allclose(lap @ np.ones(ops.num_nodes), 0.0, atol=1e-12)


def test_viscous_matrix_energy_oracle():
    # x^T L x = integral of |grad x|^2 = measure of the domain, because
    # Q applied to a linear function is exact.
    ops = assemble_global(mesh_1d(5, (0, 2), WEAK), build_reference_element(3))
    x = ops.x[:, 0]
    assert abs(x @ (viscous_matrix(ops) @ x) - 2.0) < 1e-11


def test_free_stream_is_steady():
    for bc in (PERIODIC, WEAK):
        boundary = None
        if bc == WEAK:
            boundary = lambda u_in, x, n, t: u_in.copy()
        law = Euler(dim=1)
        problem = make_problem(law, p=3, k=3, bc=bc, boundary=boundary)
        u = law.from_primitives(np.full(problem.ops.num_nodes, 1.3),
                                np.full((1, problem.ops.num_nodes), 0.4),
                                np.full(problem.ops.num_nodes, 0.9))
        rhs = fom_rhs(problem, 0.0, u.ravel())
        assert np.max(np.abs(rhs)) < 1e-12


def test_periodic_conservation():
    law = Burgers1D()
    problem = make_problem(law, p=3, k=4)
    u = nodal_state(law, problem.ops)
    conv = convective_rhs(problem, u)
    # 1^T conv = 0: total mass is conserved.
    assert abs(conv.sum()) < 1e-13


@pytest.mark.parametrize("law,bc", [
    (Advection1D(), PERIODIC),
    (Burgers1D(), PERIODIC),
    (Euler(dim=1), PERIODIC),
    (Euler(dim=2), PERIODIC),
    (Euler(dim=1), WEAK),
])
def test_entropy_residual_vanishes(law, bc):
    boundary = None
    if bc == WEAK:
        boundary = lambda u_in, x, n, t: mirror_state(u_in, n, law)
    problem = make_problem(law, p=2, k=3, bc=bc, boundary=boundary)
    u = nodal_state(law, problem.ops)
    assert entropy_residual(problem, u) < 1e-12


def test_entropy_conservation_over_time():
    law = Burgers1D()
    problem = make_problem(law, p=3, k=8)
    u0 = nodal_state(law, problem.ops)
    result = run_fom(problem, u0, 0.3, rtol=1e-10, atol=1e-12)
    entropies = [total_entropy(problem, f.reshape(1, -1))
                 for f in result.states]
    assert max(abs(e - entropies[0]) for e in entropies) < 1e-9


def test_viscosity_dissipates_entropy():
    law = Burgers1D()
    problem = make_problem(law, p=3, k=8, epsilon=1e-2)
    u0 = nodal_state(law, problem.ops)
    result = run_fom(problem, u0, 0.5)
    entropies = [total_entropy(problem, f.reshape(1, -1))
                 for f in result.states]
    assert all(b <= a + 1e-10 for a, b in zip(entropies, entropies[1:]))


def test_problem_validation():
    law = Euler(dim=1)
    ops = assemble_global(mesh_1d(3, (-1, 1), WEAK), build_reference_element(1))
    with pytest.raises(ValueError):
        FomProblem(law, ops)  # weak boundary without a rule
    ops2d = assemble_global(mesh_2d((2, 2)), build_reference_element(1))
    with pytest.raises(ValueError):
        FomProblem(law, ops2d)  # dimension mismatch
