"""Hyper-reduction: empirical cubature, test bases, hybridized operators.

Builds a small positive quadrature that reproduces integrals of
products of reduced basis functions, projects the global
differentiation matrices through dimension-wise test bases so that
skew-symmetry and zero row sums survive, and compresses the boundary
quadrature by Caratheodory pruning so weak boundary conditions remain
entropy-conservative on the reduced node set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear, nnls

from .operators import BoundaryNodes, GlobalOperators

__all__ = [
    "TargetSpace",
    "HyperReducedQuadrature",
    "HyperReducedOperators",
    "build_target_space",
    "empirical_cubature",
    "ideal_quadrature",
    "build_test_basis",
    "build_test_basis_fvm",
    "stabilize_quadrature",
    "hyperreduced_Q",
    "hybridized_sbp",
    "caratheodory_prune",
    "boundary_caratheodory",
    "build_hyperreduction",
]

#: Relative singular-value cutoff for de-duplicating spanning sets.
DEDUP_TOLERANCE = 1e-13
STALL_LIMIT = 50
TABU_LENGTH = 20

#: Default relative moment-residual tolerance for empirical cubature.
CUBATURE_TOLERANCE = 1e-7

#: Test mass matrices above this condition number trigger stabilization.
CONDITION_LIMIT = 1e8


@dataclass
class TargetSpace:
    """Orthonormal span of the functions a reduced quadrature must integrate."""

    matrix: np.ndarray        # (num_nodes, num_moments), orthonormal columns
    moments: np.ndarray       # (num_moments,) integrals under the full rule

    @property
    def num_moments(self) -> int:
        return self.matrix.shape[1]


@dataclass
class HyperReducedQuadrature:
    """Sparse positive quadrature rule on a subset of global nodes."""

    index: np.ndarray         # sorted node indices
    weights: np.ndarray       # strictly positive weights, same length
    residual: float           # achieved relative moment residual

    @property
    def num_nodes(self) -> int:
        return self.index.size


@dataclass
class HyperReducedOperators:
    """Everything the hyper-reduced right-hand side needs, per dimension."""

    quad: HyperReducedQuadrature
    test_bases: tuple                 # V_t^i, (num_nodes, r_i)
    projections: tuple                # P_t^i, (r_i, c)
    Q_reduced: tuple                  # Qbar^i, (c, c)
    extrapolations: tuple             # Ebar^i, (c_b, c); empty when periodic
    Q_hybrid: tuple                   # Qbar_h^i, (c+c_b, c+c_b)
    boundary: BoundaryNodes           # pruned boundary rule (may be empty)
    basis_volume: np.ndarray          # V_N rows at quadrature nodes, (c, N)
    basis_boundary: np.ndarray        # V_N rows at pruned boundary nodes

    @property
    def num_volume_nodes(self) -> int:
        return self.quad.num_nodes

    @property
    def basis_hybrid(self) -> np.ndarray:
        if self.basis_boundary.size:
            return np.vstack([self.basis_volume, self.basis_boundary])
        return self.basis_volume


def _orthonormal_span(columns: np.ndarray, rel_tol=DEDUP_TOLERANCE) -> np.ndarray:
    """Orthonormal basis of the column span, truncating noise directions.

    Columns are normalized first so blocks with very different scales
    (e.g. states next to their derivatives) do not push each other's
    directions below the truncation threshold.
    """
    norms = np.linalg.norm(columns, axis=0)
    keep = norms > 0.0
    u, s, _ = np.linalg.svd(columns[:, keep] / norms[keep],
                            full_matrices=False)
    rank = int(np.sum(s > rel_tol * s[0]))
    return u[:, :rank]


def build_target_space(basis: np.ndarray, weights: np.ndarray) -> TargetSpace:
    """Span of all pairwise products of basis columns, plus constants.

    The reduced quadrature must integrate inner products of reduced
    states exactly, hence the Hadamard products; the constant guarantees
    the total volume is preserved.  Columns are the left singular
    vectors of the product set scaled by their singular values, so the
    moment-residual norm measures the defect on the original product
    functions rather than weighting negligible directions equally.
    """
    m, n = basis.shape
    cols = [np.ones((m, 1))]
    for i in range(n):
        cols.append(basis[:, i:] * basis[:, i:i + 1])
    u, s, _ = np.linalg.svd(np.hstack(cols), full_matrices=False)
    rank = int(np.sum(s > DEDUP_TOLERANCE * s[0]))
    matrix = u[:, :rank] * (s[:rank] / s[0])
    return TargetSpace(matrix=matrix, moments=matrix.T @ weights)


def _solve_weights(rows: np.ndarray, moments: np.ndarray):
    """Nonnegative least squares, trying plain least squares first.

    When the unconstrained solution is already nonnegative it equals the
    NNLS solution, and is much cheaper.
    """
    sol, *_ = np.linalg.lstsq(rows.T, moments, rcond=None)
    if np.all(sol >= 0.0):
        return sol
    try:
        sol, _ = nnls(rows.T, moments, maxiter=30 * rows.shape[0])
    except RuntimeError:
        # Active-set NNLS can cycle on near-degenerate rows; the bounded
        # least-squares solver is slower but does not.
        res = lsq_linear(rows.T, moments, bounds=(0.0, np.inf),
                         method="bvls")
        sol = res.x
    return sol


def empirical_cubature(target: TargetSpace, weights: np.ndarray,
                       tol: float = CUBATURE_TOLERANCE) -> HyperReducedQuadrature:
    """Greedy sparse positive quadrature matching the target moments.

    Repeatedly adds the node whose moment row best aligns with the
    current residual, re-solves nonnegative least squares on the
    selected set, and drops zero-weight nodes, until the relative
    moment residual falls below ``tol``.  Once the residual stops
    improving, freshly dropped nodes are barred from re-selection for
    ``TABU_LENGTH`` iterations, which breaks the add/drop cycles the
    plain greedy falls into near its attainable floor.  If the residual
    still fails to improve for ``STALL_LIMIT`` iterations the best rule
    seen is returned instead of looping forever.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    a = target.matrix
    b = target.moments
    norm_b = np.linalg.norm(b)
    row_norms = np.linalg.norm(a, axis=1)
    m = a.shape[0]
    selected = np.zeros(m, dtype=bool)
    tabu = np.zeros(m, dtype=int)
    w_sel = np.zeros(0)
    idx = np.zeros(0, dtype=int)
    residual = b.copy()
    rel = np.linalg.norm(residual) / norm_b
    best = (idx, w_sel, rel)
    since_improvement = 0
    while rel > tol:
        if selected.all():
            raise RuntimeError(
                f"empirical cubature failed to reach tolerance {tol:.3g} "
                f"with all {m} nodes selected (residual {rel:.3g})")
        scores = a @ residual
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(row_norms > 0.0, scores / row_norms, -np.inf)
        scores[selected] = -np.inf
        if since_improvement > 0:
            # Only steer away from recently dropped nodes once progress
            # has stopped: while the plain greedy is descending, the ban
            # would perturb a path that already works.
            banned = scores.copy()
            banned[tabu > 0] = -np.inf
            if np.isfinite(banned.max()):
                scores = banned
        pick = int(np.argmax(scores))
        selected[pick] = True
        idx = np.flatnonzero(selected)
        w_sel = _solve_weights(a[idx], b)
        keep = w_sel > 0.0
        if not keep.all():
            tabu[idx[~keep]] = TABU_LENGTH
            selected[:] = False
            selected[idx[keep]] = True
            idx, w_sel = idx[keep], w_sel[keep]
        tabu[tabu > 0] -= 1
        residual = b - a[idx].T @ w_sel
        rel = np.linalg.norm(residual) / norm_b
        if rel < best[2] * (1.0 - 1e-9):
            best = (idx, w_sel, rel)
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= STALL_LIMIT:
                idx, w_sel, rel = best
                break
    return HyperReducedQuadrature(index=idx, weights=w_sel, residual=float(rel))


def ideal_quadrature(weights: np.ndarray) -> HyperReducedQuadrature:
    """The trivial 'hyper-reduction' that keeps every node and weight."""
    return HyperReducedQuadrature(index=np.arange(weights.size),
                                  weights=weights.copy(), residual=0.0)


def build_test_basis(basis: np.ndarray, mass: np.ndarray,
                     q_full: sp.spmatrix) -> np.ndarray:
    """Span of [1, V_N, M^{-1} Q^T V_N], orthonormalized; rank <= 2N+1.

    The derivative images make the projected differentiation matrix
    agree with the full one against every reduced test function, which
    is what keeps the reduced flux differencing accurate.
    """
    m = basis.shape[0]
    deriv = (q_full.T @ basis) / mass[:, None]
    return _orthonormal_span(np.hstack([np.ones((m, 1)), basis, deriv]))


def build_test_basis_fvm(basis: np.ndarray) -> np.ndarray:
    """Plain test basis [1, V_N] without derivative enrichment.

    Sufficient on piecewise-constant discretizations; on higher-order
    meshes the projected operator loses accuracy against the basis.
    """
    return _orthonormal_span(
        np.hstack([np.ones((basis.shape[0], 1)), basis]))


def _lambda_min_rank_one(eigvals: np.ndarray, z_sq: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of diag(eigvals) + z z^T for many z at once.

    ``z_sq`` holds the squared components of each update vector in the
    eigenbasis (one row per candidate).  The root of the secular
    function 1 + sum_k z_k^2 / (eigvals_k - x) is bracketed between the
    two smallest eigenvalues and located by bisection.
    """
    lo = np.full(z_sq.shape[0], eigvals[0])
    hi = np.full(z_sq.shape[0], eigvals[1] if eigvals.size > 1
                 else eigvals[0] + z_sq.sum(axis=1).max() + 1.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 + np.sum(z_sq / (eigvals[None, :] - mid[:, None]), axis=1)
        below = f < 0.0       # root lies to the right
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def stabilize_quadrature(quad: HyperReducedQuadrature, test_bases,
                         target: TargetSpace,
                         weights: np.ndarray) -> HyperReducedQuadrature:
    """Add nodes until every sampled test mass matrix is well conditioned.

    Each added node maximizes the smallest singular value of the
    augmented sampled test basis (computed through a rank-one secular
    update).  Weights are re-solved by nonnegative least squares; nodes
    that would get zero weight keep their full-order quadrature weight
    instead, so the conditioning gain is not lost.
    """
    m = weights.size
    index = quad.index.copy()
    w = quad.weights.copy()

    def worst_condition():
        worst, basis = 0.0, None
        for vt in test_bases:
            sampled = vt[index]
            mt = sampled.T @ (w[:, None] * sampled)
            cond = np.linalg.cond(mt)
            if cond > worst:
                worst, basis = cond, vt
        return worst, basis

    while True:
        cond, vt = worst_condition()
        if cond <= CONDITION_LIMIT:
            break
        if index.size == m:
            break
        gram = vt[index].T @ vt[index]
        eigvals, eigvecs = np.linalg.eigh(gram)
        candidates = np.setdiff1d(np.arange(m), index, assume_unique=True)
        z = vt[candidates] @ eigvecs
        lam = _lambda_min_rank_one(eigvals, z ** 2)
        pick = candidates[int(np.argmax(lam))]
        index = np.sort(np.append(index, pick))
        w_new = _solve_weights(target.matrix[index], target.moments)
        zero = w_new <= 0.0
        w_new[zero] = weights[index][zero]
        w = w_new
    residual = float(np.linalg.norm(target.matrix[index].T @ w - target.moments)
                     / np.linalg.norm(target.moments))
    return HyperReducedQuadrature(index=index, weights=w, residual=residual)


def _zero_row_sums(matrix: np.ndarray) -> np.ndarray:
    """Cancel row-sum round-off without touching the symmetric part.

    Adds the skew-symmetric rank-two correction (1 r^T - r 1^T)/n with
    r the row-sum defect; M + M^T is unchanged exactly, so the SBP
    identities survive while constants become exact null vectors (up to
    a second-order residual, hence the two sweeps).
    """
    out = matrix.copy()
    n = out.shape[0]
    for _ in range(2):
        r = out @ np.ones(n)
        out += (np.ones((n, 1)) * (r / n)[None, :]) - (r / n)[:, None]
    return out


def hyperreduced_Q(q_full: sp.spmatrix, test_basis: np.ndarray,
                   quad: HyperReducedQuadrature):
    """Project Q through the test basis onto the reduced node set.

    Returns (Qbar, P_t) with Qbar = P_t^T (V_t^T Q V_t) P_t and
    P_t = M_t^{-1} V_t(I,:)^T W.
    """
    q_hat = test_basis.T @ (q_full @ test_basis)
    sampled = test_basis[quad.index]
    # P_t = (V^T W V)^{-1} V^T W computed through a QR factorization of
    # sqrt(W) V, which squares neither the condition number nor the
    # rounding error of the normal-equations route.
    sqrt_w = np.sqrt(quad.weights)
    q_factor, r_factor = np.linalg.qr(sqrt_w[:, None] * sampled)
    p_t = np.linalg.solve(r_factor, q_factor.T * sqrt_w)
    return p_t.T @ q_hat @ p_t, p_t


def hybridized_sbp(q_reduced: np.ndarray, extrapolation: np.ndarray,
                   b_boundary: np.ndarray) -> np.ndarray:
    """Block operator coupling volume and boundary nodes.

    Qbar_h = 1/2 [[Qbar - Qbar^T, E^T B_b], [-B_b E, B_b]] satisfies the
    block identity Qbar_h + Qbar_h^T = blockdiag(0, B_b) by construction.
    """
    c = q_reduced.shape[0]
    cb = b_boundary.size
    out = np.zeros((c + cb, c + cb))
    out[:c, :c] = 0.5 * (q_reduced - q_reduced.T)
    coupling = 0.5 * (extrapolation.T * b_boundary)
    out[:c, c:] = coupling
    out[c:, :c] = -coupling.T
    out[c:, c:] = 0.5 * np.diag(b_boundary)
    return _zero_row_sums(out)


def caratheodory_prune(moment_rows: np.ndarray, w: np.ndarray):
    """Reduce a nonnegative rule to at most one node per moment.

    ``moment_rows`` is (num_moments, num_nodes): column j holds node
    j's moment contributions.  Returns (weights, indices) with the
    moment vector ``moment_rows @ w`` preserved and at most
    ``num_moments`` surviving nodes, all weights nonnegative.
    """
    moment_rows = np.asarray(moment_rows, dtype=float)
    w = np.asarray(w, dtype=float).copy()
    n_mom, m = moment_rows.shape
    if w.size != m:
        raise ValueError("weight length must match node count")
    if np.any(w < 0.0):
        raise ValueError("Caratheodory pruning requires nonnegative weights")
    active = list(range(m))
    while len(active) > n_mom:
        head = active[:n_mom + 1]
        block = moment_rows[:, head]                 # (n_mom, n_mom+1)
        q_factor, _ = np.linalg.qr(block.T, mode="complete")
        c = q_factor[:, -1]
        if not np.any(c > 1e-12):
            c = -c
        pos = c > 1e-12
        if not np.any(pos):
            raise RuntimeError(
                "Caratheodory pruning stalled: null vector has no "
                "positive component")
        ratios = w[head][pos] / c[pos]
        local = np.flatnonzero(pos)[int(np.argmin(ratios))]
        alpha = w[head[local]] / c[local]
        for k, node in enumerate(head):
            w[node] -= alpha * c[k]
        w[head[local]] = 0.0
        w[np.asarray(head)] = np.maximum(w[np.asarray(head)], 0.0)
        active.pop(local)
    idx = np.asarray(active, dtype=int)
    return w[idx], idx


def boundary_caratheodory(test_bases, q_fulls, boundary: BoundaryNodes):
    """Prune the boundary quadrature while keeping weak-BC entropy exact.

    The preserved moments are, for every dimension i, the weighted
    normal components of the boundary-sampled test basis,
    sum_b w_b n_b^i V_t^i(b,:), which match 1^T Q^i V_t^i at full order
    and are exactly what the zero-row-sum property of the hybridized
    operator requires.
    """
    if np.any(boundary.weights < 0.0):
        raise ValueError("boundary weights must be nonnegative")
    cols = []
    for i, vt in enumerate(test_bases):
        cols.append(boundary.normals[:, i:i + 1] * vt[boundary.index])
    stacked = np.hstack(cols)                        # (nb, sum r_i)
    if boundary.size <= stacked.shape[1]:
        return boundary
    w_pruned, local = caratheodory_prune(stacked.T, boundary.weights)
    order = np.argsort(local)
    local, w_pruned = local[order], w_pruned[order]
    return BoundaryNodes(index=boundary.index[local],
                         normals=boundary.normals[local],
                         weights=w_pruned)


def build_hyperreduction(ops: GlobalOperators, basis: np.ndarray, *,
                         tol: float = CUBATURE_TOLERANCE,
                         ideal: bool = False,
                         fvm_test_basis: bool = False) -> HyperReducedOperators:
    """Full offline pipeline from a reduced basis to reduced operators."""
    target = build_target_space(basis, ops.mass)
    if ideal:
        quad = ideal_quadrature(ops.mass)
    else:
        quad = empirical_cubature(target, ops.mass, tol=tol)
        test_bases = tuple(build_test_basis(basis, ops.mass, q)
                           for q in ops.Q)
        quad = stabilize_quadrature(quad, test_bases, target, ops.mass)
    return build_from_quadrature(ops, basis, quad,
                                 fvm_test_basis=fvm_test_basis,
                                 ideal=ideal)


def build_from_quadrature(ops: GlobalOperators, basis: np.ndarray,
                          quad: HyperReducedQuadrature, *,
                          fvm_test_basis: bool = False,
                          ideal: bool = False) -> HyperReducedOperators:
    """Deterministic operator assembly once the quadrature is fixed."""
    if fvm_test_basis:
        test_bases = tuple(build_test_basis_fvm(basis)
                           for _ in range(ops.dim))
    else:
        test_bases = tuple(build_test_basis(basis, ops.mass, q)
                           for q in ops.Q)

    q_reduced, projections = [], []
    for i, (q, vt) in enumerate(zip(ops.Q, test_bases)):
        qbar, pt = hyperreduced_Q(q, vt, quad)
        # The symmetric part of Qbar equals E^T B E (full boundary) in
        # exact arithmetic but is polluted by the conditioning of P_t;
        # rebuild it from the boundary directly so the generalized SBP
        # identity holds to round-off, then restore zero row sums.
        skew_part = 0.5 * (qbar - qbar.T)
        if ops.boundary.size:
            e_full = vt[ops.boundary.index] @ pt
            b_full = ops.boundary.normals[:, i] * ops.boundary.weights
            qbar = skew_part + 0.5 * (e_full.T @ (b_full[:, None] * e_full))
        else:
            qbar = skew_part
        q_reduced.append(_zero_row_sums(qbar))
        projections.append(pt)

    if ops.boundary.size:
        pruned = boundary_caratheodory(test_bases, ops.Q, ops.boundary) \
            if not ideal else ops.boundary
        extrapolations, q_hybrid = [], []
        for i in range(ops.dim):
            vbt = test_bases[i][pruned.index]
            ebar = vbt @ projections[i]
            b_diag = pruned.normals[:, i] * pruned.weights
            extrapolations.append(ebar)
            q_hybrid.append(hybridized_sbp(q_reduced[i], ebar, b_diag))
        basis_boundary = basis[pruned.index]
    else:
        pruned = ops.boundary
        extrapolations = [np.zeros((0, quad.num_nodes))] * ops.dim
        q_hybrid = [hybridized_sbp(q, e, np.zeros(0))
                    for q, e in zip(q_reduced, extrapolations)]
        basis_boundary = np.zeros((0, basis.shape[1]))

    return HyperReducedOperators(
        quad=quad,
        test_bases=test_bases,
        projections=tuple(projections),
        Q_reduced=tuple(q_reduced),
        extrapolations=tuple(extrapolations),
        Q_hybrid=tuple(q_hybrid),
        boundary=pruned,
        basis_volume=basis[quad.index],
        basis_boundary=basis_boundary,
    )
