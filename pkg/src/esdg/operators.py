"""Reference-element and global SBP operators on 1D intervals and 2D
tensor-product quadrilateral meshes.

The element-local operators are collocated Gauss-Lobatto operators: a
diagonal mass matrix ``M = diag(w)`` and a nodal differentiation matrix
``Q = M @ D`` satisfying the SBP identity ``Q + Q.T = B`` with
``B = diag(-1, 0, ..., 0, 1)``.  Global operators are assembled with
central interface coupling so that, for periodic domains, ``Q_glob`` is
skew-symmetric with zero row sums and, for weakly-imposed boundaries,
``Q_glob + Q_glob.T = B_glob``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ReferenceElement",
    "Mesh",
    "BoundaryNodes",
    "GlobalOperators",
    "lobatto_rule",
    "build_reference_element",
    "assemble_global_1d",
    "assemble_global_2d",
    "assemble_global",
]

PERIODIC = "periodic"
WEAK = "weak"


def lobatto_rule(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes and weights on [-1, 1] for degree ``p``.

    For ``p >= 1`` the rule has ``p + 1`` nodes including both endpoints
    and integrates polynomials of degree ``2p - 1`` exactly.  ``p = 0``
    degenerates to the single midpoint node with weight 2 (the finite
    volume limit).
    """
    if p < 0:
        raise ValueError(f"degree must be nonnegative, got {p}")
    if p == 0:
        return np.array([0.0]), np.array([2.0])
    if p == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])

    n = p + 1
    # Newton iteration for the roots of (1 - x^2) P'_p(x), seeded with
    # Chebyshev-Lobatto points.
    x = np.cos(np.pi * np.arange(n) / p)
    x_prev = np.full(n, 2.0)
    legendre = np.zeros((n, n))
    while np.max(np.abs(x - x_prev)) > 1e-15:
        x_prev = x.copy()
        legendre[:, 0] = 1.0
        legendre[:, 1] = x
        for k in range(2, n):
            legendre[:, k] = (
                (2 * k - 1) * x * legendre[:, k - 1] - (k - 1) * legendre[:, k - 2]
            ) / k
        x = x_prev - (x * legendre[:, p] - legendre[:, p - 1]) / (n * legendre[:, p])
    x = np.sort(x)
    legendre[:, 0] = 1.0
    legendre[:, 1] = x
    for k in range(2, n):
        legendre[:, k] = (
            (2 * k - 1) * x * legendre[:, k - 1] - (k - 1) * legendre[:, k - 2]
        ) / k
    w = 2.0 / (p * n * legendre[:, p] ** 2)
    # Enforce exact symmetry of the rule.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def _differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Lagrange differentiation matrix at the given interpolation nodes."""
    n = len(nodes)
    if n == 1:
        return np.zeros((1, 1))
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    # Barycentric weights.
    bary = 1.0 / np.prod(diff, axis=1)
    d = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -np.sum(d, axis=1))
    return d


@dataclass(frozen=True)
class ReferenceElement:
    """Collocated Gauss-Lobatto SBP operators on [-1, 1]."""

    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    B: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.degree + 1


def build_reference_element(p: int) -> ReferenceElement:
    """Build the degree-``p`` reference element with ``Q = M @ D``."""
    nodes, weights = lobatto_rule(p)
    d = _differentiation_matrix(nodes)
    q = weights[:, None] * d
    b = np.zeros((p + 1, p + 1))
    if p >= 1:
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
    return ReferenceElement(degree=p, nodes=nodes, weights=weights,
                            M=np.diag(weights), Q=q, B=b)


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor-product mesh of 1 or 2 dimensions.

    ``bc`` holds one boundary-condition kind per coordinate direction;
    opposite faces of a direction always share the same kind.
    """

    dim: int
    num_elements: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    bc: tuple[str, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if not (len(self.num_elements) == len(self.bounds) == len(self.bc) == self.dim):
            raise ValueError("num_elements, bounds and bc must have length dim")
        for kind in self.bc:
            if kind not in (PERIODIC, WEAK):
                raise ValueError(f"unknown boundary kind {kind!r}")
        for k in self.num_elements:
            if k < 1:
                raise ValueError("every direction needs at least one element")
        for lo, hi in self.bounds:
            if not hi > lo:
                raise ValueError("element Jacobians must be positive")

    def jacobian(self, i: int) -> float:
        lo, hi = self.bounds[i]
        return (hi - lo) / self.num_elements[i] / 2.0


def mesh_1d(num_elements: int, bounds=(-1.0, 1.0), bc=PERIODIC) -> Mesh:
    return Mesh(dim=1, num_elements=(num_elements,), bounds=(tuple(bounds),), bc=(bc,))


def mesh_2d(num_elements, bounds=((-1.0, 1.0), (-1.0, 1.0)), bc=(PERIODIC, PERIODIC)) -> Mesh:
    kx, ky = num_elements
    (bx, by) = bounds
    return Mesh(dim=2, num_elements=(kx, ky), bounds=(tuple(bx), tuple(by)),
                bc=tuple(bc))


@dataclass(frozen=True)
class BoundaryNodes:
    """Weak-boundary trace quadrature.

    One entry per (face, node) pair; nodes shared by two faces (2D
    corners) appear once per face with the face's own normal.  ``index``
    maps each entry to its global volume node.
    """

    index: np.ndarray          # (nb,) int
    normals: np.ndarray        # (nb, d)
    weights: np.ndarray        # (nb,)

    @property
    def size(self) -> int:
        return len(self.index)


def _empty_boundary(dim: int) -> BoundaryNodes:
    return BoundaryNodes(index=np.zeros(0, dtype=int),
                         normals=np.zeros((0, dim)),
                         weights=np.zeros(0))


@dataclass(frozen=True)
class GlobalOperators:
    """Assembled global SBP operators.

    ``mass`` is the diagonal of ``M_glob`` (Jacobian-scaled quadrature
    weights), ``Q[i]``/``skew[i]`` the per-direction differentiation
    matrix and its skew part ``Q - Q.T``, and ``B[i]`` the diagonal of
    the boundary matrix (zero for periodic directions).
    """

    mesh: Mesh
    ref: ReferenceElement
    mass: np.ndarray
    x: np.ndarray                       # (n_nodes, dim) node coordinates
    Q: tuple[sp.csr_matrix, ...]
    B: tuple[np.ndarray, ...]
    boundary: BoundaryNodes
    skew: tuple[sp.csr_matrix, ...] = field(init=False)

    def __post_init__(self):
        skew = tuple((q - q.T).tocsr() for q in self.Q)
        object.__setattr__(self, "skew", skew)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def num_nodes(self) -> int:
        return len(self.mass)

    @property
    def weights(self) -> np.ndarray:
        """Global quadrature weights (identical to the mass diagonal)."""
        return self.mass


def _global_1d_blocks(ref: ReferenceElement, num_elements: int, bc: str) -> sp.csr_matrix:
    """Assemble the 1D global differentiation matrix for ``K`` elements."""
    k, n = num_elements, ref.num_nodes
    if bc == PERIODIC and k < 2:
        raise ValueError("periodic coupling needs at least 2 elements")
    s = ref.Q - ref.Q.T
    b_r = np.zeros((n, n))
    b_r[n - 1, 0] = 1.0
    b_l = b_r.T

    eye = sp.identity(k, format="csr")
    up = sp.diags([np.ones(k - 1)], [1], shape=(k, k), format="csr")
    down = sp.diags([np.ones(k - 1)], [-1], shape=(k, k), format="csr")
    if bc == PERIODIC:
        wrap_up = sp.csr_matrix(([1.0], ([k - 1], [0])), shape=(k, k))
        up = up + wrap_up
        down = down + wrap_up.T
    q = 0.5 * (sp.kron(eye, s) + sp.kron(up, b_r) - sp.kron(down, b_l))
    if bc == WEAK:
        b_diag = np.zeros(k * n)
        b_diag[0] = -1.0
        b_diag[-1] = 1.0
        q = q + 0.5 * sp.diags(b_diag)
    return q.tocsr()


def assemble_global_1d(mesh: Mesh, ref: ReferenceElement) -> GlobalOperators:
    if mesh.dim != 1:
        raise ValueError("assemble_global_1d requires a 1D mesh")
    k, n = mesh.num_elements[0], ref.num_nodes
    jac = mesh.jacobian(0)
    lo, _ = mesh.bounds[0]
    q = _global_1d_blocks(ref, k, mesh.bc[0])

    mass = np.tile(jac * ref.weights, k)
    centers = lo + (2 * np.arange(k) + 1) * jac
    x = (centers[:, None] + jac * ref.nodes[None, :]).reshape(-1, 1)

    b_diag = np.zeros(k * n)
    if mesh.bc[0] == WEAK:
        b_diag[0] = -1.0
        b_diag[-1] = 1.0
        boundary = BoundaryNodes(index=np.array([0, k * n - 1]),
                                 normals=np.array([[-1.0], [1.0]]),
                                 weights=np.array([1.0, 1.0]))
    else:
        boundary = _empty_boundary(1)
    return GlobalOperators(mesh=mesh, ref=ref, mass=mass, x=x,
                           Q=(q,), B=(b_diag,), boundary=boundary)


def _element_major_permutation(kx: int, ky: int, n: int) -> np.ndarray:
    """Map element-major node indices to tensor (y-outer, x-inner) indices."""
    perm = np.empty(kx * ky * n * n, dtype=int)
    g = 0
    for ey in range(ky):
        for ex in range(kx):
            for jy in range(n):
                for jx in range(n):
                    perm[g] = (ey * n + jy) * (kx * n) + ex * n + jx
                    g += 1
    return perm


def assemble_global_2d(mesh: Mesh, ref: ReferenceElement) -> GlobalOperators:
    """Tensor-product (Kronecker) assembly of the 2D global operators.

    Node ordering is element-major with x fastest inside each element;
    elements are ordered x-fastest as well.
    """
    if mesh.dim != 2:
        raise ValueError("assemble_global_2d requires a 2D mesh")
    n = ref.num_nodes
    kx, ky = mesh.num_elements

    q1 =[_global_1d_blocks(ref, mesh.num_elements[i], mesh.bc[i]) for i in range(2)]
    m1 = [np.tile(mesh.jacobian(i) * ref.weights, mesh.num_elements[i]) for i in range(2)]
    b1 = []
    for i in range(2):
        b = np.zeros(mesh.num_elements[i] * n)
        if mesh.bc[i] == WEAK:
            b[0] = -1.0
            b[-1] = 1.0
        b1.append(b)

    perm = _element_major_permutation(kx, ky, n)
    # In tensor ordering the x-direction operator is diag(m_y) (x) Q_x and
    # vice versa; permute rows/columns to element-major ordering.
    q_x = sp.kron(sp.diags(m1[1]), q1[0]).tocsr()[perm, :][:, perm]
    q_y = sp.kron(q1[1], sp.diags(m1[0])).tocsr()[perm, :][:, perm]
    b_x = np.kron(m1[1], b1[0])[perm]
    b_y = np.kron(b1[1], m1[0])[perm]
    mass = np.kron(m1[1], m1[0])[perm]

    x1 = []
    for i in range(2):
        lo, _ = mesh.bounds[i]
        jac = mesh.jacobian(i)
        centers = lo + (2 * np.arange(mesh.num_elements[i]) + 1) * jac
        x1.append((centers[:, None] + jac * ref.nodes[None, :]).ravel())
    nx, ny = kx * n, ky * n
    coords = np.column_stack([np.tile(x1[0], ny), np.repeat(x1[1], nx)])
    coords = coords[perm]

    inv_perm = np.empty_like(perm)
    inv_perm[perm] = np.arange(len(perm))
    idx, normals, weights = [], [], []
    if mesh.bc[0] == WEAK:
        for side, ix in ((-1.0, 0), (1.0, nx - 1)):
            for iy in range(ny):
                idx.append(inv_perm[iy * nx + ix])
                normals.append([side, 0.0])
                weights.append(m1[1][iy])
    if mesh.bc[1] == WEAK:
        for side, iy in ((-1.0, 0), (1.0, ny - 1)):
            for ix in range(nx):
                idx.append(inv_perm[iy * nx + ix])
                normals.append([0.0, side])
                weights.append(m1[0][ix])
    if idx:
        boundary = BoundaryNodes(index=np.array(idx), normals=np.array(normals),
                                 weights=np.array(weights))
    else:
        boundary = _empty_boundary(2)
    return GlobalOperators(mesh=mesh, ref=ref, mass=mass, x=coords,
                           Q=(q_x, q_y), B=(b_x, b_y), boundary=boundary)


def assemble_global(mesh: Mesh, ref: ReferenceElement) -> GlobalOperators:
    if mesh.dim == 1:
        return assemble_global_1d(mesh, ref)
    return assemble_global_2d(mesh, ref)
