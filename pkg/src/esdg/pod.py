"""Proper orthogonal decomposition in the quadrature-weighted norm.

The reduced basis is spatial and shared across conserved components:
each component of each sampled frame contributes one snapshot column,
and the weighted inner product uses the global quadrature weights.
"""

from __future__ import annotations

import numpy as np

from .physics import ConservationLaw

__all__ = [
    "build_snapshots",
    "weighted_pod",
    "energy_residual",
]

#: Relative singular-value floor below which modes count as numerical noise.
RANK_TOLERANCE = 1e-14


def build_snapshots(states: np.ndarray, law: ConservationLaw, *,
                    enrich: bool = True) -> np.ndarray:
    """Spatial snapshot matrix (num_nodes, n_snapshots).

    Each conserved component of each trajectory frame becomes one
    column.  With ``enrich`` the entropy variables of every frame are
    appended as extra columns, which lets the reduced space represent
    the entropy-projected states it is evaluated at.
    """
    x = np.asarray(states, dtype=float)
    if x.ndim != 2:
        raise ValueError("states must be (frames, ndof)")
    frames, ndof = x.shape
    m = ndof // law.n
    if m * law.n != ndof:
        raise ValueError("frame length is not a multiple of the component count")
    per_frame = x.reshape(frames, law.n, m)
    cols = [per_frame.reshape(frames * law.n, m).T]
    if enrich:
        v = np.array([law.entropy_variables(f) for f in per_frame])
        cols.append(v.reshape(frames * law.n, m).T)
    return np.hstack(cols)


def weighted_pod(snapshots: np.ndarray, weights: np.ndarray,
                 num_modes: int):
    """Leading POD basis of the snapshot set in the weighted norm.

    Returns ``(basis, singular_values)`` where ``basis`` has shape
    (ndof, num_modes), satisfies ``basis.T @ diag(weights) @ basis = I``,
    and each mode's largest-magnitude entry is positive (fixing the SVD
    sign ambiguity so offline results are reproducible).
    """
    snapshots = np.asarray(snapshots, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if snapshots.shape[0] != weights.size:
        raise ValueError("weights length must match snapshot rows")
    if num_modes < 1:
        raise ValueError("num_modes must be positive")
    sqrt_w = np.sqrt(weights)
    u, sigma, _ = np.linalg.svd(sqrt_w[:, None] * snapshots,
                                full_matrices=False)
    if num_modes > sigma.size or sigma[num_modes - 1] < RANK_TOLERANCE * sigma[0]:
        rank = int(np.sum(sigma >= RANK_TOLERANCE * sigma[0]))
        raise ValueError(
            f"requested {num_modes} modes but the snapshot set has "
            f"numerical rank {rank}")
    basis = u[:, :num_modes] / sqrt_w[:, None]
    peaks = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[peaks, np.arange(num_modes)])
    basis *= signs
    return basis, sigma


def energy_residual(singular_values: np.ndarray) -> np.ndarray:
    """Relative energy left out by truncating after mode i (1-based tail).

    ``out[i] = sqrt(sum_{j > i} sigma_j^2 / sum_j sigma_j^2)``, so
    ``out[k-1]`` is the residual of a k-mode basis.
    """
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    tail = total - np.cumsum(s2)
    return np.sqrt(np.maximum(tail, 0.0) / total)
