"""Conservation laws: entropy pairs, fluxes, and boundary state rules.

States are stored component-major as arrays of shape ``(n, m)`` where
``n`` is the number of conserved components and ``m`` the number of
nodes.  All maps are pointwise in space and vectorized over nodes.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "InadmissibleStateError",
    "ConservationLaw",
    "Advection1D",
    "Burgers1D",
    "Euler",
    "entropy_pair_advection",
    "entropy_pair_burgers",
    "entropy_pair_euler",
    "mirror_state",
    "log_mean",
    "law_by_name",
]


class InadmissibleStateError(ValueError):
    """A state left the admissible set (e.g. negative density/pressure)."""

    def __init__(self, message, nodes=None):
        if nodes is not None and len(nodes):
            message = f"{message} at node(s) {np.asarray(nodes).ravel()[:8]}"
        super().__init__(message)
        self.nodes = nodes


def log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Logarithmic mean (a - b) / (log a - log b) with a series guard.

    The guard switches to a Taylor expansion when the relative gap
    ``|a - b| / (a + b)`` drops below 1e-4, avoiding the 0/0 limit.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    f = (a - b) / s
    u = f * f
    near = np.abs(f) < 1e-4
    series = s / (2.0 * (1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.where(near, 1.0, (a - b) / np.log(np.where(near, 2.0, a / b)))
    return np.where(near, series, exact)


class ConservationLaw:
    """Entropy pair and flux interface for one conservation law."""

    name: str = ""
    n: int = 1
    dim: int = 1

    def entropy(self, u):
        """Pointwise entropy S(u), shape (m,)."""
        raise NotImplementedError

    def entropy_variables(self, u):
        """v(u) = dS/du, shape (n, m)."""
        raise NotImplementedError

    def conservative_from_entropy(self, v):
        """Inverse map u(v), shape (n, m)."""
        raise NotImplementedError

    def potential(self, u, i):
        """Entropy potential psi^i(u), shape (m,)."""
        raise NotImplementedError

    def flux(self, u, i):
        """Physical flux f^i(u), shape (n, m)."""
        raise NotImplementedError

    def flux_ec(self, u_left, u_right, i):
        """Entropy-conservative two-point flux, shape (n, m)."""
        raise NotImplementedError

    def check_admissible(self, u):
        """Raise InadmissibleStateError if any node state is inadmissible."""
        bad = ~np.all(np.isfinite(u), axis=0)
        if np.any(bad):
            raise InadmissibleStateError("non-finite state", np.nonzero(bad)[0])


class Advection1D(ConservationLaw):
    """Linear advection u_t + u_x = 0 with the square entropy u^2/2."""

    name = "advection1d"
    n = 1
    dim = 1

    def entropy(self, u):
        return 0.5 * u[0] ** 2

    def entropy_variables(self, u):
        return u.copy()

    def conservative_from_entropy(self, v):
        return v.copy()

    def potential(self, u, i):
        return 0.5 * u[0] ** 2

    def flux(self, u, i):
        return u.copy()

    def flux_ec(self, u_left, u_right, i):
        return 0.5 * (u_left + u_right)


class Burgers1D(ConservationLaw):
    """Burgers' equation with the square entropy u^2/2."""

    name = "burgers1d"
    n = 1
    dim = 1

    def entropy(self, u):
        return 0.5 * u[0] ** 2

    def entropy_variables(self, u):
        return u.copy()

    def conservative_from_entropy(self, v):
        return v.copy()

    def potential(self, u, i):
        # psi = u^3 / 6, so that v*f - psi = u^3 / 3 is the entropy flux.
        return u[0] ** 3 / 6.0

    def flux(self, u, i):
        return 0.5 * u ** 2

    def flux_ec(self, u_left, u_right, i):
        return (u_left ** 2 + u_left * u_right + u_right ** 2) / 6.0


class Euler(ConservationLaw):
    """Compressible Euler equations in 1 or 2 dimensions.

    The entropy is S(u) = -rho * s with s = log(p / rho^gamma); the
    entropy-conservative two-point flux is the Ranocha flux (entropy
    conservative and kinetic-energy preserving).
    """

    def __init__(self, dim=1, gamma=1.4):
        if gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        self.dim = dim
        self.gamma = gamma
        self.n = dim + 2
        self.name = f"euler{dim}d"

    # -- primitive decomposition --------------------------------------
    def primitives(self, u):
        """(rho, velocities, pressure) with admissibility checking."""
        rho = u[0]
        vel = u[1:self.dim + 1] / rho
        kinetic = 0.5 * rho * np.sum(vel ** 2, axis=0)
        rho_e = u[self.dim + 1] - kinetic
        bad = (rho <= 0.0) | (rho_e <= 0.0) | ~np.isfinite(rho) | ~np.isfinite(rho_e)
        if np.any(bad):
            raise InadmissibleStateError(
                "nonpositive density or internal energy", np.nonzero(bad)[0])
        return rho, vel, (self.gamma - 1.0) * rho_e

    def check_admissible(self, u):
        self.primitives(u)

    def from_primitives(self, rho, vel, p):
        rho = np.asarray(rho, dtype=float)
        vel = np.atleast_2d(np.asarray(vel, dtype=float))
        p = np.asarray(p, dtype=float)
        energy = p / (self.gamma - 1.0) + 0.5 * rho * np.sum(vel ** 2, axis=0)
        return np.vstack([rho[None, :], rho * vel, energy[None, :]])

    # -- entropy pair ---------------------------------------------------
    def entropy(self, u):
        rho, _, p = self.primitives(u)
        return -rho * np.log(p / rho ** self.gamma)

    def entropy_variables(self, u):
        rho, vel, p = self.primitives(u)
        rho_e = p / (self.gamma - 1.0)
        s = np.log(p / rho ** self.gamma)
        energy = u[self.dim + 1]
        v = np.empty_like(u)
        v[0] = (rho_e * (self.gamma + 1.0 - s) - energy) / rho_e
        v[1:self.dim + 1] = rho * vel / rho_e
        v[self.dim + 1] = -rho / rho_e
        return v

    def conservative_from_entropy(self, v):
        g = self.gamma
        v_last = v[self.dim + 1]
        bad = v_last >= 0.0
        if np.any(bad):
            raise InadmissibleStateError(
                "entropy variables outside the admissible cone",
                np.nonzero(bad)[0])
        vel_sq = np.sum(v[1:self.dim + 1] ** 2, axis=0)
        s = g - v[0] + vel_sq / (2.0 * v_last)
        rho_e = ((g - 1.0) / (-v_last) ** g) ** (1.0 / (g - 1.0)) \
            * np.exp(-s / (g - 1.0))
        u = np.empty_like(v)
        u[0] = -rho_e * v_last
        u[1:self.dim + 1] = rho_e * v[1:self.dim + 1]
        u[self.dim + 1] = rho_e * (1.0 - vel_sq / (2.0 * v_last))
        return u

    def potential(self, u, i):
        # psi^i consistent with S = -rho*s: (gamma - 1) * rho * u_i.
        return (self.gamma - 1.0) * u[1 + i]

    def entropy_hessian_inverse(self, u):
        """Pointwise du/dv, shape (n, n, m); symmetric positive-definite."""
        rho, vel, p = self.primitives(u)
        energy = u[self.dim + 1]
        m = u.shape[1]
        a0 = np.empty((self.n, self.n, m))
        a0[0, 0] = rho
        for i in range(self.dim):
            a0[0, 1 + i] = a0[1 + i, 0] = rho * vel[i]
            for j in range(self.dim):
                a0[1 + i, 1 + j] = rho * vel[i] * vel[j] + (i == j) * p
            a0[1 + i, self.dim + 1] = a0[self.dim + 1, 1 + i] = \
                vel[i] * (energy + p)
        a0[0, self.dim + 1] = a0[self.dim + 1, 0] = energy
        enthalpy = (energy + p) / rho
        a0[self.dim + 1, self.dim + 1] = \
            rho * enthalpy ** 2 - self.gamma * p ** 2 / (rho * (self.gamma - 1.0))
        # The entropy scaling S = -rho*s carries a (gamma - 1) factor
        # relative to the Harten/Barth normalization.
        return a0 / (self.gamma - 1.0)

    # -- fluxes ----------------------------------------------------------
    def flux(self, u, i):
        rho, vel, p = self.primitives(u)
        f = np.empty_like(u)
        f[0] = u[1 + i]
        for j in range(self.dim):
            f[1 + j] = u[1 + j] * vel[i]
        f[1 + i] += p
        f[self.dim + 1] = vel[i] * (u[self.dim + 1] + p)
        return f

    def flux_ec(self, u_left, u_right, i):
        rho_l, vel_l, p_l = self.primitives(u_left)
        rho_r, vel_r, p_r = self.primitives(u_right)
        rho_ln = log_mean(rho_l, rho_r)
        # 1 / log_mean(rho/p) without forming the quotients explicitly.
        inv_rho_p_mean = p_l * p_r / log_mean(rho_l * p_r, rho_r * p_l)
        vel_avg = 0.5 * (vel_l + vel_r)
        p_avg = 0.5 * (p_l + p_r)
        vel_dot = 0.5 * np.sum(vel_l * vel_r, axis=0)
        f = np.empty_like(u_left)
        f[0] = rho_ln * vel_avg[i]
        for j in range(self.dim):
            f[1 + j] = f[0] * vel_avg[j]
        f[1 + i] += p_avg
        f[self.dim + 1] = f[0] * (vel_dot + inv_rho_p_mean / (self.gamma - 1.0)) \
            + 0.5 * (p_l * vel_r[i] + p_r * vel_l[i])
        return f


def mirror_state(u: np.ndarray, normal: np.ndarray, law: Euler) -> np.ndarray:
    """Reflective-wall exterior state: density and pressure copied,
    velocity negated (all components)."""
    law.check_admissible(u)
    u_plus = u.copy()
    u_plus[1:law.dim + 1] *= -1.0
    return u_plus


def entropy_pair_advection() -> Advection1D:
    return Advection1D()


def entropy_pair_burgers() -> Burgers1D:
    return Burgers1D()


def entropy_pair_euler(dim=1, gamma=1.4) -> Euler:
    return Euler(dim=dim, gamma=gamma)


def law_by_name(name: str) -> ConservationLaw:
    laws = {
        "advection1d": entropy_pair_advection,
        "burgers1d": entropy_pair_burgers,
        "euler1d": lambda: entropy_pair_euler(dim=1),
        "euler2d": lambda: entropy_pair_euler(dim=2),
    }
    if name not in laws:
        raise ValueError(f"unknown conservation law {name!r}; "
                         f"expected one of {sorted(laws)}")
    return laws[name]()
