"""Concrete SDE systems and their first integrals.

The stochastically perturbed planar two-body problem in polar coordinates
(with its momentum-coordinate form for structure checks), the Langevin
validation model with closed-form moments, and the exact Ito differentials
of angular momentum and energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollisionError, InvalidArgumentError, NumericDomainError
from .sde import HamiltonianSplit, Interpretation, SdeSystem

#: Below this radius (canonical length units) evaluations raise rather than
#: return huge finite values; ensemble paths that reach it are excluded.
R_MIN_DEFAULT = 1e-6


@dataclass(frozen=True)
class TwoBodyParams:
    """Physical parameters of the stochastic two-body problem.

    ``m`` is the reduced mass, ``k`` the potential coefficient, and the
    gravitational parameter mu = k/m is derived so the identity holds
    exactly.  ``sigma_r`` (radial) and ``sigma_phi`` (tangential) are the
    noise intensities of the fluctuating cloud force.
    """

    m: float = 1.0
    k: float = 1.0
    sigma_r: float = 0.0
    sigma_phi: float = 0.0
    r_min: float = R_MIN_DEFAULT

    def __post_init__(self):
        if self.m <= 0 or self.k <= 0:
            raise InvalidArgumentError("m and k must be positive")
        if self.sigma_r < 0 or self.sigma_phi < 0:
            raise InvalidArgumentError("noise intensities must be non-negative")
        if self.r_min <= 0:
            raise InvalidArgumentError("r_min must be positive")

    @property
    def mu(self) -> float:
        return self.k / self.m


@dataclass(frozen=True)
class PolarState:
    """Two-body state (r, phi, v, w): radius, position angle, radial and
    angular velocity, in canonical units."""

    r: float
    phi: float
    v: float
    w: float

    def __post_init__(self):
        if self.r <= 0:
            raise InvalidArgumentError("radius must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.phi, self.v, self.w], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PolarState":
        r, phi, v, w = np.asarray(arr, dtype=float)
        return cls(r, phi, v, w)


@dataclass(frozen=True)
class LangevinParams:
    """Mean-reverting linear SDE dX = -mu_ou X dt + sigma dB."""

    mu_ou: float
    sigma: float
    x0: float = 1.0

    def __post_init__(self):
        if self.mu_ou <= 0:
            raise InvalidArgumentError("mu_ou must be positive")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")


# Canonical-units preset: distances in AU, times in TU (about 58 days),
# mu = 1 AU^3/TU^2.  The bundled initial state and noise levels make the
# stochastic force about a tenth of gravity at t=0.
CANONICAL_PARAMS = TwoBodyParams(m=1.0, k=1.0, sigma_r=0.0121, sigma_phi=2.2e-4)
CANONICAL_STATE = PolarState(r=1.0, phi=1.0, v=0.01, w=1.1)
CANONICAL_T = 15.0
CANONICAL_H = 0.01


def _state_array(state) -> np.ndarray:
    if isinstance(state, PolarState):
        return state.as_array()
    return np.asarray(state, dtype=float)


def two_body_system(p: TwoBodyParams) -> SdeSystem:
    """The stochastic two-body problem as a 4-state, 2-channel Ito system.

    State (r, phi, v, w); drift (v, w, r w^2 - k/(m r^2), -2 v w / r);
    diffusion rows ((0,0), (0,0), (r sigma_r, 0), (0, sigma_phi / r))
    against independent radial and tangential Brownian channels.  The
    Wong-Zakai correction of this system vanishes, so the Ito and
    Stratonovich readings coincide and the flag is Ito.

    Single-state evaluations at r < r_min raise CollisionError; batch
    evaluations rely on the attached domain guard instead.
    """
    m, k, r_min = p.m, p.k, p.r_min
    sigma_r, sigma_phi = p.sigma_r, p.sigma_phi

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        if x.ndim == 1 and r < r_min:
            raise CollisionError(f"radius {r} below collision guard {r_min}")
        v = x[..., 2]
        w = x[..., 3]
        out = np.empty_like(x)
        out[..., 0] = v
        out[..., 1] = w
        out[..., 2] = r * w * w - k / (m * r * r)
        out[..., 3] = -2.0 * v * w / r
        return out

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        if x.ndim == 1 and r < r_min:
            raise CollisionError(f"radius {r} below collision guard {r_min}")
        out = np.zeros(x.shape + (2,))
        out[..., 2, 0] = r * sigma_r
        out[..., 3, 1] = sigma_phi / r
        return out

    def guard(x):
        x = np.asarray(x, dtype=float)
        return np.isfinite(x).all(axis=-1) & (x[..., 0] >= r_min)

    return SdeSystem(
        dim=4,
        noise_dim=2,
        drift=drift,
        diffusion=diffusion,
        interpretation=Interpretation.ITO,
        domain_guard=guard,
        label="two-body",
    )


def two_body_momentum_system(p: TwoBodyParams) -> SdeSystem:
    """The same dynamics in momentum coordinates (r, phi, p_r, p_phi).

    p_r = m v and p_phi = m r^2 w.  In these conjugate variables the
    diffusion block of the momenta is diag(m sigma_r r, m sigma_phi r) and
    the coordinates carry no noise, which is the form the Hamiltonian
    structure test applies to.  Interpretation is Stratonovich (it
    coincides with Ito for this model).
    """
    m, k, r_min = p.m, p.k, p.r_min
    sigma_r, sigma_phi = p.sigma_r, p.sigma_phi

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        if x.ndim == 1 and r < r_min:
            raise CollisionError(f"radius {r} below collision guard {r_min}")
        pr = x[..., 2]
        pphi = x[..., 3]
        out = np.empty_like(x)
        out[..., 0] = pr / m
        out[..., 1] = pphi / (m * r * r)
        out[..., 2] = pphi * pphi / (m * r**3) - k / (r * r)
        out[..., 3] = 0.0
        return out

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        r = x[..., 0]
        out = np.zeros(x.shape + (2,))
        out[..., 2, 0] = m * sigma_r * r
        out[..., 3, 1] = m * sigma_phi * r
        return out

    def guard(x):
        x = np.asarray(x, dtype=float)
        return np.isfinite(x).all(axis=-1) & (x[..., 0] >= r_min)

    return SdeSystem(
        dim=4,
        noise_dim=2,
        drift=drift,
        diffusion=diffusion,
        interpretation=Interpretation.STRATONOVICH,
        domain_guard=guard,
        label="two-body-momentum",
    )


def momentum_split() -> HamiltonianSplit:
    """Conjugate split of the momentum-coordinate state: P = (p_r, p_phi)."""
    return HamiltonianSplit(p_indices=(2, 3), q_indices=(0, 1))


def polar_to_momentum(p: TwoBodyParams, state) -> np.ndarray:
    """Map (r, phi, v, w) states to (r, phi, m v, m r^2 w)."""
    x = _state_array(state)
    out = x.copy()
    out[..., 2] = p.m * x[..., 2]
    out[..., 3] = p.m * x[..., 0] ** 2 * x[..., 3]
    return out


def langevin_system(p: LangevinParams) -> SdeSystem:
    """1-state, 1-channel Ito system with drift -mu_ou x and constant sigma."""

    def drift(t, x):
        return -p.mu_ou * np.asarray(x, dtype=float)

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (1,))
        out[...] = p.sigma
        return out

    def exact_mean(t, x0):
        return np.asarray(x0, dtype=float) * np.exp(-p.mu_ou * t)

    return SdeSystem(
        dim=1,
        noise_dim=1,
        drift=drift,
        diffusion=diffusion,
        interpretation=Interpretation.ITO,
        exact_mean=exact_mean,
        label="langevin",
    )


def langevin_mean(p: LangevinParams, t, x0=None):
    """Closed-form E[X_t] = X_0 exp(-mu_ou t)."""
    x0 = p.x0 if x0 is None else x0
    return x0 * np.exp(-p.mu_ou * np.asarray(t, dtype=float))


def langevin_second_moment(p: LangevinParams, t, x0=None):
    """Closed-form E[X_t^2] = X_0^2 e^(-2 mu t) + sigma^2/(2 mu) (1 - e^(-2 mu t))."""
    x0 = p.x0 if x0 is None else x0
    t = np.asarray(t, dtype=float)
    decay = np.exp(-2.0 * p.mu_ou * t)
    return x0 * x0 * decay + p.sigma**2 / (2.0 * p.mu_ou) * (1.0 - decay)


def _check_radius(x):
    r = x[..., 0]
    if x.ndim == 1 and r <= 0:
        raise NumericDomainError("angular momentum and energy need r > 0")
    return r


def angular_momentum(p: TwoBodyParams, state):
    """M = m r^2 w.  Accepts a PolarState or an array of shape (..., 4)."""
    x = _state_array(state)
    r = _check_radius(x)
    return p.m * r * r * x[..., 3]


def energy(p: TwoBodyParams, state):
    """H = m (v^2 + r^2 w^2) / 2 - k / r."""
    x = _state_array(state)
    r = _check_radius(x)
    v = x[..., 2]
    w = x[..., 3]
    return 0.5 * p.m * (v * v + r * r * w * w) - p.k / r


def invariant_differentials(p: TwoBodyParams, state):
    """Exact Ito differentials of M and H along the stochastic flow.

    Returns {"M": (drift, dB-coefficients), "H": (drift, dB-coefficients)}
    with channel order (radial, tangential):

        dM = m r sigma_phi dB_phi
        dH = m/2 (sigma_r^2 r^2 + sigma_phi^2) dt
             + m r v sigma_r dB_r + m r w sigma_phi dB_phi

    M has no dt term (weak first integral); H gains energy at the
    deterministic rate above.
    """
    x = _state_array(state)
    if x.ndim != 1:
        raise InvalidArgumentError("invariant_differentials takes a single state")
    r = _check_radius(x)
    v, w = x[2], x[3]
    m = p.m
    dM = (0.0, np.array([0.0, m * r * p.sigma_phi]))
    dH = (
        0.5 * m * (p.sigma_r**2 * r**2 + p.sigma_phi**2),
        np.array([m * r * v * p.sigma_r, m * r * w * p.sigma_phi]),
    )
    return {"M": dM, "H": dH}
