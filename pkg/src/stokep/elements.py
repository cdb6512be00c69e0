"""Osculating orbital elements and their stochastic Gauss equations.

Extraction of (a, e, omega, f) from polar two-body states through the
energy, angular momentum and Laplace-Runge-Lenz vector, the inverse map
back to polar coordinates, and the planar stochastic Gauss system driving
(a, e, omega) directly under radial/transverse perturbing accelerations,
with a shared-noise comparison harness between the two formulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import csvio
from .errors import (
    InvalidArgumentError,
    IntegrationFailureError,
    NumericDomainError,
    PericenterSingularityError,
    PericenterUndefinedError,
    UnboundOrbitError,
)
from .integrators import Scheme, integrate
from .models import PolarState, TwoBodyParams, _state_array, energy, two_body_system
from .noise import NoiseGrid
from .sde import Interpretation, SdeSystem

#: Below this eccentricity the pericenter angle of an extracted state is
#: numerically meaningless.
E_MIN_EXTRACT = 1e-12
#: The Gauss equations divide by e; evaluations below this threshold raise
#: instead of returning amplified noise.
E_MIN_GAUSS = 1e-6


def wrap_angle(x):
    """Wrap angles to (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    out = -((-x + np.pi) % (2.0 * np.pi) - np.pi)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class OrbitalState:
    """Osculating elements (a, e, omega, f): semi-major axis, eccentricity,
    pericenter angle and true anomaly, elliptic regime only."""

    a: float
    e: float
    omega: float
    f: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidArgumentError("semi-major axis must be positive")
        if not 0.0 <= self.e < 1.0:
            raise InvalidArgumentError("eccentricity must lie in [0, 1)")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.e, self.omega, self.f], dtype=float)


@dataclass(frozen=True)
class PerturbationSpec:
    """Radial/transverse perturbing acceleration of the Gauss system.

    ``rbar``/``tbar`` give the deterministic radial and transverse
    components; ``rtilde``/``ttilde`` give the stochastic intensity rows
    against the two Brownian channels.  All four take element states of
    shape (..., 4) = (a, e, omega, phi) and must broadcast.
    """

    rbar: Callable
    tbar: Callable
    rtilde: Callable
    ttilde: Callable


def _lrl_components(p: TwoBodyParams, r, phi, v, w):
    # Laplace-Runge-Lenz vector components; their norm equals e*m*k.
    m, k = p.m, p.k
    core = m * r**3 * w**2 - k
    swirl = m * r**2 * w * v
    ax = m * (np.cos(phi) * core + swirl * np.sin(phi))
    ay = m * (np.sin(phi) * core - swirl * np.cos(phi))
    return ax, ay


def extract_elements(p: TwoBodyParams, state) -> OrbitalState:
    """Osculating elements of a bound polar state.

    a = -k/(2H) and e = sqrt(1 + 2 M^2 H/(m k^2)); omega comes from
    atan2 of the Laplace-Runge-Lenz components (quadrant-safe, unlike the
    arctan of their ratio) and f = wrap(phi - omega).  Raises for unbound
    states (H >= 0) and for near-circular ones where omega is undefined.
    """
    x = _state_array(state)
    if x.ndim != 1:
        raise InvalidArgumentError("extract_elements takes a single state")
    r, phi, v, w = x
    if r <= 0:
        raise NumericDomainError("extraction needs r > 0")
    m, k = p.m, p.k
    M = m * r * r * w
    H = 0.5 * m * (v * v + r * r * w * w) - k / r
    if H >= 0:
        raise UnboundOrbitError(f"state is not bound (H = {H})")
    if M == 0.0:
        raise NumericDomainError("zero angular momentum: degenerate radial orbit")
    a = -k / (2.0 * H)
    e = np.sqrt(max(1.0 + 2.0 * M * M * H / (m * k * k), 0.0))
    if e < E_MIN_EXTRACT:
        raise PericenterUndefinedError(
            f"eccentricity {e} below {E_MIN_EXTRACT}; pericenter angle undefined",
            a=a,
            e=float(e),
        )
    ax, ay = _lrl_components(p, r, phi, v, w)
    omega = float(np.arctan2(ay, ax))
    f = wrap_angle(phi - omega)
    return OrbitalState(float(a), float(e), omega, float(f))


def extract_elements_batch(p: TwoBodyParams, states) -> np.ndarray:
    """Vectorized extraction over states of shape (..., 4).

    Returns (..., 4) element rows (a, e, omega, f); rows that are unbound,
    collided or otherwise out of domain come back as NaN instead of
    raising.
    """
    x = np.asarray(states, dtype=float)
    r, phi, v, w = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    m, k = p.m, p.k
    with np.errstate(all="ignore"):
        M = m * r * r * w
        H = 0.5 * m * (v * v + r * r * w * w) - k / r
        a = -k / (2.0 * H)
        e = np.sqrt(np.maximum(1.0 + 2.0 * M * M * H / (m * k * k), 0.0))
        ax, ay = _lrl_components(p, r, phi, v, w)
        omega = np.arctan2(ay, ax)
        f = wrap_angle(phi - omega)
        bad = ~np.isfinite(x).all(axis=-1) | (r <= 0) | (H >= 0) | (M == 0)
    out = np.stack([a, e, omega, f], axis=-1)
    out[bad] = np.nan
    return out


def orbital_radius(a, e, f):
    """r = a (1 - e^2) / (1 + e cos f)."""
    return a * (1.0 - e * e) / (1.0 + e * np.cos(f))


def orbital_radial_velocity(mu, a, e, f):
    """v = sqrt(mu / (a (1 - e^2))) e sin f."""
    return np.sqrt(mu / (a * (1.0 - e * e))) * e * np.sin(f)


def orbital_angular_velocity(mu, a, e, f):
    """w = sqrt(mu) (1 + e cos f)^2 / (a^(3/2) (1 - e^2)^(3/2)).

    Equivalently sqrt(mu a (1 - e^2)) / r^2, the form the angular momentum
    fixes; both are used interchangeably in tests.
    """
    return np.sqrt(mu) * (1.0 + e * np.cos(f)) ** 2 / (a**1.5 * (1.0 - e * e) ** 1.5)


def elements_to_polar(p: TwoBodyParams, el: OrbitalState) -> PolarState:
    """Polar state on the osculating ellipse at true anomaly f."""
    a, e, omega, f = el.a, el.e, el.omega, el.f
    mu = p.mu
    r = orbital_radius(a, e, f)
    v = orbital_radial_velocity(mu, a, e, f)
    w = orbital_angular_velocity(mu, a, e, f)
    return PolarState(float(r), float(wrap_angle(omega + f)), float(v), float(w))


def random_elliptic_states(
    p: TwoBodyParams,
    n: int,
    rng: np.random.Generator,
    a_range=(0.6, 1.8),
    e_range=(0.05, 0.9),
) -> np.ndarray:
    """Sample n bound polar states uniformly in (a, e, omega, f)."""
    a = rng.uniform(*a_range, size=n)
    e = rng.uniform(*e_range, size=n)
    omega = rng.uniform(-np.pi, np.pi, size=n)
    f = rng.uniform(-np.pi, np.pi, size=n)
    mu = p.mu
    r = orbital_radius(a, e, f)
    v = orbital_radial_velocity(mu, a, e, f)
    w = orbital_angular_velocity(mu, a, e, f)
    phi = wrap_angle(omega + f)
    return np.stack([r, phi, v, w], axis=-1)


def sp_perturbation(p: TwoBodyParams) -> PerturbationSpec:
    """The fluctuating-cloud force expressed as a Gauss perturbation.

    No deterministic part; the radial channel carries intensity
    r(a, e, f) * sigma_r and the tangential channel the constant
    sigma_phi.
    """

    def rbar(y):
        return np.zeros(np.asarray(y).shape[:-1])

    tbar = rbar

    def rtilde(y):
        y = np.asarray(y, dtype=float)
        a, e = y[..., 0], y[..., 1]
        f = y[..., 3] - y[..., 2]
        out = np.zeros(y.shape[:-1] + (2,))
        out[..., 0] = orbital_radius(a, e, f) * p.sigma_r
        return out

    def ttilde(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (2,))
        out[..., 1] = p.sigma_phi
        return out

    return PerturbationSpec(rbar=rbar, tbar=tbar, rtilde=rtilde, ttilde=ttilde)


def gauss_system(p: TwoBodyParams, pert: PerturbationSpec) -> SdeSystem:
    """Stochastic Gauss equations as a 4-state, 2-channel Ito system.

    State (a, e, omega, phi) with f = phi - omega.  The (a, e, omega) rows
    carry the full drift including the quadratic-intensity corrections in
    Rtilde.Rtilde, Ttilde.Ttilde and Rtilde.Ttilde; phi advances
    deterministically at the osculating angular velocity, closing the
    system.  Evaluations below the eccentricity threshold raise, since the
    e and omega equations divide by e.
    """
    mu = p.mu

    def _pieces(y):
        y = np.asarray(y, dtype=float)
        a, e = y[..., 0], y[..., 1]
        f = y[..., 3] - y[..., 2]
        if y.ndim == 1 and e < E_MIN_GAUSS:
            raise PericenterSingularityError(
                f"eccentricity {e} below {E_MIN_GAUSS}: Gauss equations singular"
            )
        sf, cf = np.sin(f), np.cos(f)
        P = 1.0 + e * cf
        ome2 = 1.0 - e * e
        return y, a, e, f, sf, cf, P, ome2

    def drift(t, y):
        y, a, e, f, sf, cf, P, ome2 = _pieces(y)
        rb = np.asarray(pert.rbar(y), dtype=float)
        tb = np.asarray(pert.tbar(y), dtype=float)
        rt = np.asarray(pert.rtilde(y), dtype=float)
        tt = np.asarray(pert.ttilde(y), dtype=float)
        r2 = (rt * rt).sum(axis=-1)
        t2 = (tt * tt).sum(axis=-1)
        rdt = (rt * tt).sum(axis=-1)

        pref_a = 2.0 * a**1.5 / np.sqrt(mu * ome2)
        pref = np.sqrt(a * ome2 / mu)
        cfac = cf + (e + cf) / P
        gfac = (2.0 + e * cf) / P

        da = (
            pref_a * (e * sf * rb + P * tb)
            + (a * a / mu)
            * ((1.0 + 4.0 * e * e * sf * sf / ome2) * r2 + (1.0 + 4.0 * P * P / ome2) * t2)
            + (8.0 * a * a / (mu * ome2)) * e * sf * P * rdt
        )
        de = (
            pref * (sf * rb + cfac * tb)
            + (a * ome2 * cf * cf / (2.0 * e * mu)) * r2
            + (a * ome2 / (mu * e)) * (2.0 - 0.5 * cf * (2.0 + e * cf) / P * cfac) * t2
            + (a * ome2 / (mu * e * P)) * (e * sf**3 - np.sin(2.0 * f)) * rdt
        )
        dom = pref * (-(cf / e) * rb + (sf / e) * gfac * tb) + (a * ome2 / (mu * e * e)) * (
            0.5 * np.sin(2.0 * f) * r2
            - (e + cf * (2.0 + e * cf) ** 2) * sf / (P * P) * t2
            + gfac * np.cos(2.0 * f) * rdt
        )
        dphi = orbital_angular_velocity(mu, a, e, f)

        out = np.empty_like(y)
        out[..., 0] = da
        out[..., 1] = de
        out[..., 2] = dom
        out[..., 3] = dphi
        return out

    def diffusion(t, y):
        y, a, e, f, sf, cf, P, ome2 = _pieces(y)
        rt = np.asarray(pert.rtilde(y), dtype=float)
        tt = np.asarray(pert.ttilde(y), dtype=float)

        pref_a = 2.0 * a**1.5 / np.sqrt(mu * ome2)
        pref = np.sqrt(a * ome2 / mu)
        cfac = cf + (e + cf) / P
        gfac = (2.0 + e * cf) / P

        out = np.zeros(y.shape + (2,))
        out[..., 0, :] = pref_a[..., None] * (
            (e * sf)[..., None] * rt + P[..., None] * tt
        )
        out[..., 1, :] = pref[..., None] * (sf[..., None] * rt + cfac[..., None] * tt)
        out[..., 2, :] = pref[..., None] * (
            -(cf / e)[..., None] * rt + (sf / e * gfac)[..., None] * tt
        )
        return out

    def guard(y):
        y = np.asarray(y, dtype=float)
        return (
            np.isfinite(y).all(axis=-1)
            & (y[..., 0] > 0)
            & (y[..., 1] >= E_MIN_GAUSS)
            & (y[..., 1] < 1.0)
        )

    return SdeSystem(
        dim=4,
        noise_dim=2,
        drift=drift,
        diffusion=diffusion,
        interpretation=Interpretation.ITO,
        domain_guard=guard,
        label="gauss-elements",
    )


@dataclass
class ComparisonReport:
    """Shared-noise comparison of the polar and element formulations.

    Tracks osculating elements extracted per node from the polar run
    against the directly integrated Gauss run, plus the polar energy and
    the energy reconstructed from the Gauss semi-major axis via
    a = -k/(2H).  Discrepancies are sup-norms over the compared window;
    relative values are scaled by the sup-norm of the direct track.
    """

    times: np.ndarray
    a_direct: np.ndarray
    a_gauss: np.ndarray
    e_direct: np.ndarray
    e_gauss: np.ndarray
    omega_direct: np.ndarray
    omega_gauss: np.ndarray
    H_direct: np.ndarray
    H_from_a: np.ndarray
    sup_abs: dict = field(default_factory=dict)
    sup_rel: dict = field(default_factory=dict)
    truncated: bool = False

    COLUMNS = (
        "t",
        "a_direct",
        "a_gauss",
        "e_direct",
        "e_gauss",
        "omega_direct",
        "omega_gauss",
        "H_direct",
        "H_from_a",
    )

    def write_csv(self, path, comments=()):
        csvio.write_csv(
            path,
            self.COLUMNS,
            [
                self.times,
                self.a_direct,
                self.a_gauss,
                self.e_direct,
                self.e_gauss,
                self.omega_direct,
                self.omega_gauss,
                self.H_direct,
                self.H_from_a,
            ],
            comments=comments,
        )


def compare_formulations(
    p: TwoBodyParams,
    s0: PolarState,
    T: float,
    h: float,
    grid: NoiseGrid,
) -> ComparisonReport:
    """Integrate both formulations under the identical Brownian increments.

    Euler-Maruyama on the polar system (elements extracted per node) and
    on the Gauss system, both consuming the same single-sample grid, so the
    two discretizations target the same pathwise solution.  Euler-Maruyama
    is used on both sides because its one-draw-per-step noise usage gives
    "same increments" a meaning across the two state spaces.  If either
    path leaves the elliptic domain the comparison is truncated at the
    last node valid in both.
    """
    el0 = extract_elements(p, s0)
    if el0.e < E_MIN_GAUSS:
        raise PericenterSingularityError(
            f"start state eccentricity {el0.e} is below the Gauss threshold {E_MIN_GAUSS}"
        )
    polar_sys = two_body_system(p)
    gauss_sys = gauss_system(p, sp_perturbation(p))
    y0 = np.array([el0.a, el0.e, el0.omega, wrap_angle(el0.omega + el0.f)])

    truncated = False
    try:
        polar_traj = integrate(polar_sys, s0.as_array(), 0.0, T, h, Scheme.EULER_MARUYAMA, grid)
    except IntegrationFailureError as exc:
        polar_traj, truncated = exc.partial, True
    try:
        gauss_traj = integrate(gauss_sys, y0, 0.0, T, h, Scheme.EULER_MARUYAMA, grid)
    except IntegrationFailureError as exc:
        gauss_traj, truncated = exc.partial, True

    n_nodes = min(len(polar_traj.times), len(gauss_traj.times))
    direct = extract_elements_batch(p, polar_traj.states[:n_nodes])
    valid = np.isfinite(direct).all(axis=-1) & np.isfinite(
        gauss_traj.states[:n_nodes]
    ).all(axis=-1)
    if not valid.all():
        first_bad = int(np.argmin(valid))
        n_nodes = first_bad
        truncated = True
    if n_nodes < 2:
        raise NumericDomainError("comparison left the elliptic domain immediately")

    times = polar_traj.times[:n_nodes]
    direct = direct[:n_nodes]
    gauss = gauss_traj.states[:n_nodes]
    H_direct = energy(p, polar_traj.states[:n_nodes])
    H_from_a = -p.k / (2.0 * gauss[:, 0])
    omega_gauss = wrap_angle(gauss[:, 2])

    report = ComparisonReport(
        times=times,
        a_direct=direct[:, 0],
        a_gauss=gauss[:, 0],
        e_direct=direct[:, 1],
        e_gauss=gauss[:, 1],
        omega_direct=direct[:, 2],
        omega_gauss=omega_gauss,
        H_direct=H_direct,
        H_from_a=H_from_a,
        truncated=truncated,
    )
    pairs = {
        "a": (direct[:, 0], gauss[:, 0], None),
        "e": (direct[:, 1], gauss[:, 1], None),
        "omega": (direct[:, 2], omega_gauss, "angle"),
        "H": (H_direct, H_from_a, None),
    }
    for name, (ref, other, kind) in pairs.items():
        delta = wrap_angle(other - ref) if kind == "angle" else other - ref
        sup = float(np.max(np.abs(delta)))
        scale = float(np.max(np.abs(ref)))
        report.sup_abs[name] = sup
        report.sup_rel[name] = sup / scale if scale > 0 else np.inf
    return report
