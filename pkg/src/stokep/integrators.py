"""Fixed-step Ito SDE integrators.

Euler-Maruyama (weak order 1) and the two-stage stochastic Runge-Kutta of
Kasdin and Stankievech (weak order 2), with both published coefficient
sets, plus a fine-step reference-solution driver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InvalidArgumentError,
    IntegrationFailureError,
    NumericDomainError,
)
from .noise import NoiseGrid
from .sde import SdeSystem


class Scheme(enum.Enum):
    EULER_MARUYAMA = "em"
    SRK2 = "srk2"


@dataclass(frozen=True)
class Srk2Coefficients:
    """Coefficient set for the two-stage weak-order-2 scheme.

    ``q`` holds the per-stage noise-sample variance weights: stage sample l
    is drawn with variance q_l * Q * h.  Note d2 of the numerical-search
    set exceeds 1, so the second diffusion stage evaluates sigma at
    t + 1.18816 h; this is intentional and implemented exactly as
    published.
    """

    alpha: tuple
    beta: tuple
    c2: float
    d2: float
    a21: float
    b21: float
    e21: float
    g21: float
    q: tuple
    label: str


HEUN_ANALOG = Srk2Coefficients(
    alpha=(0.25, 0.75),
    beta=(1.0, 1.0),
    c2=2.0 / 3.0,
    d2=1.5,
    a21=2.0 / 3.0,
    b21=1.0,
    e21=1.5,
    g21=1.5,
    q=(2.0 / 3.0, 1.0 / 3.0),
    label="heun",
)

NUMERICAL_SEARCH = Srk2Coefficients(
    alpha=(0.136713, 0.863287),
    beta=(-1.512997, 1.112094),
    c2=0.579182,
    d2=1.18816,
    a21=0.579182,
    b21=-1.512997,
    e21=1.18816,
    g21=2.16704,
    q=(0.25301, 0.34026),
    label="search",
)

COEFFICIENT_SETS = {c.label: c for c in (HEUN_ANALOG, NUMERICAL_SEARCH)}


@dataclass
class Trajectory:
    """Node times and states of one realization on a uniform grid."""

    times: np.ndarray
    states: np.ndarray
    h: float
    scheme: Scheme

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _apply_diffusion(sig, w):
    # sigma (..., dim, m) times sample vector (..., m), channel-wise
    return (sig * w[..., None, :]).sum(axis=-1)


def euler_maruyama_step(sys: SdeSystem, t, x, h, dW):
    """One Euler-Maruyama step x + mu h + sigma . dW.

    ``dW`` must already carry variance h (i.e. sqrt(h) times standard
    draws).  Works on single states and on batches with leading axes.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(sys.drift(t, x), dtype=float)
    sig = np.asarray(sys.diffusion(t, x), dtype=float)
    out = x + mu * h + _apply_diffusion(sig, np.asarray(dW, dtype=float))
    if out.ndim == 1 and not np.isfinite(out).all():
        raise NumericDomainError(f"non-finite state after Euler-Maruyama step at t={t}")
    return out


def srk2_step(sys: SdeSystem, t, x, h, coeffs: Srk2Coefficients, draws, q_var: float = 1.0):
    """One step of the two-stage weak-order-2 Runge-Kutta.

        x_{n+1} = x_n + a1 k1 + a2 k2 + b1 j1 + b2 j2
        k1 = h f(x_n, t_n)                      j1 = sigma(x_n, t_n) . w1
        k2 = h f(x_n + a21 k1 + b21 j1, t_n + c2 h)
        j2 = sigma(x_n + e21 k1 + g21 j1, t_n + d2 h) . w2

    ``draws`` holds unscaled standard normals of shape (..., noise_dim, 2);
    stage samples are built as w_l = sqrt(q_l * q_var * h) * draws[..., l],
    one independent pair per noise channel.  ``q_var`` is the Brownian
    increment variance constant Q (1 for standard Brownian motion).
    """
    x = np.asarray(x, dtype=float)
    draws = np.asarray(draws, dtype=float)
    w1 = np.sqrt(coeffs.q[0] * q_var * h) * draws[..., 0]
    w2 = np.sqrt(coeffs.q[1] * q_var * h) * draws[..., 1]

    single = x.ndim == 1
    k1 = h * np.asarray(sys.drift(t, x), dtype=float)
    j1 = _apply_diffusion(np.asarray(sys.diffusion(t, x), dtype=float), w1)
    if single:
        _check_stage(k1, "k1", t)
        _check_stage(j1, "j1", t)
    k2 = h * np.asarray(
        sys.drift(t + coeffs.c2 * h, x + coeffs.a21 * k1 + coeffs.b21 * j1), dtype=float
    )
    j2 = _apply_diffusion(
        np.asarray(
            sys.diffusion(t + coeffs.d2 * h, x + coeffs.e21 * k1 + coeffs.g21 * j1),
            dtype=float,
        ),
        w2,
    )
    if single:
        _check_stage(k2, "k2", t)
        _check_stage(j2, "j2", t)
    return (
        x
        + coeffs.alpha[0] * k1
        + coeffs.alpha[1] * k2
        + coeffs.beta[0] * j1
        + coeffs.beta[1] * j2
    )


def _check_stage(value, name, t):
    if not np.isfinite(value).all():
        raise NumericDomainError(f"non-finite stage {name} at t={t}")


def step_count(t0: float, T: float, h: float) -> int:
    """Number of uniform steps covering [t0, T]; errors if h does not divide."""
    if h <= 0:
        raise InvalidArgumentError("step size h must be positive")
    if T < t0:
        raise InvalidArgumentError("final time must not precede t0")
    n = (T - t0) / h
    n_round = int(round(n))
    if abs(n - n_round) > 1e-9 * max(1.0, abs(n)):
        raise InvalidArgumentError(f"(T - t0)/h = {n} is not an integer step count")
    return n_round


def samples_per_step(scheme: Scheme) -> int:
    return 2 if scheme is Scheme.SRK2 else 1


def integrate(
    sys: SdeSystem,
    x0,
    t0: float,
    T: float,
    h: float,
    scheme: Scheme,
    grid: Optional[NoiseGrid],
    coeffs: Optional[Srk2Coefficients] = None,
    q_var: float = 1.0,
) -> Trajectory:
    """Integrate one realization over [t0, T], recording every node.

    The grid must match the run exactly: one step per interval, one channel
    per noise dimension, and the scheme's samples per step.  Noise draws
    are consumed in the grid's declared order, so equal seeds and shapes
    reproduce trajectories bitwise.  A mid-run numeric failure raises
    IntegrationFailureError carrying the valid partial trajectory.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise InvalidArgumentError(f"x0 must have shape ({sys.dim},)")
    n_steps = step_count(t0, T, h)
    if scheme is Scheme.SRK2 and coeffs is None:
        coeffs = NUMERICAL_SEARCH

    times = t0 + h * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, sys.dim))
    states[0] = x0
    if n_steps == 0:
        return Trajectory(times, states, h, scheme)

    if grid is None:
        raise InvalidArgumentError("a noise grid is required when n_steps >= 1")
    sps = samples_per_step(scheme)
    if (grid.n_steps, grid.n_channels, grid.samples_per_step) != (
        n_steps,
        sys.noise_dim,
        sps,
    ):
        raise InvalidArgumentError(
            f"grid shape ({grid.n_steps}, {grid.n_channels}, {grid.samples_per_step}) "
            f"does not match run shape ({n_steps}, {sys.noise_dim}, {sps})"
        )

    sqrt_h = np.sqrt(h)
    x = x0
    for i in range(n_steps):
        t = t0 + i * h
        try:
            if scheme is Scheme.EULER_MARUYAMA:
                x = euler_maruyama_step(sys, t, x, h, sqrt_h * grid.values[i, :, 0])
            else:
                x = srk2_step(sys, t, x, h, coeffs, grid.values[i], q_var)
        except NumericDomainError as exc:
            partial = Trajectory(times[: i + 1], states[: i + 1].copy(), h, scheme)
            raise IntegrationFailureError(
                f"integration failed at step {i} (t={t}): {exc}",
                partial=partial,
                step_index=i,
            ) from exc
        states[i + 1] = x
    return Trajectory(times, states, h, scheme)


REFERENCE_H = 2.0**-10


def reference_solution(
    sys: SdeSystem,
    x0,
    t0: float,
    T: float,
    grid: NoiseGrid,
    h_ref: float = REFERENCE_H,
) -> Trajectory:
    """Fine-step SRK2 (numerical-search coefficients) ground-truth run.

    Used in the weak sense only: coarser runs are compared through
    expectations, never pathwise, so their grids need not be derived from
    this one.  ``h_ref`` may not exceed 2^-10.
    """
    if h_ref > REFERENCE_H * (1.0 + 1e-12):
        raise InvalidArgumentError("reference step must satisfy h_ref <= 2^-10")
    return integrate(sys, x0, t0, T, h_ref, Scheme.SRK2, grid, NUMERICAL_SEARCH)
