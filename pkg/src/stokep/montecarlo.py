"""Ensemble execution and weak-convergence studies.

Realizations are integrated in fixed-size vectorized batches; batch
contents depend only on the realization indices, never on the worker
count, and batch results are reduced in index order with compensated
summation.  Estimates are therefore bitwise identical for any number of
workers.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EnsembleDegenerateError,
    InconclusiveStudyError,
    InvalidArgumentError,
)
from .integrators import (
    NUMERICAL_SEARCH,
    Scheme,
    Srk2Coefficients,
    Trajectory,
    euler_maruyama_step,
    integrate,
    samples_per_step,
    srk2_step,
    step_count,
)
from .noise import NoiseGrid, SeedSpec, grid_for
from .sde import SdeSystem

#: Fixed vectorization width.  Part of the reproducibility contract: the
#: partition of realizations into batches must not depend on scheduling.
BATCH_SIZE = 1024

#: Ensembles losing more than this fraction of paths are marked tainted.
TAINT_FRACTION = 0.01


@dataclass
class EnsembleEstimate:
    """Per-node mean/variance/standard error over the surviving paths.

    Excluded paths (collision or domain exits) are dropped from the
    estimates and counted in ``n_excluded``; ``stderr`` is
    sqrt(variance / n) with n the surviving count.
    """

    times: np.ndarray
    names: list
    mean: dict
    variance: dict
    stderr: dict
    n_realizations: int
    n_excluded: int

    @property
    def n_used(self) -> int:
        return self.n_realizations - self.n_excluded

    @property
    def tainted(self) -> bool:
        return self.n_excluded > TAINT_FRACTION * self.n_realizations


@dataclass
class FunctionalEstimate:
    """Per-path values of a path functional with their ensemble statistics."""

    values: np.ndarray
    mean: float
    stderr: float


class Reference(enum.Enum):
    ANALYTIC = "analytic"
    REFERENCE_SOLUTION = "reference"
    EXACT_SCHEME_EXPECTATION = "exact"


@dataclass
class ConvergenceStudy:
    """Weak errors against a reference over decreasing step sizes."""

    step_sizes: np.ndarray
    weak_errors: np.ndarray
    fitted_order: float
    reference: Reference
    stderrs: Optional[np.ndarray] = None


def _kahan_add(total, comp, term):
    y = term - comp
    t = total + y
    comp[...] = (t - total) - y
    total[...] = t


def _integrate_batch(sys, x0, t0, h, n_steps, scheme, coeffs, draws, q_var):
    """Vectorized integration of one batch; returns (nodes, valid mask).

    Paths failing the domain guard or turning non-finite are frozen on the
    initial state so the remaining rows keep computing elementwise, and
    are reported invalid; their recorded values are never used.
    """
    n_paths = draws.shape[0]
    x = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    nodes = np.empty((n_paths, n_steps + 1, sys.dim))
    nodes[:, 0] = x
    valid = np.ones(n_paths, dtype=bool)
    park = np.asarray(x0, dtype=float)
    sqrt_h = np.sqrt(h)

    for i in range(n_steps):
        ok = np.isfinite(x).all(axis=1)
        if sys.domain_guard is not None:
            ok &= sys.domain_guard(x)
        if not ok.all():
            valid &= ok
            x[~valid] = park
        t = t0 + i * h
        with np.errstate(all="ignore"):
            if scheme is Scheme.EULER_MARUYAMA:
                x = euler_maruyama_step(sys, t, x, h, sqrt_h * draws[:, i, :, 0])
            else:
                x = srk2_step(sys, t, x, h, coeffs, draws[:, i], q_var)
        bad_rows = ~np.isfinite(x).all(axis=1)
        if bad_rows.any():
            valid &= ~bad_rows
            x[~valid] = park
        nodes[:, i + 1] = x

    ok = np.isfinite(x).all(axis=1)
    if sys.domain_guard is not None:
        ok &= sys.domain_guard(x)
    valid &= ok
    return nodes, valid


def _running_trapezoid(values, h):
    """Cumulative trapezoidal integral along axis 1 of (paths, nodes)."""
    inner = 0.5 * h * (values[:, :-1] + values[:, 1:])
    out = np.empty_like(values)
    out[:, 0] = 0.0
    np.cumsum(inner, axis=1, out=out[:, 1:])
    return out


def run_ensemble(
    sys: SdeSystem,
    x0,
    T: float,
    h: float,
    scheme: Scheme,
    n: int,
    master_seed: int,
    observables: Sequence,
    coeffs: Optional[Srk2Coefficients] = None,
    t0: float = 0.0,
    workers: Optional[int] = None,
    integrands: Sequence = (),
    q_var: float = 1.0,
) -> EnsembleEstimate:
    """Estimate observable expectations over n independent realizations.

    Realization i draws its grid from SeedSpec(master_seed, i), so the
    ensemble is reproducible and order-independent.  ``observables`` is a
    sequence of (name, fn) with fn mapping state arrays (..., dim) to
    values (...); ``integrands`` are tracked as running trapezoidal
    integrals along each path and reported under the name "int_<name>".
    """
    if n < 2:
        raise InvalidArgumentError("an ensemble needs n >= 2 realizations")
    n_steps = step_count(t0, T, h)
    if n_steps == 0:
        raise InvalidArgumentError("ensemble runs need at least one step")
    if scheme is Scheme.SRK2 and coeffs is None:
        coeffs = NUMERICAL_SEARCH
    sps = samples_per_step(scheme)
    names = [nm for nm, _ in observables] + [f"int_{nm}" for nm, _ in integrands]
    if len(set(names)) != len(names):
        raise InvalidArgumentError("observable names must be unique")

    n_nodes = n_steps + 1
    batches = [(lo, min(lo + BATCH_SIZE, n)) for lo in range(0, n, BATCH_SIZE)]

    def work(lo, hi):
        width = hi - lo
        draws = np.empty((width, n_steps, sys.noise_dim, sps))
        for i in range(width):
            draws[i] = grid_for(
                SeedSpec(master_seed, lo + i), n_steps, sys.noise_dim, sps
            ).values
        nodes, valid = _integrate_batch(
            sys, x0, t0, h, n_steps, scheme, coeffs, draws, q_var
        )
        rows = {}
        with np.errstate(all="ignore"):
            for nm, fn in observables:
                rows[nm] = np.asarray(fn(nodes), dtype=float)
            for nm, fn in integrands:
                rows[f"int_{nm}"] = _running_trapezoid(
                    np.asarray(fn(nodes), dtype=float), h
                )
        return rows, valid

    sums = {nm: np.zeros(n_nodes) for nm in names}
    sum_comp = {nm: np.zeros(n_nodes) for nm in names}
    sqs = {nm: np.zeros(n_nodes) for nm in names}
    sq_comp = {nm: np.zeros(n_nodes) for nm in names}
    n_excluded = 0

    max_workers = workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(work, lo, hi) for lo, hi in batches]
        for fut in futures:  # reduce strictly in batch (realization) order
            rows, valid = fut.result()
            n_excluded += int((~valid).sum())
            for nm in names:
                vals = rows[nm][valid]
                _kahan_add(sums[nm], sum_comp[nm], vals.sum(axis=0))
                _kahan_add(sqs[nm], sq_comp[nm], (vals * vals).sum(axis=0))

    n_used = n - n_excluded
    if n_used < 2:
        raise EnsembleDegenerateError(
            f"only {n_used} of {n} realizations survived exclusion"
        )
    mean = {}
    variance = {}
    stderr = {}
    for nm in names:
        m = sums[nm] / n_used
        var = np.maximum(sqs[nm] - n_used * m * m, 0.0) / (n_used - 1)
        mean[nm] = m
        variance[nm] = var
        stderr[nm] = np.sqrt(var / n_used)
    times = t0 + h * np.arange(n_nodes)
    return EnsembleEstimate(
        times=times,
        names=names,
        mean=mean,
        variance=variance,
        stderr=stderr,
        n_realizations=n,
        n_excluded=n_excluded,
    )


def integral_functional(trajectories: Sequence[Trajectory], integrand) -> FunctionalEstimate:
    """Trapezoidal integral of integrand(state) along each trajectory.

    All trajectories must share a uniform time grid.  Returns the per-path
    integrals with their ensemble mean and standard error.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise InvalidArgumentError("at least one trajectory is required")
    values = np.empty(len(trajectories))
    for i, traj in enumerate(trajectories):
        dt = np.diff(traj.times)
        if dt.size and not np.allclose(dt, traj.h, rtol=1e-9, atol=0.0):
            raise InvalidArgumentError("trajectory nodes must be uniform")
        g = np.asarray(integrand(traj.states), dtype=float)
        values[i] = np.trapezoid(g, dx=traj.h)
    mean = float(values.mean())
    if len(values) > 1:
        stderr = float(values.std(ddof=1) / np.sqrt(len(values)))
    else:
        stderr = float("nan")
    return FunctionalEstimate(values=values, mean=mean, stderr=stderr)


def _require_affine(sys, x0, t=0.0):
    """Probe the midpoint property of drift and diffusion near x0."""
    rng = np.random.default_rng(123456789)
    x0 = np.asarray(x0, dtype=float)
    scale = np.maximum(1.0, np.abs(x0))
    for _ in range(3):
        xa = x0 + scale * rng.uniform(-1.0, 1.0, size=x0.shape)
        xb = x0 + scale * rng.uniform(-1.0, 1.0, size=x0.shape)
        mid = 0.5 * (xa + xb)
        for fn in (sys.drift, sys.diffusion):
            lhs = np.asarray(fn(t, mid), dtype=float)
            rhs = 0.5 * (np.asarray(fn(t, xa), dtype=float) + np.asarray(fn(t, xb), dtype=float))
            if not np.allclose(lhs, rhs, rtol=1e-8, atol=1e-12):
                raise InvalidArgumentError(
                    "exact scheme-expectation propagation needs drift and "
                    "diffusion affine in the state"
                )


def _zero_grid(n_steps, n_channels, sps) -> NoiseGrid:
    return NoiseGrid(n_steps, n_channels, sps, np.zeros((n_steps, n_channels, sps)))


def scheme_mean_trajectory(
    sys: SdeSystem,
    x0,
    t0: float,
    T: float,
    h: float,
    scheme: Scheme,
    coeffs: Optional[Srk2Coefficients] = None,
) -> Trajectory:
    """Exact expectation of the scheme for affine systems.

    Noise samples have zero mean and enter every stage affinely, so the
    scheme's expectation is the deterministic recursion obtained by
    zeroing all samples.  This removes Monte Carlo noise entirely from
    bias measurements.
    """
    _require_affine(sys, x0)
    n_steps = step_count(t0, T, h)
    grid = _zero_grid(n_steps, sys.noise_dim, samples_per_step(scheme)) if n_steps else None
    return integrate(sys, x0, t0, T, h, scheme, grid, coeffs)


def _final_mean_and_stderr(est: EnsembleEstimate, dim):
    mean = np.array([est.mean[f"x{i}"][-1] for i in range(dim)])
    se = np.array([est.stderr[f"x{i}"][-1] for i in range(dim)])
    return mean, se


def _component_observables(dim):
    return [(f"x{i}", (lambda i: lambda s: s[..., i])(i)) for i in range(dim)]


def weak_error_study(
    sys: SdeSystem,
    x0,
    T: float,
    scheme: Scheme,
    steps: Sequence[float],
    reference: Reference,
    master_seed: int = 0,
    n: int = 10_000,
    coeffs: Optional[Srk2Coefficients] = None,
    workers: Optional[int] = None,
    h_ref: float = 2.0**-10,
    t0: float = 0.0,
) -> ConvergenceStudy:
    """Weak error |E(x_N) - E_ref| per step size with a log-log order fit.

    The reference is the closed-form mean (ANALYTIC), a fine-step SRK2
    run's sampled mean (REFERENCE_SOLUTION), or the closed-form mean with
    the scheme expectation propagated exactly and no sampling at all
    (EXACT_SCHEME_EXPECTATION, affine systems only).  For sampled variants
    the study refuses to fit a slope when the error bars of all steps
    overlap, raising InconclusiveStudyError instead.
    """
    steps = sorted({float(s) for s in steps}, reverse=True)
    if len(steps) < 2:
        raise InvalidArgumentError("a study needs at least two step sizes")
    for hstep in steps:
        step_count(t0, T, hstep)  # validates divisibility

    x0 = np.asarray(x0, dtype=float)
    errors = np.empty(len(steps))
    stderrs = None

    if reference is Reference.EXACT_SCHEME_EXPECTATION:
        if sys.exact_mean is None:
            raise InvalidArgumentError("exact-mean reference requires sys.exact_mean")
        target = np.asarray(sys.exact_mean(T - t0, x0), dtype=float)
        for idx, hstep in enumerate(steps):
            traj = scheme_mean_trajectory(sys, x0, t0, T, hstep, scheme, coeffs)
            errors[idx] = np.max(np.abs(traj.final_state - target))
    elif reference is Reference.ANALYTIC:
        if sys.exact_mean is None:
            raise InvalidArgumentError("analytic reference requires sys.exact_mean")
        target = np.asarray(sys.exact_mean(T - t0, x0), dtype=float)
        stderrs = np.empty(len(steps))
        obs = _component_observables(sys.dim)
        for idx, hstep in enumerate(steps):
            est = run_ensemble(
                sys, x0, T, hstep, scheme, n, master_seed, obs,
                coeffs=coeffs, t0=t0, workers=workers,
            )
            mean, se = _final_mean_and_stderr(est, sys.dim)
            comp = int(np.argmax(np.abs(mean - target)))
            errors[idx] = abs(mean[comp] - target[comp])
            stderrs[idx] = se[comp]
    elif reference is Reference.REFERENCE_SOLUTION:
        obs = _component_observables(sys.dim)
        ref_est = run_ensemble(
            sys, x0, T, h_ref, Scheme.SRK2, n, master_seed, obs,
            coeffs=NUMERICAL_SEARCH, t0=t0, workers=workers,
        )
        ref_mean, ref_se = _final_mean_and_stderr(ref_est, sys.dim)
        stderrs = np.empty(len(steps))
        for idx, hstep in enumerate(steps):
            est = run_ensemble(
                sys, x0, T, hstep, scheme, n, master_seed, obs,
                coeffs=coeffs, t0=t0, workers=workers,
            )
            mean, se = _final_mean_and_stderr(est, sys.dim)
            comp = int(np.argmax(np.abs(mean - ref_mean)))
            errors[idx] = abs(mean[comp] - ref_mean[comp])
            stderrs[idx] = np.sqrt(se[comp] ** 2 + ref_se[comp] ** 2)
    else:
        raise InvalidArgumentError(f"unknown reference {reference!r}")

    if stderrs is not None:
        overlapping = all(
            abs(errors[i] - errors[j]) <= 3.0 * (stderrs[i] + stderrs[j])
            for i in range(len(steps))
            for j in range(i + 1, len(steps))
        )
        if overlapping:
            raise InconclusiveStudyError(
                "Monte Carlo noise floor exceeds the weak-error signal: "
                "all error bars overlap, no slope can be trusted"
            )

    safe = np.maximum(errors, 1e-300)
    fitted = float(np.polyfit(np.log(steps), np.log(safe), 1)[0])
    return ConvergenceStudy(
        step_sizes=np.asarray(steps),
        weak_errors=errors,
        fitted_order=fitted,
        reference=reference,
        stderrs=stderrs,
    )
