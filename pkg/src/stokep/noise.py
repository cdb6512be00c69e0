"""Reproducible Gaussian noise for multi-channel Brownian motion.

Streams are counter-based (Philox), keyed by ``(master_seed,
realization_index)``.  Realization ``k``'s draws are therefore computable
directly, without generating realizations ``0..k-1``, in any order and on
any worker, with bitwise-identical results.  Gaussian variates come from
numpy's ziggurat transform, which is deterministic for a fixed numpy build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

_UINT64_MASK = (1 << 64) - 1

# A stream is a plain numpy Generator; a single stream must not be shared
# across concurrent consumers.
RandomStream = np.random.Generator


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one realization's noise stream.

    The mapping (master_seed, realization_index) -> stream is a pure
    function; equal specs always reproduce the same draws.
    """

    master_seed: int
    realization_index: int = 0

    def __post_init__(self):
        if self.realization_index < 0:
            raise InvalidArgumentError("realization_index must be non-negative")


def derive_stream(spec: SeedSpec) -> RandomStream:
    """Return the deterministic pseudo-random stream for one realization.

    Streams for distinct realization indices are statistically independent
    by the counter-based Philox construction.
    """
    key = [spec.master_seed & _UINT64_MASK, spec.realization_index & _UINT64_MASK]
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoiseGrid:
    """Raw standard-normal draws for one realization of one run.

    ``values`` has shape (n_steps, n_channels, samples_per_step) and is
    consumed step-major, channel-minor, sample-innermost.  All variance
    scaling (sqrt(h) for Euler-Maruyama, sqrt(q_l * Q * h) for the
    two-sample Runge-Kutta stages) happens in the integrator, so one grid
    shape serves any scheme that matches it.
    """

    n_steps: int
    n_channels: int
    samples_per_step: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("n_steps", "n_channels", "samples_per_step"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        expected = (self.n_steps, self.n_channels, self.samples_per_step)
        if self.values.shape != expected:
            raise InvalidArgumentError(
                f"values shape {self.values.shape} does not match {expected}"
            )


def generate_grid(
    stream: RandomStream, n_steps: int, n_channels: int, samples_per_step: int
) -> NoiseGrid:
    """Fill a grid with independent standard-normal draws from ``stream``."""
    if min(n_steps, n_channels, samples_per_step) < 1:
        raise InvalidArgumentError("grid dimensions must all be >= 1")
    values = stream.standard_normal((n_steps, n_channels, samples_per_step))
    return NoiseGrid(n_steps, n_channels, samples_per_step, values)


def grid_for(
    spec: SeedSpec, n_steps: int, n_channels: int, samples_per_step: int
) -> NoiseGrid:
    """Convenience: derive the stream for ``spec`` and generate its grid."""
    return generate_grid(derive_stream(spec), n_steps, n_channels, samples_per_step)


def coarsen_grid(grid: NoiseGrid, factor: int = 2) -> NoiseGrid:
    """Aggregate a fine single-sample grid onto a ``factor``-times-coarser one.

    Consecutive draws are summed and rescaled by 1/sqrt(factor), so the
    coarse draws are again standard normal and both grids realize the same
    underlying Brownian path.  This is the pathwise coupling used by
    step-halving comparisons of Euler-Maruyama runs.
    """
    if factor < 1:
        raise InvalidArgumentError("factor must be >= 1")
    if grid.samples_per_step != 1:
        raise InvalidArgumentError("coarsening is defined for single-sample grids only")
    if grid.n_steps % factor != 0:
        raise InvalidArgumentError("n_steps must be divisible by factor")
    coarse = grid.n_steps // factor
    values = grid.values.reshape(coarse, factor, grid.n_channels, 1).sum(axis=1)
    values = values / np.sqrt(factor)
    return NoiseGrid(coarse, grid.n_channels, 1, values)
