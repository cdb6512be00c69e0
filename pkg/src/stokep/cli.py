"""Command-line front end.

Subcommands: simulate | ensemble | converge | gauss | check-structure.
Every command is deterministic given (config, seed); CSV outputs are
byte-identical across reruns and worker counts, with the manifest
timestamp as the only non-deterministic line.

Exit codes: 0 success, 1 usage/config, 2 numeric failure, 3 inconclusive
study, 4 tainted ensemble.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from . import csvio
from .config import RunConfig, load_config, preset_path
from .elements import (
    compare_formulations,
    extract_elements_batch,
    random_elliptic_states,
)
from .errors import (
    ConfigError,
    InconclusiveStudyError,
    IntegrationFailureError,
    NumericDomainError,
    StokepError,
)
from .integrators import Scheme, integrate, samples_per_step, step_count
from .models import (
    PolarState,
    angular_momentum,
    energy,
    langevin_system,
    momentum_split,
    polar_to_momentum,
    two_body_momentum_system,
    two_body_system,
)
from .montecarlo import Reference, run_ensemble, weak_error_study
from .noise import SeedSpec, grid_for
from .sde import check_hamiltonian_structure

TWOBODY_OBSERVABLES = ("M", "H", "r", "a", "e", "omega")


class _Parser(argparse.ArgumentParser):
    # usage errors belong to exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(_sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stokep", description="stochastic two-body dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (default: bundled preset)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--workers", type=int, help="worker threads (or STOKEP_WORKERS)")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--scheme", choices=["em", "srk2"], help="integrator override")
        p.add_argument("--coeffs", choices=["heun", "search"], help="coefficient set")
        p.add_argument("--T", type=float, help="final time override")
        p.add_argument("--h", type=float, help="step size override")
        p.add_argument("--n", type=int, help="realization count override")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override any config key",
        )

    p = sub.add_parser("simulate", help="single trajectory to CSV")
    common(p)
    p.set_defaults(func=cmd_simulate, default_preset="twobody")

    p = sub.add_parser("ensemble", help="Monte Carlo expectations to CSV")
    common(p)
    p.add_argument(
        "--observables",
        help="comma-separated observable names (two-body: M,H,r,a,e,omega)",
    )
    p.set_defaults(func=cmd_ensemble, default_preset="twobody")

    p = sub.add_parser("converge", help="weak-order study")
    common(p)
    p.add_argument("--steps", help="comma-separated step sizes")
    p.add_argument(
        "--reference",
        choices=[r.value for r in Reference],
        default=Reference.EXACT_SCHEME_EXPECTATION.value,
    )
    p.set_defaults(func=cmd_converge, default_preset="langevin")

    p = sub.add_parser("gauss", help="polar vs element-formulation comparison")
    common(p)
    p.set_defaults(func=cmd_gauss, default_preset="twobody")

    p = sub.add_parser("check-structure", help="stochastic Hamiltonian structure test")
    common(p)
    p.set_defaults(func=cmd_check_structure, default_preset="twobody")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        dotted, value = item.split("=", 1)
        out[dotted.strip()] = value.strip()
    for key, attr in (
        ("run.seed", "seed"),
        ("run.out", "out"),
        ("run.scheme", "scheme"),
        ("run.coeffs", "coeffs"),
        ("run.t", "T"),
        ("run.h", "h"),
        ("run.n", "n"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = str(val)
    return out


def _load(args) -> RunConfig:
    path = args.config if args.config else preset_path(args.default_preset)
    return load_config(path, _overrides(args))


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("STOKEP_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"STOKEP_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _build_system(cfg: RunConfig):
    if cfg.kind == "twobody":
        return two_body_system(cfg.params)
    return langevin_system(cfg.params)


def _manifest_entries(cfg: RunConfig, extra=None) -> dict:
    entries = {
        "model": cfg.kind,
        "seed": cfg.master_seed,
        "scheme": cfg.scheme.value,
        "coefficients": cfg.coeffs.label,
        "h": csvio.format_value(cfg.h),
        "T": csvio.format_value(cfg.T),
        "n": cfg.n,
    }
    entries.update(extra or {})
    return entries


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = cfg.out or "simulate.csv"
    system = _build_system(cfg)
    n_steps = step_count(0.0, cfg.T, cfg.h)
    grid = None
    if n_steps:
        grid = grid_for(
            SeedSpec(cfg.master_seed, 0),
            n_steps,
            system.noise_dim,
            samples_per_step(cfg.scheme),
        )
    truncated = None
    try:
        traj = integrate(
            system, cfg.x0, 0.0, cfg.T, cfg.h, cfg.scheme, grid,
            cfg.coeffs, cfg.q_var,
        )
    except IntegrationFailureError as exc:
        traj, truncated = exc.partial, str(exc)

    if cfg.kind == "twobody":
        p = cfg.params
        states = traj.states
        r, phi = states[:, 0], states[:, 1]
        columns = [
            traj.times, r, phi, states[:, 2], states[:, 3],
            r * np.cos(phi), r * np.sin(phi),
            angular_momentum(p, states), energy(p, states),
        ]
        header = ["t", "r", "phi", "v", "w", "x", "y", "M", "H"]
        H = energy(p, states)
        drift = float(np.max(np.abs(H - H[0])) / abs(H[0])) if len(H) > 1 else 0.0
        summary = f"max_rel_energy_drift={drift:.6e}"
    else:
        columns = [traj.times, traj.states[:, 0]]
        header = ["t", "x"]
        summary = f"final_x={csvio.format_value(traj.states[-1, 0])}"

    csvio.write_csv(out, header, columns)
    if truncated is not None:
        csvio.append_comment(out, "TRUNCATED")
        print(f"error: {truncated}", file=_sys.stderr)
        print(f"partial trajectory written to {out}")
        return 2
    print(f"wrote {out} ({len(traj.times)} nodes)")
    print(summary)
    return 0


def _twobody_observable(name, p):
    if name == "M":
        return lambda s: angular_momentum(p, s)
    if name == "H":
        return lambda s: energy(p, s)
    if name == "r":
        return lambda s: np.asarray(s)[..., 0]
    if name in ("a", "e", "omega"):
        idx = {"a": 0, "e": 1, "omega": 2}[name]
        return lambda s: extract_elements_batch(p, s)[..., idx]
    raise ConfigError(
        f"unknown observable {name!r}; choose from {', '.join(TWOBODY_OBSERVABLES)}"
    )


def cmd_ensemble(cfg: RunConfig, args) -> int:
    out = cfg.out or "ensemble.csv"
    system = _build_system(cfg)
    if cfg.kind == "twobody":
        names = (
            [s.strip() for s in args.observables.split(",")]
            if getattr(args, "observables", None)
            else ["M", "H"]
        )
        observables = [(nm, _twobody_observable(nm, cfg.params)) for nm in names]
        integrands = []
        if "H" in names:
            p = cfg.params
            integrands.append(
                (
                    "energy_input",
                    lambda s: p.sigma_r**2 * np.asarray(s)[..., 0] ** 2 + p.sigma_phi**2,
                )
            )
    else:
        names = ["x"]
        observables = [("x", lambda s: np.asarray(s)[..., 0])]
        integrands = []

    est = run_ensemble(
        system, cfg.x0, cfg.T, cfg.h, cfg.scheme, cfg.n, cfg.master_seed,
        observables, coeffs=cfg.coeffs, workers=_workers(args),
        integrands=integrands, q_var=cfg.q_var,
    )

    header = ["t"]
    columns = [est.times]
    for nm in names:
        header += [f"{nm}_mean", f"{nm}_stderr"]
        columns += [est.mean[nm], est.stderr[nm]]
    if integrands:
        p = cfg.params
        h_mean = est.mean["H"]
        i_mean = est.mean["int_energy_input"]
        residual = (h_mean - h_mean[0]) - 0.5 * p.m * i_mean
        combined = np.sqrt(
            est.stderr["H"] ** 2 + (0.5 * p.m * est.stderr["int_energy_input"]) ** 2
        )
        header += ["eid_residual", "eid_stderr"]
        columns += [residual, combined]

    csvio.write_csv(out, header, columns)
    csvio.write_manifest(
        f"{out}.manifest.txt",
        _manifest_entries(
            cfg,
            {
                "observables": ",".join(names),
                "n_excluded": est.n_excluded,
                "tainted": str(est.tainted).lower(),
            },
        ),
    )
    print(f"wrote {out} and {out}.manifest.txt")
    for nm in names:
        print(
            f"{nm}: final mean={csvio.format_value(est.mean[nm][-1])} "
            f"stderr={csvio.format_value(est.stderr[nm][-1])}"
        )
    if est.tainted:
        print(
            f"warning: run tainted ({est.n_excluded}/{est.n_realizations} paths excluded)",
            file=_sys.stderr,
        )
        return 4
    return 0


def cmd_converge(cfg: RunConfig, args) -> int:
    out = cfg.out or "converge.csv"
    system = _build_system(cfg)
    if args.steps:
        steps = [float(s) for s in args.steps.split(",")]
    else:
        steps = [2.0**-k for k in range(3, 8)]
    study = weak_error_study(
        system, cfg.x0, cfg.T, cfg.scheme, steps,
        Reference(args.reference), master_seed=cfg.master_seed, n=cfg.n,
        coeffs=cfg.coeffs, workers=_workers(args),
    )
    header = ["h", "weak_error"]
    columns = [study.step_sizes, study.weak_errors]
    if study.stderrs is not None:
        header.append("stderr")
        columns.append(study.stderrs)
    csvio.write_csv(out, header, columns)
    print(f"wrote {out}")
    print(f"weak_order={study.fitted_order:.6f}")
    return 0


def cmd_gauss(cfg: RunConfig, args) -> int:
    if cfg.kind != "twobody":
        raise ConfigError("the gauss command needs a two-body configuration")
    out = cfg.out or "gauss.csv"
    n_steps = step_count(0.0, cfg.T, cfg.h)
    grid = grid_for(SeedSpec(cfg.master_seed, 0), n_steps, 2, 1)
    report = compare_formulations(
        cfg.params, PolarState.from_array(cfg.x0), cfg.T, cfg.h, grid
    )
    report.write_csv(out)
    print(f"wrote {out} ({len(report.times)} nodes, truncated={report.truncated})")
    for name in ("a", "e", "omega", "H"):
        print(
            f"sup_abs_{name}={report.sup_abs[name]:.6e} "
            f"sup_rel_{name}={report.sup_rel[name]:.6e}"
        )
    return 0


def cmd_check_structure(cfg: RunConfig, args) -> int:
    if cfg.kind != "twobody":
        raise ConfigError("the check-structure command needs a two-body configuration")
    p = cfg.params
    rng = np.random.default_rng(cfg.master_seed)
    polar = random_elliptic_states(p, 100, rng, e_range=(0.05, 0.8))
    points = [(0.0, polar_to_momentum(p, s)) for s in polar]
    report = check_hamiltonian_structure(two_body_momentum_system(p), momentum_split(), points)
    print(f"hamiltonian={str(report.is_hamiltonian).lower()}")
    print(f"max_residual={report.max_residual:.6e}")
    violated = "none" if report.is_hamiltonian else report.worst_condition.name.lower()
    print(f"violated_condition={violated}")
    if not report.is_hamiltonian:
        print(f"detail: {report.worst_condition.value}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 1
    except InconclusiveStudyError as exc:
        print(f"inconclusive study: {exc}", file=_sys.stderr)
        return 3
    except (NumericDomainError, IntegrationFailureError) as exc:
        print(f"numeric failure: {exc}", file=_sys.stderr)
        return 2
    except StokepError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
