"""Run configuration: flat key=value files with bracketed sections.

Unknown sections or keys are rejected rather than silently absorbed, so a
mistyped parameter fails the run instead of quietly using a default.  Any
key can be overridden from the command line.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .integrators import COEFFICIENT_SETS, Scheme, Srk2Coefficients
from .models import LangevinParams, PolarState, R_MIN_DEFAULT, TwoBodyParams

_MODEL_KEYS = {
    "twobody": {"kind", "m", "k", "sigma_r", "sigma_phi", "r_min"},
    "langevin": {"kind", "mu", "sigma"},
}
_INITIAL_KEYS = {
    "twobody": {"r", "phi", "v", "w"},
    "langevin": {"x"},
}
_RUN_KEYS = {"t", "h", "scheme", "coeffs", "n", "seed", "q", "out"}


@dataclass
class RunConfig:
    kind: str
    params: Union[TwoBodyParams, LangevinParams]
    x0: np.ndarray
    T: float
    h: float
    scheme: Scheme
    coeffs: Srk2Coefficients
    n: int
    master_seed: int
    out: Optional[str] = None
    q_var: float = 1.0


def preset_path(name: str):
    """Filesystem path of a bundled preset ('twobody' or 'langevin')."""
    ref = resources.files("stokep").joinpath(f"presets/{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"no bundled preset named {name!r}")
    return ref


def _float(raw, where):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _int(raw, where):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None


def _positive(value, where):
    if value <= 0:
        raise ConfigError(f"{where}: must be positive")
    return value


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Parse a config file (bundled two-body preset when path is None).

    ``overrides`` maps dotted keys like "run.seed" to raw string values
    and is applied before validation, so command-line flags behave exactly
    like edited file entries.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    source = str(path) if path is not None else str(preset_path("twobody"))
    try:
        with open(source) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {source}: {exc}") from None

    data = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        data.setdefault(sec, {})[key.lower()] = raw

    unknown_secs = set(data) - {"model", "initial", "run"}
    if unknown_secs:
        raise ConfigError(f"unknown config section(s): {sorted(unknown_secs)}")
    for sec in ("model", "initial", "run"):
        if sec not in data:
            raise ConfigError(f"missing config section [{sec}]")

    kind = data["model"].get("kind")
    if kind not in ("twobody", "langevin"):
        raise ConfigError("model.kind must be 'twobody' or 'langevin'")

    for sec, allowed in (
        ("model", _MODEL_KEYS[kind]),
        ("initial", _INITIAL_KEYS[kind]),
        ("run", _RUN_KEYS),
    ):
        extra = set(data[sec]) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {sorted(extra)}")

    model = data["model"]
    initial = data["initial"]
    run = data["run"]

    def need(section, mapping, key):
        if key not in mapping:
            raise ConfigError(f"missing required key {section}.{key}")
        return mapping[key]

    if kind == "twobody":
        params = TwoBodyParams(
            m=_positive(_float(need("model", model, "m"), "model.m"), "model.m"),
            k=_positive(_float(need("model", model, "k"), "model.k"), "model.k"),
            sigma_r=_float(need("model", model, "sigma_r"), "model.sigma_r"),
            sigma_phi=_float(need("model", model, "sigma_phi"), "model.sigma_phi"),
            r_min=_float(model.get("r_min", str(R_MIN_DEFAULT)), "model.r_min"),
        )
        state = PolarState(
            r=_float(need("initial", initial, "r"), "initial.r"),
            phi=_float(need("initial", initial, "phi"), "initial.phi"),
            v=_float(need("initial", initial, "v"), "initial.v"),
            w=_float(need("initial", initial, "w"), "initial.w"),
        )
        x0 = state.as_array()
    else:
        params = LangevinParams(
            mu_ou=_positive(_float(need("model", model, "mu"), "model.mu"), "model.mu"),
            sigma=_float(need("model", model, "sigma"), "model.sigma"),
            x0=_float(need("initial", initial, "x"), "initial.x"),
        )
        x0 = np.array([params.x0])

    T = _float(need("run", run, "t"), "run.T")
    if T < 0:
        raise ConfigError("run.T: must be non-negative")
    h = _positive(_float(need("run", run, "h"), "run.h"), "run.h")
    scheme_raw = run.get("scheme", "srk2")
    try:
        scheme = Scheme(scheme_raw)
    except ValueError:
        raise ConfigError(f"run.scheme: unknown scheme {scheme_raw!r}") from None
    coeffs_raw = run.get("coeffs", "search")
    if coeffs_raw not in COEFFICIENT_SETS:
        raise ConfigError(f"run.coeffs: unknown coefficient set {coeffs_raw!r}")
    n = _int(run.get("n", "10000"), "run.n")
    if n < 2:
        raise ConfigError("run.n: must be at least 2")
    seed = _int(run.get("seed", "0"), "run.seed")
    q_var = _positive(_float(run.get("q", "1.0"), "run.q"), "run.q")

    return RunConfig(
        kind=kind,
        params=params,
        x0=x0,
        T=T,
        h=h,
        scheme=scheme,
        coeffs=COEFFICIENT_SETS[coeffs_raw],
        n=n,
        master_seed=seed,
        out=run.get("out"),
        q_var=q_var,
    )
