"""Flat key-value experiment configuration.

Files are plain text, one ``key = value`` per line, ``#`` comments allowed.
Keys are dotted (section.name); unknown keys are rejected so typos fail
loudly at load time instead of silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .branco import DEFAULT_COUNT_CAP, RateParams
from .lattice import Lattice, build_lattice, validate_kernel

__all__ = ["ConfigError", "ExperimentConfig", "parse_config_text", "load_config", "config_from_dict"]


class ConfigError(ValueError):
    """Malformed configuration: unknown key, bad value, or failed precondition."""


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok.strip() != ""]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); None default means "required when used"
_SCHEMA: dict[str, tuple] = {
    "lattice.type": (str, "torus1d"),
    "lattice.n": (int, 3),
    "lattice.rows": (int, 2),
    "lattice.cols": (int, 2),
    "lattice.edges": (str, ""),
    "rates.a": (float, 1.0),
    "rates.b": (float, 3.0),
    "rates.c": (float, 1.0),
    "rates.d": (float, 0.0),
    "resem.r": (float, -1.0),  # < 0 means "derive from rates"
    "resem.s": (float, -1.0),
    "resem.m": (float, -1.0),
    "duality.alpha": (float, -1.0),  # < 0 means "derive from rates"
    "thinning.beta": (float, 0.0),
    "init.kind": (str, "deterministic"),
    "init.value": (float, 2.0),
    "sim.replicates": (int, 100000),
    "sim.master_seed": (int, 0),
    "sim.t_grid": (_floats, [0.25, 0.5, 1.0]),
    "sim.chunk": (int, 4096),
    "sim.count_cap": (int, DEFAULT_COUNT_CAP),
    "sde.h": (float, 1e-3),
    "experiment.phi_panel": (_floats, [0.3, 0.6]),
    "experiment.phi_site": (int, -1),  # -1: constant phi on all sites
    "experiment.phi0": (float, 0.4),
    "extinction.t_max": (float, 16.0),
    "extinction.h": (float, 2e-3),
    "extinction.replicates": (int, 0),  # 0: use sim.replicates
    "bounds.replicates": (int, 20000),
    "bounds.infinity_replicates": (int, 2000),
    "bounds.n_cap": (int, 50),
    "bounds.kmom_t": (_floats, [0.5, 1.0]),
    "bounds.kmom_rates_2": (_floats, [0.5, 1.0, 1.0, 0.5]),
    "bounds.explicit_t": (_floats, [0.1, 0.5, 1.0]),
    "bounds.explicit_rates_rpos": (_floats, [1.0, 1.0, 1.0, 0.0]),
    "bounds.explicit_rates_rzero": (_floats, [0.5, 0.0, 0.5, 1.0]),
    "bounds.subdu_t": (_floats, [0.25, 0.5, 1.0]),
    "bounds.subdu_phi": (_floats, [0.3, 0.6]),
}

_INIT_KINDS = ("deterministic", "poisson", "bernoulli")


def parse_config_text(text: str) -> dict:
    """Parse 'key = value' lines against the schema; unknown keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return values


@dataclass
class ExperimentConfig:
    """Typed view of one experiment configuration with derived objects."""

    lattice: Lattice
    rates: RateParams
    init_kind: str
    init_value: float
    replicates: int
    master_seed: int
    t_grid: list[float]
    chunk: int
    count_cap: int
    h: float
    phi_panel: list[float]
    phi_site: int
    phi0: float
    beta: float
    resem_r: float
    resem_s: float
    resem_m: float
    alpha_override: float
    ext_t_max: float
    ext_h: float
    ext_replicates: int
    bounds: dict
    raw: dict = field(default_factory=dict)

    def init_vector(self) -> np.ndarray:
        """Deterministic per-site value used by the 'deterministic' init kind."""
        if self.init_kind == "deterministic" and self.init_value != int(self.init_value):
            raise ConfigError("deterministic init.value must be an integer count")
        return np.full(self.lattice.n_sites, self.init_value)


def config_from_dict(values: dict) -> ExperimentConfig:
    """Apply defaults, build the lattice, and validate cross-field preconditions."""
    for key in values:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
    get = lambda key: values.get(key, _SCHEMA[key][1])

    kind = str(get("lattice.type")).lower().replace("_", "")
    if kind == "torus1d":
        spec = f"torus1d:{get('lattice.n')}"
    elif kind == "torus2d":
        spec = f"torus2d:{get('lattice.rows')}:{get('lattice.cols')}"
    elif kind == "complete":
        spec = f"complete:{get('lattice.n')}"
    elif kind == "custom":
        if not get("lattice.edges"):
            raise ConfigError("lattice.type=custom requires lattice.edges")
        spec = f"custom:{get('lattice.edges')}"
    else:
        raise ConfigError(f"unknown lattice.type {get('lattice.type')!r}")
    lattice = build_lattice(spec)
    report = validate_kernel(lattice)
    if not report.passed:
        raise ConfigError(f"lattice fails kernel validation: {report}")

    try:
        rates = RateParams(get("rates.a"), get("rates.b"), get("rates.c"), get("rates.d"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    init_kind = str(get("init.kind")).lower()
    if init_kind not in _INIT_KINDS:
        raise ConfigError(f"init.kind must be one of {_INIT_KINDS}")
    init_value = float(get("init.value"))
    if init_kind == "bernoulli" and not 0.0 <= init_value <= 1.0:
        raise ConfigError("bernoulli init.value must lie in [0, 1]")
    if init_value < 0:
        raise ConfigError("init.value must be >= 0")

    replicates = int(get("sim.replicates"))
    if replicates < 1:
        raise ConfigError("sim.replicates must be >= 1")
    t_grid = list(get("sim.t_grid"))
    if not t_grid or any(b < a for a, b in zip(t_grid, t_grid[1:])) or t_grid[0] < 0:
        raise ConfigError("sim.t_grid must be nondecreasing, starting at >= 0")
    h = float(get("sde.h"))
    if h <= 0:
        raise ConfigError("sde.h must be > 0")
    phi_panel = list(get("experiment.phi_panel"))
    if any(not 0.0 <= p <= 1.0 for p in phi_panel):
        raise ConfigError("experiment.phi_panel entries must lie in [0, 1]")
    phi_site = int(get("experiment.phi_site"))
    if phi_site >= lattice.n_sites:
        raise ConfigError("experiment.phi_site outside the lattice")
    beta = float(get("thinning.beta"))
    if beta < 0:
        raise ConfigError("thinning.beta must be >= 0")

    bounds = {
        "replicates": int(get("bounds.replicates")),
        "infinity_replicates": int(get("bounds.infinity_replicates")),
        "n_cap": int(get("bounds.n_cap")),
        "kmom_t": list(get("bounds.kmom_t")),
        "kmom_rates_2": list(get("bounds.kmom_rates_2")),
        "explicit_t": list(get("bounds.explicit_t")),
        "explicit_rates_rpos": list(get("bounds.explicit_rates_rpos")),
        "explicit_rates_rzero": list(get("bounds.explicit_rates_rzero")),
        "subdu_t": list(get("bounds.subdu_t")),
        "subdu_phi": list(get("bounds.subdu_phi")),
    }

    return ExperimentConfig(
        lattice=lattice,
        rates=rates,
        init_kind=init_kind,
        init_value=init_value,
        replicates=replicates,
        master_seed=int(get("sim.master_seed")),
        t_grid=t_grid,
        chunk=max(1, int(get("sim.chunk"))),
        count_cap=int(get("sim.count_cap")),
        h=h,
        phi_panel=phi_panel,
        phi_site=phi_site,
        phi0=float(get("experiment.phi0")),
        beta=beta,
        resem_r=float(get("resem.r")),
        resem_s=float(get("resem.s")),
        resem_m=float(get("resem.m")),
        alpha_override=float(get("duality.alpha")),
        ext_t_max=float(get("extinction.t_max")),
        ext_h=float(get("extinction.h")),
        ext_replicates=int(get("extinction.replicates")),
        bounds=bounds,
        raw=dict(values),
    )


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a config file (optional) and apply programmatic overrides."""
    values: dict = {}
    if path:
        with open(path) as fh:
            values = parse_config_text(fh.read())
    if overrides:
        for key, val in overrides.items():
            if key not in _SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            parser, _ = _SCHEMA[key]
            values[key] = parser(val) if isinstance(val, str) else val
    return config_from_dict(values)
