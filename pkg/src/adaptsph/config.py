"""Run configuration files.

Flat ``key = value`` lines grouped under optional ``[section]`` headers;
``#`` and ``;`` start comments.  Keys before the first header belong to
``[run]``.  Every key is typed and unknown keys are rejected::

    scenario = bar
    kernel = adaptive-cubic
    dp = 1e-3

    [viscosity]
    gamma1 = 1.0
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from pathlib import Path

from .adaptivity import AdaptivityParams
from .integrator import KERNELS, SimConfig
from .io import config_hash
from .scenarios import BUILDERS, Scenario
from .sph import BOUNDARY_STATES, ViscosityParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(sorted(options))}")
        return text
    return parse


SCHEMA = {
    "run": {
        "scenario": _choice(BUILDERS),
        "kernel": _choice(KERNELS),
        "dp": float,
        "dt": float,
        "t_end": float,
        "h_factor": float,
        "eps_xsph": float,
        "renormalize": _bool,
        "deterministic": _bool,
        "backend": _choice({"cython", "python"}),
        "boundary_state": _choice(set(BOUNDARY_STATES)),
    },
    "kernel": {
        "b": float,
        "tension_factor": float,
        "compression_a": float,
        "knot_floor": float,
        "knot_ceiling": float,
        "immediate_radius_factor": float,
        "fixed_knot": float,
    },
    "viscosity": {"gamma1": float, "gamma2": float, "eta": float},
    "output": {"directory": str, "snapshot_every": int, "knot_diagnostics": _bool},
    "scenario": {
        # geometry and loading overrides; which apply depends on the scenario
        "L": float, "B": float, "v0": float, "V_f": float,
        "r_in": float, "r_out": float, "speed": float, "gap": float,
        "n_interior": int, "rho_ratio": float, "perturbation": float,
    },
}


@dataclass
class RunSpec:
    scenario: str
    config: SimConfig
    scenario_args: dict = field(default_factory=dict)
    output_dir: str | None = None
    knot_diagnostics: bool = False
    source_hash: str = ""

    def build_scenario(self) -> Scenario:
        kwargs = dict(self.scenario_args)
        kwargs["dt"] = self.config.dt
        kwargs["t_end"] = self.config.t_end
        return BUILDERS[self.scenario](self.config.dp, **kwargs)


def parse_sections(text: str) -> dict[str, dict[str, tuple[object, int]]]:
    """Typed values per section, each paired with its line number."""
    out: dict[str, dict[str, tuple[object, int]]] = {s: {} for s in SCHEMA}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        try:
            out[section][key] = (SCHEMA[section][key](value), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
    return out


def _defaults(scenario: str, overrides: dict) -> Scenario:
    """Scenario built at its own defaults, used to fill dp, dt, t_end and viscosity."""
    builder = BUILDERS[scenario]
    dp = overrides.get("dp", inspect.signature(builder).parameters["dp"].default)
    kwargs = {k: v for k, v in overrides.items() if k != "dp"}
    return builder(dp, **kwargs)


def parse_config(text: str) -> RunSpec:
    sec = parse_sections(text)
    run = {k: v for k, (v, _) in sec["run"].items()}
    if "scenario" not in run:
        raise ConfigError("missing required key 'scenario'")
    name = run["scenario"]
    builder_params = inspect.signature(BUILDERS[name]).parameters
    scen_args = {}
    for key, (value, lineno) in sec["scenario"].items():
        if key not in builder_params:
            raise ConfigError(f"key {key!r} does not apply to scenario {name!r}", lineno)
        scen_args[key] = value

    try:
        ref = _defaults(name, {**scen_args, **({"dp": run["dp"]} if "dp" in run else {})})
        kern = {k: v for k, (v, _) in sec["kernel"].items()}
        fixed_knot = kern.pop("fixed_knot", 1.0)
        visc_kw = {k: v for k, (v, _) in sec["viscosity"].items()}
        base = ref.viscosity
        visc = ViscosityParams(visc_kw.get("gamma1", base.gamma1), visc_kw.get("gamma2", base.gamma2),
                               visc_kw.get("eta", base.eta))
        out = {k: v for k, (v, _) in sec["output"].items()}
        cfg = SimConfig(
            dp=ref.dp,
            dt=run.get("dt", ref.dt),
            t_end=run.get("t_end", ref.t_end),
            kernel=run.get("kernel", "adaptive-cubic"),
            adaptivity=AdaptivityParams(**kern),
            fixed_knot=fixed_knot,
            viscosity=visc,
            eps_xsph=run.get("eps_xsph", 0.5),
            output_every=out.get("snapshot_every", 1000),
            deterministic=run.get("deterministic", True),
            h_factor=run.get("h_factor", 1.5),
            renormalize=run.get("renormalize", True),
            backend=run.get("backend"),
            boundary_state=run.get("boundary_state", "evolving"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunSpec(name, cfg, scen_args, out.get("directory"), out.get("knot_diagnostics", False),
                   config_hash(text))


def load_config(path) -> RunSpec:
    return parse_config(Path(path).read_text(encoding="utf-8"))
