"""Flat ``dotted.key = value`` run configuration.

Example::

    grid.dims = 16 16 16
    grid.domain = box
    group = SU2
    bc = neumann
    mode = zds_recovered
    initial.kind = smooth
    initial.seed = 3
    stepper.t_end = 0.05

Lines starting with ``#`` are comments.  Unknown keys, bad values and
cross-field conflicts are all collected and reported together.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

__all__ = ["ConfigError", "RunConfig", "parse_config", "emit_config", "config_hash", "SCHEMA"]


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


INITIAL_KINDS = ("zero", "pure_gauge", "u1_mode", "ha_sample", "smooth", "checkpoint")
OBSERVABLES = ("energy", "a_action", "sup_curvature", "small_time", "wilson", "residuals",
               "epsilon", "oracle")


@dataclass(frozen=True)
class RunConfig:
    grid_dims: tuple = (8, 8, 8)
    grid_h: float | None = None
    grid_domain: str = "box"
    group: str = "SU2"
    bc: str = "neumann"
    mode: str = "zds"
    initial_kind: str = "zero"
    initial_seed: int = 0
    initial_amplitude: float = 1.0
    initial_a: float = 0.5
    initial_kmax: int = 1
    initial_wave: tuple = (1, 0, 0)
    initial_path: str = ""
    stepper_dt_init: float | None = None
    stepper_cfl: float = 0.1
    stepper_t_end: float = 0.1
    stepper_energy_backtrack: bool = True
    stepper_reproject_every: int = 16
    observables_list: tuple = ("energy",)
    observables_a: float = 0.5
    observables_eps: tuple = ()
    observables_loops: str = ""
    observables_t_first: float | None = None
    observables_save_dt: float | None = None
    oracle_tol: float = 1e-6
    output_dir: str = "ymflow_out"
    output_checkpoint_every: int = 0
    output_series_format: str = "csv"

    @property
    def h(self) -> float:
        if self.grid_h is not None:
            return self.grid_h
        n = self.grid_dims[0]
        return 1.0 / n if self.grid_domain == "torus" else 1.0 / (n - 1)


# key -> (attribute, kind)
SCHEMA = {
    "grid.dims": ("grid_dims", "ints3"),
    "grid.h": ("grid_h", "optfloat"),
    "grid.domain": ("grid_domain", ("box", "torus")),
    "group": ("group", ("U1", "SU2")),
    "bc": ("bc", ("neumann", "dirichlet", "periodic")),
    "mode": ("mode", ("direct", "zds", "zds_recovered")),
    "initial.kind": ("initial_kind", INITIAL_KINDS),
    "initial.seed": ("initial_seed", "int"),
    "initial.amplitude": ("initial_amplitude", "float"),
    "initial.a": ("initial_a", "float"),
    "initial.kmax": ("initial_kmax", "int"),
    "initial.wave": ("initial_wave", "ints3"),
    "initial.path": ("initial_path", "str"),
    "stepper.dt_init": ("stepper_dt_init", "optfloat"),
    "stepper.cfl": ("stepper_cfl", "float"),
    "stepper.t_end": ("stepper_t_end", "float"),
    "stepper.energy_backtrack": ("stepper_energy_backtrack", "bool"),
    "stepper.reproject_every": ("stepper_reproject_every", "int"),
    "observables.list": ("observables_list", "names"),
    "observables.a": ("observables_a", "float"),
    "observables.eps": ("observables_eps", "floats"),
    "observables.loops": ("observables_loops", "str"),
    "observables.t_first": ("observables_t_first", "optfloat"),
    "observables.save_dt": ("observables_save_dt", "optfloat"),
    "oracle.tol": ("oracle_tol", "float"),
    "output.dir": ("output_dir", "str"),
    "output.checkpoint_every": ("output_checkpoint_every", "int"),
    "output.series_format": ("output_series_format", ("csv",)),
}


def _convert(kind, raw: str):
    if isinstance(kind, tuple):
        for choice in kind:
            if raw.lower() == choice.lower():
                return choice
        raise ValueError(f"expected one of {', '.join(kind)}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "optfloat":
        return None if raw.lower() in ("", "none") else float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind == "ints3":
        vals = tuple(int(v) for v in raw.split())
        if len(vals) != 3:
            raise ValueError("expected three integers")
        return vals
    if kind == "floats":
        return tuple(float(v) for v in raw.split())
    if kind == "names":
        return tuple(raw.split())
    return raw


def _format(kind, value) -> str:
    if value is None:
        return "none"
    if kind in ("ints3", "floats", "names"):
        return " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if kind in ("float", "optfloat"):
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _validate(cfg: RunConfig) -> list[str]:
    err = []
    if any(n < 4 for n in cfg.grid_dims):
        err.append("grid.dims: every axis needs at least 4 nodes")
    if cfg.grid_h is not None and not cfg.grid_h > 0:
        err.append("grid.h: spacing must be positive")
    if (cfg.grid_domain == "torus") != (cfg.bc == "periodic"):
        err.append(f"bc = {cfg.bc} is incompatible with grid.domain = {cfg.grid_domain}")
    if not 0 < cfg.stepper_cfl <= 0.25:
        err.append("stepper.cfl: must lie in (0, 0.25]")
    if cfg.stepper_t_end < 0:
        err.append("stepper.t_end: must be non-negative")
    if cfg.stepper_dt_init is not None and cfg.stepper_dt_init <= 0:
        err.append("stepper.dt_init: must be positive")
    if cfg.stepper_reproject_every < 1:
        err.append("stepper.reproject_every: must be >= 1")
    if cfg.output_checkpoint_every < 0:
        err.append("output.checkpoint_every: must be >= 0")
    if cfg.initial_amplitude < 0:
        err.append("initial.amplitude: must be non-negative")
    if cfg.initial_kind == "u1_mode" and cfg.group != "U1":
        err.append(f"initial.kind = u1_mode requires group = U1 (got group = {cfg.group})")
    if cfg.initial_kind == "ha_sample":
        if not 0.5 <= cfg.initial_a <= 1.0:
            err.append("initial.a: H_a sampling needs a in [1/2, 1]")
        if cfg.mode == "direct":
            err.append("mode = direct is for smooth data only; initial.kind = ha_sample "
                       "needs mode = zds or zds_recovered")
    if cfg.initial_kind == "checkpoint" and not cfg.initial_path:
        err.append("initial.path: required when initial.kind = checkpoint")
    if not 0.5 <= cfg.observables_a < 1.0:
        err.append("observables.a: a-action needs 1/2 <= a < 1")
    for name in cfg.observables_list:
        if name not in OBSERVABLES:
            err.append(f"observables.list: unknown observable {name!r}")
    if "oracle" in cfg.observables_list and cfg.group != "U1":
        err.append(f"observables.list: oracle comparison requires group = U1 (got {cfg.group})")
    if ("oracle" in cfg.observables_list and cfg.mode == "direct"
            and cfg.grid_domain != "torus"):
        err.append("observables.list: direct-flow oracle requires grid.domain = torus")
    if "epsilon" in cfg.observables_list and cfg.mode == "direct":
        err.append("observables.list: epsilon family needs mode = zds or zds_recovered")
    for e in cfg.observables_eps:
        if not 0 < e <= cfg.stepper_t_end:
            err.append(f"observables.eps: {e} outside (0, t_end]")
    if cfg.observables_t_first is not None and cfg.observables_t_first <= 0:
        err.append("observables.t_first: must be positive")
    if cfg.observables_save_dt is not None and cfg.observables_save_dt <= 0:
        err.append("observables.save_dt: must be positive")
    if cfg.oracle_tol <= 0:
        err.append("oracle.tol: must be positive")
    return err


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every violation."""
    values, errors, seen = {}, [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            errors.append(f"{key}: unknown key (line {lineno})")
            continue
        if key in seen:
            errors.append(f"{key}: given twice (line {lineno})")
            continue
        seen.add(key)
        attr, kind = SCHEMA[key]
        try:
            values[attr] = _convert(kind, raw)
        except ValueError as exc:
            errors.append(f"{key}: {exc} (got {raw!r})")
    cfg = RunConfig(**values)
    errors += _validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def emit_config(cfg: RunConfig, exclude=()) -> str:
    lines = []
    for key, (attr, kind) in SCHEMA.items():
        if key in exclude:
            continue
        lines.append(f"{key} = {_format(kind, getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything but the end time (which resume may extend)."""
    return hashlib.sha256(emit_config(cfg, exclude=("stepper.t_end",)).encode()).hexdigest()[:16]


def with_t_end(cfg: RunConfig, t_end: float) -> RunConfig:
    return replace(cfg, stepper_t_end=float(t_end))
