"""Run configuration: strict TOML parsing, validation with line-numbered
diagnostics, and a deterministic serializer whose output reparses to the
identical configuration (defaults are materialized on write).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .grids import PolarGrid, build_polar_grid
from .operators import ProblemParams
from .precond import PRECONDITIONER_KINDS, PreconditionerSpec
from .riemannian import StepPolicy
from .solver import INITIAL_KINDS, StageSpec


@dataclass(frozen=True)
class GridConfig:
    n_r: int = 64
    n_theta: int = 128
    radius: float = 8.0


@dataclass(frozen=True)
class ProblemConfig:
    omega: float = 0.0
    eta: float = 0.0
    potential: str = "harmonic"


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "gaussian"
    m: int = 0
    seed: int = 0
    amplitude: float = 0.1


@dataclass(frozen=True)
class StageConfig:
    precond: str = "P2"
    shift_a: float = 0.0
    sigma0: float = 1e-3
    inverse_tol: float = 1e-12
    inverse_max_iter: int = 10000
    policy: str = "backtracking"
    tau: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_halvings: int = 40
    max_iters: int = 1000
    stop_residual: float | None = None
    stop_energy_delta: float | None = None

    def to_stage_spec(self) -> StageSpec:
        spec = PreconditionerSpec(kind=self.precond, shift_a=self.shift_a,
                                  sigma0=self.sigma0,
                                  inverse_tol=self.inverse_tol,
                                  inverse_max_iter=self.inverse_max_iter)
        if self.policy == "fixed":
            policy = StepPolicy.fixed(self.tau)
        elif self.policy == "backtracking":
            policy = StepPolicy.backtracking(self.tau, self.shrink,
                                             self.armijo_c, self.max_halvings)
        elif self.policy == "exact_1d":
            policy = StepPolicy.exact_1d(self.tau)
        else:
            raise ConfigurationError(f"unknown policy {self.policy!r}")
        return StageSpec(precond=spec, policy=policy, max_iters=self.max_iters,
                         stop_residual=self.stop_residual,
                         stop_energy_delta=self.stop_energy_delta)


@dataclass(frozen=True)
class OutputsConfig:
    directory: str = "out"
    snapshot_every: int = 0
    emit_csv: bool = True
    emit_field: bool = True


@dataclass(frozen=True)
class SpectrumConfig:
    enabled: bool = False
    k: int = 5
    preconditioners: tuple = ("P4",)
    sigma0: tuple = (1e-3,)


@dataclass(frozen=True)
class RatesConfig:
    max_iters: int = 30000
    target_error: float = 1e-14
    perturbation_h1: float = 2e-2


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    grid: GridConfig = field(default_factory=GridConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    stages: tuple = ()
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)

    def build_grid(self) -> PolarGrid:
        return build_polar_grid(self.grid.n_r, self.grid.n_theta,
                                self.grid.radius)

    def build_params(self) -> ProblemParams:
        return ProblemParams(omega=self.problem.omega, eta=self.problem.eta,
                             potential=self.problem.potential)

    def build_stages(self) -> list[StageSpec]:
        return [s.to_stage_spec() for s in self.stages]


# ----------------------------------------------------------------------
# validation schema: key -> (python types accepted, range predicate or None)

def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit_open(x):
    return 0 < x < 1


_SCALAR = {
    "name": (str, None),
    "grid.n_r": (int, lambda x: x >= 4),
    "grid.n_theta": (int, lambda x: x >= 16 and x % 2 == 0),
    "grid.radius": ((int, float), _pos),
    "problem.omega": ((int, float), _nonneg),
    "problem.eta": ((int, float), _nonneg),
    "problem.potential": (str, lambda x: x == "harmonic"),
    "initial.kind": (str, lambda x: x in INITIAL_KINDS),
    "initial.m": (int, None),
    "initial.seed": (int, _nonneg),
    "initial.amplitude": ((int, float), _nonneg),
    "stages.precond": (str, lambda x: x in PRECONDITIONER_KINDS),
    "stages.shift_a": ((int, float), _nonneg),
    "stages.sigma0": ((int, float), _pos),
    "stages.inverse_tol": ((int, float), _unit_open),
    "stages.inverse_max_iter": (int, _pos),
    "stages.policy": (str, lambda x: x in ("fixed", "backtracking", "exact_1d")),
    "stages.tau": ((int, float), _pos),
    "stages.shrink": ((int, float), _unit_open),
    "stages.armijo_c": ((int, float), _unit_open),
    "stages.max_halvings": (int, _pos),
    "stages.max_iters": (int, _nonneg),
    "stages.stop_residual": ((int, float), _pos),
    "stages.stop_energy_delta": ((int, float), _pos),
    "outputs.directory": (str, None),
    "outputs.snapshot_every": (int, _nonneg),
    "outputs.emit_csv": (bool, None),
    "outputs.emit_field": (bool, None),
    "spectrum.enabled": (bool, None),
    "spectrum.k": (int, lambda x: x >= 3),
    "spectrum.preconditioners": (list, None),
    "spectrum.sigma0": (list, None),
    "rates.max_iters": (int, _pos),
    "rates.target_error": ((int, float), _pos),
    "rates.perturbation_h1": ((int, float), _pos),
}

_TABLES = ("grid", "problem", "initial", "outputs", "spectrum", "rates")


def _line_of(text: str, key: str) -> int:
    """Best-effort line number of a key or table header in the raw text."""
    token = key.split(".")[-1]
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if stripped.strip().startswith(token) or f"[{token}]" in stripped \
                or f"[[{token}]]" in stripped:
            return i
    return 0


def _check_scalar(path: str, value, text: str, errors: list) -> None:
    spec = _SCALAR.get(path)
    if spec is None:
        errors.append(f"line {_line_of(text, path)}: unknown key '{path}'")
        return
    types, pred = spec
    if types is bool:
        ok = isinstance(value, bool)
    elif isinstance(value, bool):
        ok = False  # bools are ints in python; keep them out of numeric slots
    else:
        ok = isinstance(value, types)
    if not ok:
        errors.append(f"line {_line_of(text, path)}: key '{path}' has wrong "
                      f"type {type(value).__name__}")
        return
    if pred is not None and not isinstance(value, (list, tuple)) \
            and not pred(value):
        errors.append(f"line {_line_of(text, path)}: key '{path}' value "
                      f"{value!r} is out of range")


def parse_config_text(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"TOML syntax error: {exc}") from exc

    errors: list[str] = []
    known_top = set(_TABLES) | {"name", "stages"}
    for key, val in data.items():
        if key not in known_top:
            errors.append(f"line {_line_of(text, key)}: unknown key '{key}'")
        elif key == "name":
            _check_scalar("name", val, text, errors)
        elif key == "stages":
            if not isinstance(val, list):
                errors.append(f"line {_line_of(text, key)}: 'stages' must be "
                              "an array of tables")
                continue
            for entry in val:
                for k2, v2 in entry.items():
                    _check_scalar(f"stages.{k2}", v2, text, errors)
        else:
            if not isinstance(val, dict):
                errors.append(f"line {_line_of(text, key)}: '{key}' must be a table")
                continue
            for k2, v2 in val.items():
                _check_scalar(f"{key}.{k2}", v2, text, errors)

    # element-level checks for the two list-valued spectrum keys
    spectrum = data.get("spectrum", {})
    for kind in spectrum.get("preconditioners", []):
        if kind not in PRECONDITIONER_KINDS:
            errors.append(f"line {_line_of(text, 'preconditioners')}: unknown "
                          f"preconditioner '{kind}'")
    for s0 in spectrum.get("sigma0", []):
        if isinstance(s0, bool) or not isinstance(s0, (int, float)) or not s0 > 0:
            errors.append(f"line {_line_of(text, 'sigma0')}: spectrum.sigma0 "
                          f"entries must be positive numbers, got {s0!r}")

    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))

    def sub(cls, table: dict):
        kwargs = {}
        for f in fields(cls):
            if f.name in table:
                v = table[f.name]
                if isinstance(v, list):
                    v = tuple(v)
                elif f.type in ("float", "float | None") and isinstance(v, int):
                    v = float(v)
                kwargs[f.name] = v
        return cls(**kwargs)

    stages = tuple(sub(StageConfig, entry) for entry in data.get("stages", []))
    cfg = RunConfig(
        name=data.get("name", "run"),
        grid=sub(GridConfig, data.get("grid", {})),
        problem=sub(ProblemConfig, data.get("problem", {})),
        initial=sub(InitialConfig, data.get("initial", {})),
        stages=stages,
        outputs=sub(OutputsConfig, data.get("outputs", {})),
        spectrum=sub(SpectrumConfig, data.get("spectrum", {})),
        rates=sub(RatesConfig, data.get("rates", {})),
    )
    return cfg


def parse_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


def serialize_config(cfg: RunConfig) -> str:
    """Deterministic TOML with all defaults materialized."""
    out = [f"name = {_toml_value(cfg.name)}"]

    def table(header: str, obj) -> None:
        out.append("")
        out.append(header)
        for f in fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue  # disabled optional threshold: omitted on purpose
            out.append(f"{f.name} = {_toml_value(v)}")

    table("[grid]", cfg.grid)
    table("[problem]", cfg.problem)
    table("[initial]", cfg.initial)
    for stage in cfg.stages:
        table("[[stages]]", stage)
    table("[outputs]", cfg.outputs)
    table("[spectrum]", cfg.spectrum)
    table("[rates]", cfg.rates)
    return "\n".join(out) + "\n"
