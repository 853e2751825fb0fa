"""Flat ``key = value`` run configuration with dotted section names.

Grammar: one assignment per line, ``#`` starts a comment, blank lines are
ignored, keys are dotted identifiers, values are bare strings.  Unknown keys
are rejected; every error names the offending field.

Example::

    mesh.kind = split-triangles
    mesh.n = 8
    model.name = fokker_planck_log
    tensor.lx = 1
    tensor.ly = 10
    potential.g = 1
    initial.function = t1
    time.t_final = 0.25
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config", "load_config"]

MESH_KINDS = ("cartesian", "split-triangles", "kershaw-like", "file")
MODELS = ("fokker_planck_log", "pme_a", "pme_b", "pme_c", "pme_drift", "custom")
SCHEMES = ("nonlinear", "linear", "quasilinear")
FUNCTIONS = ("t1", "t2_1d", "t2_2d", "t3", "constant", "gibbs")
PROBLEMS = ("density", "drain_barrier")
SIDES = ("left", "right", "bottom", "top", "all")


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str, line: int | None = None):
        where = f" (line {line})" if line else ""
        super().__init__(f"{field_path}: {message}{where}")
        self.field = field_path
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    problem: str = "density"
    mesh_kind: str = "split-triangles"
    mesh_n: int = 4
    mesh_distortion: float = 0.0
    mesh_file: str = ""
    model_name: str = "fokker_planck_log"
    model_params: tuple[tuple[str, float], ...] = ()
    tensor_lx: float = 1.0
    tensor_ly: float = 1.0
    potential_g: float = 0.0
    scheme: str = "nonlinear"
    bc_type: str = "no-flux"
    bc_sides: tuple[str, ...] = ("all",)
    bc_function: str = "constant"
    bc_value: float = 0.0
    initial_function: str = "constant"
    initial_value: float = 1.0
    exact: str = "none"
    t_final: float = 1.0
    dt_init: float = 1e-3
    dt_max: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    newton_epsilon: float = 1e-10
    lumping: float = 0.1
    output_dir: str = "."
    output_report: bool = True
    output_summary: bool = True
    output_entropy: bool = False
    output_stride: int = 1
    output_times: tuple[float, ...] = ()

    def __post_init__(self):
        _validate(self)


# key -> (attribute, kind)
_KEYS = {
    "problem.kind": ("problem", "str"),
    "mesh.kind": ("mesh_kind", "str"),
    "mesh.n": ("mesh_n", "int"),
    "mesh.distortion": ("mesh_distortion", "float"),
    "mesh.file": ("mesh_file", "str"),
    "model.name": ("model_name", "str"),
    "tensor.lx": ("tensor_lx", "float"),
    "tensor.ly": ("tensor_ly", "float"),
    "potential.g": ("potential_g", "float"),
    "scheme": ("scheme", "str"),
    "bc.type": ("bc_type", "str"),
    "bc.sides": ("bc_sides", "strs"),
    "bc.function": ("bc_function", "str"),
    "bc.value": ("bc_value", "float"),
    "initial.function": ("initial_function", "str"),
    "initial.value": ("initial_value", "float"),
    "exact.function": ("exact", "str"),
    "time.t_final": ("t_final", "float"),
    "time.dt_init": ("dt_init", "float"),
    "time.dt_max": ("dt_max", "float"),
    "newton.tol": ("newton_tol", "float"),
    "newton.max_iter": ("newton_max_iter", "int"),
    "newton.epsilon": ("newton_epsilon", "float"),
    "lumping.fraction": ("lumping", "float"),
    "output.dir": ("output_dir", "str"),
    "output.report": ("output_report", "bool"),
    "output.summary": ("output_summary", "bool"),
    "output.entropy": ("output_entropy", "bool"),
    "output.stride": ("output_stride", "int"),
    "output.times": ("output_times", "floats"),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEYS.items()}


def _convert(key: str, kind: str, raw: str, line: int | None):
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind == "strs":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "floats":
            return tuple(float(s) for s in raw.split(",") if s.strip())
    except ValueError:
        raise ConfigError(key, f"cannot read {raw!r} as {kind}", line) from None
    raise AssertionError(kind)


def _check(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(key, message)


def _validate(c: RunConfig) -> None:
    _check(c.problem in PROBLEMS, "problem.kind", f"must be one of {PROBLEMS}")
    _check(c.mesh_kind in MESH_KINDS, "mesh.kind", f"must be one of {MESH_KINDS}")
    _check(c.mesh_n >= 1, "mesh.n", "must be >= 1")
    _check(0 <= c.mesh_distortion < 1, "mesh.distortion", "must lie in [0, 1)")
    _check(c.mesh_kind != "file" or bool(c.mesh_file), "mesh.file", "required when mesh.kind = file")
    _check(c.model_name in MODELS, "model.name", f"must be one of {MODELS}")
    _check(c.tensor_lx > 0, "tensor.lx", "must be positive")
    _check(c.tensor_ly > 0, "tensor.ly", "must be positive")
    _check(c.scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}")
    _check(
        c.scheme != "quasilinear" or c.model_name == "pme_drift",
        "scheme",
        "the quasilinear scheme requires model.name = pme_drift",
    )
    _check(
        c.scheme != "linear" or c.model_name == "fokker_planck_log",
        "scheme",
        "the linear scheme requires model.name = fokker_planck_log",
    )
    _check(c.bc_type in ("no-flux", "dirichlet"), "bc.type", "must be no-flux or dirichlet")
    for s in c.bc_sides:
        _check(s in SIDES, "bc.sides", f"unknown side {s!r}")
    _check(c.bc_function in FUNCTIONS[:-1], "bc.function", f"must be one of {FUNCTIONS[:-1]}")
    _check(c.initial_function in FUNCTIONS, "initial.function", f"must be one of {FUNCTIONS}")
    _check(c.exact in FUNCTIONS[:4] + ("none",), "exact.function", "must be an analytical solution or none")
    _check(c.initial_value >= 0, "initial.value", "must be nonnegative")
    _check(c.t_final >= 0, "time.t_final", "must be nonnegative")
    _check(c.dt_init > 0, "time.dt_init", "must be positive")
    _check(c.dt_max >= c.dt_init, "time.dt_max", "must be >= time.dt_init")
    _check(c.newton_tol > 0, "newton.tol", "must be positive")
    _check(c.newton_max_iter >= 1, "newton.max_iter", "must be >= 1")
    _check(0 < c.newton_epsilon < 1, "newton.epsilon", "must lie in (0, 1)")
    _check(0 < c.lumping < 1, "lumping.fraction", "must lie in (0, 1)")
    _check(c.output_stride >= 1, "output.stride", "must be >= 1")
    _check(c.exact == "none" or c.output_stride == 1, "output.stride", "error norms need every step (stride 1)")


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    params: dict[str, float] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("<line>", "expected key = value", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(key, "duplicate key", lineno)
        seen.add(key)
        if key.startswith("model.params."):
            name = key[len("model.params."):]
            params[name] = _convert(key, "float", val, lineno)
            continue
        if key not in _KEYS:
            raise ConfigError(key, "unknown key", lineno)
        attr, kind = _KEYS[key]
        values[attr] = _convert(key, kind, val, lineno)
    values["model_params"] = tuple(sorted(params.items()))
    return RunConfig(**values)


def serialize_config(c: RunConfig) -> str:
    """Normalized text form: every key, in a fixed order, with canonical values."""
    lines = []
    for f in fields(c):
        v = getattr(c, f.name)
        if f.name == "model_params":
            lines += [f"model.params.{k} = {_fmt(x)}" for k, x in v]
            continue
        key = _ATTR_TO_KEY[f.name]
        if isinstance(v, tuple):
            text = ",".join(_fmt(x) for x in v)
        else:
            text = _fmt(v)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_config(text)
    if cfg.mesh_kind == "file" and not Path(cfg.mesh_file).is_absolute():
        cfg = replace(cfg, mesh_file=str(path.parent / cfg.mesh_file))
    return cfg
