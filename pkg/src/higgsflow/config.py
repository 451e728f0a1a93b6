"""Strict JSON scenario configuration."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bundle import ExampleSpec, get_example
from .errors import ValidationError
from .flow import FlowConfig
from .lie import parse_group
from .surface import LatticeSurface


class ConfigError(ValidationError):
    """Malformed scenario; the message starts with the offending field path."""


TOP_KEYS = {"surface", "example", "flow", "group", "initial_metric", "seed", "outputs",
            "relative_target", "residual_samples"}
REQUIRED_TOP = {"surface", "example", "outputs"}
SURFACE_KEYS = {"N", "L"}
INITIAL_KEYS = {"kind", "amplitude", "modes"}
OUTPUT_KEYS = {"trace_path", "report_path", "plotdata_path", "figure_path", "sidecar_path"}
REQUIRED_OUTPUTS = {"trace_path", "report_path", "plotdata_path"}
EXAMPLE_KEYS = {"name", "rank", "flux", "higgs_real", "higgs_imag", "expected_verdict",
                "expected_destabilizer"}
INT_FLOW = {"max_steps", "grow_after", "increment_nodes"}


@dataclass(frozen=True)
class InitialMetric:
    kind: str = "identity"
    amplitude: float = 0.3
    modes: int = 1


@dataclass(frozen=True)
class Outputs:
    trace_path: Path
    report_path: Path
    plotdata_path: Path
    figure_path: Path
    sidecar_path: Path


@dataclass(frozen=True)
class ScenarioConfig:
    surface: LatticeSurface
    example: ExampleSpec
    flow: FlowConfig
    group: object
    initial_metric: InitialMetric
    seed: int
    outputs: Outputs
    relative_target: Optional[float] = None
    residual_samples: int = 20
    raw: dict = field(default_factory=dict, compare=False)


def _keys(obj, allowed, path, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}: unknown key")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ConfigError(f"{path}.{missing[0]}: required key missing")


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _num(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _wrap(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _example(obj):
    if isinstance(obj, str):
        return _wrap("example", get_example, obj)
    _keys(obj, EXAMPLE_KEYS, "example", required=EXAMPLE_KEYS - {"higgs_imag", "expected_destabilizer"})
    return _wrap("example", ExampleSpec.from_dict, obj)


def _flow(obj):
    _keys(obj, FlowConfig.field_names(), "flow")
    kw = {}
    for k, v in obj.items():
        p = f"flow.{k}"
        if k == "diverge_floor" and v is None:
            kw[k] = None
        else:
            kw[k] = _int(v, p) if k in INT_FLOW else _num(v, p)
    return _wrap("flow", FlowConfig, **kw)


def _outputs(obj, base):
    _keys(obj, OUTPUT_KEYS, "outputs", required=REQUIRED_OUTPUTS)
    paths = {}
    for k, v in obj.items():
        if not isinstance(v, str) or not v:
            raise ConfigError(f"outputs.{k}: expected a nonempty path string")
        p = Path(v)
        paths[k] = p if p.is_absolute() else base / p
    report = paths["report_path"]
    trace = paths["trace_path"]
    paths.setdefault("figure_path", report.with_suffix(".png"))
    paths.setdefault("sidecar_path", trace.with_suffix(".meta.json"))
    return Outputs(**paths)


def parse_config(data, base_dir="."):
    """Validate a decoded scenario dict; relative output paths resolve against ``base_dir``."""
    _keys(data, TOP_KEYS, "config", required=REQUIRED_TOP)
    surf = data["surface"]
    _keys(surf, SURFACE_KEYS, "surface", required={"N"})
    n = _int(surf["N"], "surface.N")
    length = _num(surf.get("L", 1.0), "surface.L")
    surface = _wrap("surface.N" if n < 4 else "surface", LatticeSurface, n, length)

    example = _example(data["example"])
    flow = _flow(data.get("flow", {}))

    group_label = data.get("group", f"GL({example.rank})")
    if not isinstance(group_label, str):
        raise ConfigError(f"group: expected a string like 'SL(2)', got {group_label!r}")
    group = _wrap("group", parse_group, group_label)
    if group.m != example.rank:
        raise ConfigError(f"group: {group.label} does not match example rank {example.rank}")
    if group.kind == "SL" and sum(example.flux) != 0:
        raise ConfigError("group: SL needs total flux 0 (trivial determinant)")

    init = data.get("initial_metric", {"kind": "identity"})
    _keys(init, INITIAL_KEYS, "initial_metric", required={"kind"})
    if init["kind"] not in ("identity", "random"):
        raise ConfigError(f"initial_metric.kind: expected 'identity' or 'random', got {init['kind']!r}")
    initial = InitialMetric(kind=init["kind"],
                            amplitude=_num(init.get("amplitude", 0.3), "initial_metric.amplitude"),
                            modes=_int(init.get("modes", 1), "initial_metric.modes"))
    if initial.amplitude <= 0 or initial.modes < 1:
        raise ConfigError("initial_metric: amplitude must be positive and modes >= 1")

    seed = _int(data.get("seed", 0), "seed")
    rel = data.get("relative_target")
    if rel is not None:
        rel = _num(rel, "relative_target")
        if not 0 < rel < 1:
            raise ConfigError("relative_target: must lie in (0, 1)")
        if "deviation_target" in data.get("flow", {}):
            raise ConfigError("relative_target: conflicts with flow.deviation_target")
    samples = _int(data.get("residual_samples", 20), "residual_samples")
    if samples < 2:
        raise ConfigError("residual_samples: must be >= 2")
    outputs = _outputs(data["outputs"], Path(base_dir))
    return ScenarioConfig(surface=surface, example=example, flow=flow, group=group,
                          initial_metric=initial, seed=seed, outputs=outputs,
                          relative_target=rel, residual_samples=samples, raw=data)


def load_config(path, out_dir=None):
    """Read and validate a scenario file.

    Relative output paths resolve against ``out_dir`` if given, otherwise
    against the directory holding the config.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data, base_dir=out_dir if out_dir is not None else path.parent)
