"""Experiment configuration: YAML parsing, validation, sweep and
optimization annotations, and the ``parameters:`` block exposed to
controllers.

All loading is pure: the functions here never touch global state and a
loaded :class:`SimConfig` is immutable by convention.
"""

from __future__ import annotations

import copy
import io
import logging
from dataclasses import dataclass, field
from typing import Any

import yaml

logger = logging.getLogger(__name__)

OBJECT_TYPES = frozenset(
    {"pogobot", "pogobject", "pogowall", "membrane", "passive_object", "static_light"}
)
GEOMETRIES = frozenset({"disk", "global", "polygon"})
LIGHT_MODES = frozenset({"static", "gradient"})
FORMATIONS = frozenset({"random", "disk"})
LIGHT_MAX = 32767

# Keys understood at the top level of a configuration file.  Anything else
# is kept verbatim (and warned about) for forward compatibility.
_KNOWN_TOP_KEYS = {
    "window_width", "window_height", "arena_file", "arena_surface",
    "arena_temperature", "seed", "simulation_time", "time_step",
    "save_data_period", "save_video_period", "data_filename",
    "console_filename", "frames_name", "initial_formation",
    "enable_data_logging", "enable_console_logging", "delete_old_files",
    "show_communication_channels", "show_communication_channels_above_all",
    "show_lateral_LEDs", "show_light_levels", "GUI", "GUI_speed_up",
    "objects", "parameters", "communication_ignore_occlusions",
    "controller", "random_tick_phase",
    "result_filename_format", "result_new_columns",
}

_KNOWN_OBJECT_KEYS = {
    "type", "nb", "geometry", "radius",
    "body_linear_damping", "body_angular_damping", "body_density",
    "body_friction", "body_restitution",
    "max_linear_speed", "max_angular_speed",
    "linear_noise_stddev", "angular_noise_stddev",
    "communication_radius", "msg_success_rate",
    "light_mode", "value",
    "photo_start_at", "photo_start_duration", "photo_start_value",
}

# Published defaults of the dynamic reception model coefficients.
DYNAMIC_DEFAULTS = {
    "alpha": 1.03215183,
    "beta": 0.00073859,
    "gamma": 3.14782227,
    "delta": 3.52543753,
    "zeta": 0.05720136,
    "theta": 0.00100000,
}


class ConfigError(ValueError):
    """Validation failure, carrying the dotted path of the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class CommModelParams:
    """Static success rate or the 7-coefficient dynamic loss model."""

    type: str = "static"
    rate: float = 1.0
    alpha: float = DYNAMIC_DEFAULTS["alpha"]
    beta: float = DYNAMIC_DEFAULTS["beta"]
    gamma: float = DYNAMIC_DEFAULTS["gamma"]
    delta: float = DYNAMIC_DEFAULTS["delta"]
    zeta: float = DYNAMIC_DEFAULTS["zeta"]
    theta: float = DYNAMIC_DEFAULTS["theta"]


@dataclass(frozen=True)
class ObjectSpec:
    """One object category from the ``objects:`` map."""

    type: str
    nb: int = 1
    geometry: str = "disk"
    radius: float = 26.5
    body_linear_damping: float = 0.3
    body_angular_damping: float = 0.3
    body_density: float = 10.0
    body_friction: float = 0.3
    body_restitution: float = 0.5
    max_linear_speed: float = 100.0
    max_angular_speed: float = 2.0
    linear_noise_stddev: float = 0.0
    angular_noise_stddev: float = 0.0
    communication_radius: float = 80.0
    msg_success_rate: CommModelParams = field(default_factory=CommModelParams)
    light_mode: str = "static"
    value: int = 0
    photo_start_at: float = -1.0
    photo_start_duration: float = 0.0
    photo_start_value: int = LIGHT_MAX


@dataclass(frozen=True)
class SweepAnnotation:
    """A ``batch_options`` node: dotted path + the options to sweep."""

    path: str
    options: tuple
    default_option: Any = None

    def resolved_default(self):
        return self.options[0] if self.default_option is None else self.default_option


@dataclass(frozen=True)
class OptimAnnotation:
    """An ``optimization_domain`` node under ``parameters:``."""

    path: str
    kind: str
    min: float | None = None
    max: float | None = None
    choices: tuple = ()
    init: Any = None


@dataclass(frozen=True)
class SimConfig:
    """Fully validated experiment description.

    ``tree`` keeps the canonical (defaults-filled, annotation-resolved)
    mapping used for serialization and metadata embedding.
    """

    window_width: int
    window_height: int
    arena_file: str | None
    arena_surface: float
    arena_temperature: float
    seed: int
    simulation_time: float
    time_step: float
    save_data_period: float
    save_video_period: float
    data_filename: str
    console_filename: str
    frames_name: str
    initial_formation: str
    enable_data_logging: bool
    enable_console_logging: bool
    delete_old_files: bool
    GUI_speed_up: float
    objects: dict[str, ObjectSpec]
    parameters: dict[str, Any]
    communication_ignore_occlusions: bool
    controller: str | None
    random_tick_phase: bool
    tree: dict = field(repr=False, compare=False, default_factory=dict)

    def to_yaml(self) -> str:
        """Canonical YAML form (defaults filled, keys sorted)."""
        buf = io.StringIO()
        yaml.safe_dump(self.tree, buf, sort_keys=True, default_flow_style=False)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# dotted-path helpers ("." separator, no escaping)

def get_path(tree: dict, path: str):
    node = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(path)
        node = node[part]
    return node


def set_path(tree: dict, path: str, value) -> None:
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


# ---------------------------------------------------------------------------
# scalar coercion

def _as_float(value, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a number, got boolean {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(path, f"expected a number, got {value!r}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# annotation extraction

def _is_sweep_node(node) -> bool:
    return isinstance(node, dict) and "batch_options" in node


def _is_optim_node(node) -> bool:
    return isinstance(node, dict) and "optimization_domain" in node


def extract_sweeps(config_tree: dict) -> list[SweepAnnotation]:
    """Every ``batch_options`` node in the tree, with its dotted path.

    Paths are returned in depth-first document order.
    """
    found: list[SweepAnnotation] = []

    def walk(node, path):
        if not isinstance(node, dict):
            return
        for key, child in node.items():
            child_path = f"{path}.{key}" if path else key
            if _is_sweep_node(child):
                options = child["batch_options"]
                if not isinstance(options, list) or not options:
                    raise ConfigError(child_path, "batch_options must be a non-empty list")
                found.append(SweepAnnotation(
                    path=child_path,
                    options=tuple(options),
                    default_option=child.get("default_option"),
                ))
            else:
                walk(child, child_path)

    walk(config_tree, "")
    return found


def apply_sweep_defaults(config_tree: dict) -> dict:
    """Copy of the tree with each sweep node replaced by its default option."""
    tree = copy.deepcopy(config_tree)
    for ann in extract_sweeps(tree):
        set_path(tree, ann.path, ann.resolved_default())
    return tree


def extract_optim_domains(config_tree: dict) -> list[OptimAnnotation]:
    """Every ``optimization_domain`` node; only allowed under ``parameters:``."""
    found: list[OptimAnnotation] = []

    def walk(node, path, under_parameters):
        if not isinstance(node, dict):
            return
        for key, child in node.items():
            child_path = f"{path}.{key}" if path else key
            if _is_optim_node(child):
                if not under_parameters:
                    raise ConfigError(
                        child_path,
                        "optimization_domain is only allowed under parameters",
                    )
                found.append(_parse_optim_domain(child["optimization_domain"], child_path))
            else:
                walk(child, child_path,
                     under_parameters or (path == "" and key == "parameters"))

    walk(config_tree, "", False)
    return found


def _parse_optim_domain(dom, path: str) -> OptimAnnotation:
    if not isinstance(dom, dict):
        raise ConfigError(path, "optimization_domain must be a mapping")
    kind = dom.get("type")
    if kind not in ("int", "float", "categorical"):
        raise ConfigError(path, f"optimization_domain type must be int/float/categorical, got {kind!r}")
    init = dom.get("init")
    if kind == "categorical":
        choices = dom.get("choices")
        if not isinstance(choices, list) or not choices:
            raise ConfigError(path, "categorical domain needs a non-empty choices list")
        if init is not None and init not in choices:
            raise ConfigError(path, f"init {init!r} not among choices")
        return OptimAnnotation(path=path, kind=kind, choices=tuple(choices), init=init)
    lo = _as_float(dom.get("min"), f"{path}.min")
    hi = _as_float(dom.get("max"), f"{path}.max")
    if not lo < hi:
        raise ConfigError(path, f"min must be < max, got [{lo}, {hi}]")
    if init is not None:
        v = _as_float(init, f"{path}.init")
        if not (lo <= v <= hi):
            raise ConfigError(path, f"init {init!r} outside [{lo}, {hi}]")
    return OptimAnnotation(path=path, kind=kind, min=lo, max=hi, init=init)


def apply_optim_defaults(config_tree: dict) -> dict:
    """Copy of the tree with each optimization node replaced by its init (or min/first choice)."""
    tree = copy.deepcopy(config_tree)
    for ann in extract_optim_domains(tree):
        if ann.init is not None:
            value = ann.init
        elif ann.kind == "categorical":
            value = ann.choices[0]
        else:
            value = ann.min if ann.kind == "float" else int(ann.min)
        set_path(tree, ann.path, value)
    return tree


# ---------------------------------------------------------------------------
# loading & validation

def _parse_comm_model(raw, path: str) -> CommModelParams:
    if raw is None:
        return CommModelParams()
    if not isinstance(raw, dict):
        raise ConfigError(path, "msg_success_rate must be a mapping")
    mtype = raw.get("type", "static")
    if mtype == "static":
        rate = _as_float(raw.get("rate", 1.0), f"{path}.rate")
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"{path}.rate", f"rate must be in [0,1], got {rate}")
        return CommModelParams(type="static", rate=rate)
    if mtype != "dynamic":
        raise ConfigError(f"{path}.type", f"unknown model type {mtype!r}")
    coeffs = {k: raw[k] for k in ("alpha", "beta", "gamma", "delta", "zeta", "theta") if k in raw}
    if (set(coeffs) == {"alpha", "beta", "gamma", "delta"}):
        raise ConfigError(
            path,
            "a 4-coefficient {alpha,beta,gamma,delta} dynamic model is ambiguous "
            "(it matches an older formula); the dynamic model takes 6 coefficients "
            "alpha,beta,gamma,delta,zeta,theta, or none to use the published defaults",
        )
    values = dict(DYNAMIC_DEFAULTS)
    for name, v in coeffs.items():
        values[name] = _as_float(v, f"{path}.{name}")
    if values["alpha"] <= 0:
        raise ConfigError(f"{path}.alpha", "alpha must be > 0")
    return CommModelParams(type="dynamic", **values)


def _parse_object(name: str, raw, path: str) -> ObjectSpec:
    if not isinstance(raw, dict):
        raise ConfigError(path, "object category must be a mapping")
    if "." in name:
        raise ConfigError(path, "category names must not contain '.'")
    otype = raw.get("type")
    if otype not in OBJECT_TYPES:
        raise ConfigError(f"{path}.type",
                          f"unknown object type {otype!r} (expected one of {sorted(OBJECT_TYPES)})")
    for key in raw:
        if key not in _KNOWN_OBJECT_KEYS:
            logger.warning("config: unknown key %s.%s ignored", path, key)

    defaults = ObjectSpec(type=otype)
    if otype == "static_light":
        geometry = raw.get("geometry", "global")
    elif otype == "pogowall":
        geometry = raw.get("geometry", "polygon")
    else:
        geometry = raw.get("geometry", "disk")
    if geometry not in GEOMETRIES:
        raise ConfigError(f"{path}.geometry", f"unknown geometry {geometry!r}")

    nb = _as_int(raw.get("nb", 1), f"{path}.nb")
    if nb < 1:
        raise ConfigError(f"{path}.nb", f"nb must be >= 1, got {nb}")
    radius = _as_float(raw.get("radius", defaults.radius), f"{path}.radius")
    if geometry == "disk" and radius <= 0:
        raise ConfigError(f"{path}.radius", f"radius must be > 0 for disk geometry, got {radius}")

    value = raw.get("value", 0)
    value = _as_int(value, f"{path}.value")
    if not 0 <= value <= LIGHT_MAX:
        raise ConfigError(f"{path}.value", f"light value must be in [0, {LIGHT_MAX}], got {value}")
    photo_start_value = _as_int(raw.get("photo_start_value", LIGHT_MAX), f"{path}.photo_start_value")
    if not 0 <= photo_start_value <= LIGHT_MAX:
        raise ConfigError(f"{path}.photo_start_value",
                          f"light value must be in [0, {LIGHT_MAX}], got {photo_start_value}")

    light_mode = raw.get("light_mode", "static")
    if light_mode not in LIGHT_MODES:
        raise ConfigError(f"{path}.light_mode", f"unknown light_mode {light_mode!r}")

    max_lin = _as_float(raw.get("max_linear_speed", defaults.max_linear_speed),
                        f"{path}.max_linear_speed")
    max_ang = _as_float(raw.get("max_angular_speed", defaults.max_angular_speed),
                        f"{path}.max_angular_speed")
    if max_lin < 0:
        raise ConfigError(f"{path}.max_linear_speed", "must be >= 0")
    if max_ang < 0:
        raise ConfigError(f"{path}.max_angular_speed", "must be >= 0")

    def fl(key):
        return _as_float(raw.get(key, getattr(defaults, key)), f"{path}.{key}")

    return ObjectSpec(
        type=otype,
        nb=nb,
        geometry=geometry,
        radius=radius,
        body_linear_damping=fl("body_linear_damping"),
        body_angular_damping=fl("body_angular_damping"),
        body_density=fl("body_density"),
        body_friction=fl("body_friction"),
        body_restitution=fl("body_restitution"),
        max_linear_speed=max_lin,
        max_angular_speed=max_ang,
        linear_noise_stddev=fl("linear_noise_stddev"),
        angular_noise_stddev=fl("angular_noise_stddev"),
        communication_radius=fl("communication_radius"),
        msg_success_rate=_parse_comm_model(raw.get("msg_success_rate"), f"{path}.msg_success_rate"),
        light_mode=light_mode,
        value=value,
        photo_start_at=fl("photo_start_at"),
        photo_start_duration=fl("photo_start_duration"),
        photo_start_value=photo_start_value,
    )


def _comm_model_tree(m: CommModelParams) -> dict:
    if m.type == "static":
        return {"type": "static", "rate": m.rate}
    return {"type": "dynamic", "alpha": m.alpha, "beta": m.beta, "gamma": m.gamma,
            "delta": m.delta, "zeta": m.zeta, "theta": m.theta}


def _object_tree(spec: ObjectSpec) -> dict:
    tree = {
        "type": spec.type,
        "nb": spec.nb,
        "geometry": spec.geometry,
    }
    if spec.type == "static_light":
        tree.update({
            "light_mode": spec.light_mode,
            "value": spec.value,
            "photo_start_at": spec.photo_start_at,
            "photo_start_duration": spec.photo_start_duration,
            "photo_start_value": spec.photo_start_value,
        })
        if spec.geometry == "disk":
            tree["radius"] = spec.radius
        return tree
    tree.update({
        "radius": spec.radius,
        "body_linear_damping": spec.body_linear_damping,
        "body_angular_damping": spec.body_angular_damping,
        "body_density": spec.body_density,
        "body_friction": spec.body_friction,
        "body_restitution": spec.body_restitution,
        "max_linear_speed": spec.max_linear_speed,
        "max_angular_speed": spec.max_angular_speed,
        "linear_noise_stddev": spec.linear_noise_stddev,
        "angular_noise_stddev": spec.angular_noise_stddev,
        "communication_radius": spec.communication_radius,
        "msg_success_rate": _comm_model_tree(spec.msg_success_rate),
    })
    return tree


def load_config_tree(tree: dict) -> SimConfig:
    """Validate an already-parsed (raw) configuration mapping."""
    if not isinstance(tree, dict):
        raise ConfigError("", "configuration must be a mapping")
    tree = apply_sweep_defaults(tree)
    tree = apply_optim_defaults(tree)

    for key in tree:
        if key not in _KNOWN_TOP_KEYS:
            logger.warning("config: unknown top-level key %r kept as-is", key)

    for req in ("simulation_time", "time_step", "arena_surface", "objects"):
        if req not in tree:
            raise ConfigError(req, "required key is missing")

    simulation_time = _as_float(tree["simulation_time"], "simulation_time")
    time_step = _as_float(tree["time_step"], "time_step")
    if time_step <= 0:
        raise ConfigError("time_step", f"must be > 0, got {time_step}")
    if simulation_time < 0:
        raise ConfigError("simulation_time", f"must be >= 0, got {simulation_time}")
    if simulation_time > 0 and simulation_time < time_step:
        raise ConfigError("simulation_time", "must be >= time_step")
    arena_surface = _as_float(tree["arena_surface"], "arena_surface")
    if arena_surface <= 0:
        raise ConfigError("arena_surface", f"must be > 0, got {arena_surface}")

    save_data_period = _as_float(tree.get("save_data_period", -1.0), "save_data_period")
    if save_data_period != -1.0 and save_data_period < time_step:
        raise ConfigError("save_data_period", "must be -1 or >= time_step")
    save_video_period = _as_float(tree.get("save_video_period", -1.0), "save_video_period")

    initial_formation = tree.get("initial_formation", "random")
    if initial_formation not in FORMATIONS:
        raise ConfigError("initial_formation", f"unknown formation {initial_formation!r}")

    raw_objects = tree["objects"]
    if not isinstance(raw_objects, dict) or not raw_objects:
        raise ConfigError("objects", "no object categories")
    objects = {
        name: _parse_object(name, raw, f"objects.{name}")
        for name, raw in raw_objects.items()
    }

    parameters = tree.get("parameters") or {}
    if not isinstance(parameters, dict):
        raise ConfigError("parameters", "must be a mapping")
    for pname, pval in parameters.items():
        if not isinstance(pval, (int, float, bool, str)):
            raise ConfigError(f"parameters.{pname}",
                              f"parameter values must be scalars, got {type(pval).__name__}")

    controller = tree.get("controller")
    if controller is not None:
        controller = _as_str(controller, "controller")

    cfg = SimConfig(
        window_width=_as_int(tree.get("window_width", 600), "window_width"),
        window_height=_as_int(tree.get("window_height", 600), "window_height"),
        arena_file=tree.get("arena_file"),
        arena_surface=arena_surface,
        arena_temperature=_as_float(tree.get("arena_temperature", 25.0), "arena_temperature"),
        seed=_as_int(tree.get("seed", 0), "seed"),
        simulation_time=simulation_time,
        time_step=time_step,
        save_data_period=save_data_period,
        save_video_period=save_video_period,
        data_filename=str(tree.get("data_filename", "frames/data.feather")),
        console_filename=str(tree.get("console_filename", "frames/console.txt")),
        frames_name=str(tree.get("frames_name", "frames/f{:010.4f}.png")),
        initial_formation=initial_formation,
        enable_data_logging=_as_bool(tree.get("enable_data_logging", True), "enable_data_logging"),
        enable_console_logging=_as_bool(tree.get("enable_console_logging", False),
                                        "enable_console_logging"),
        delete_old_files=_as_bool(tree.get("delete_old_files", False), "delete_old_files"),
        GUI_speed_up=_as_float(tree.get("GUI_speed_up", 1.0), "GUI_speed_up"),
        objects=objects,
        parameters=dict(parameters),
        communication_ignore_occlusions=_as_bool(
            tree.get("communication_ignore_occlusions", False),
            "communication_ignore_occlusions"),
        controller=controller,
        random_tick_phase=_as_bool(tree.get("random_tick_phase", False), "random_tick_phase"),
    )

    canonical = {
        "window_width": cfg.window_width,
        "window_height": cfg.window_height,
        "arena_file": cfg.arena_file,
        "arena_surface": cfg.arena_surface,
        "arena_temperature": cfg.arena_temperature,
        "seed": cfg.seed,
        "simulation_time": cfg.simulation_time,
        "time_step": cfg.time_step,
        "save_data_period": cfg.save_data_period,
        "save_video_period": cfg.save_video_period,
        "data_filename": cfg.data_filename,
        "console_filename": cfg.console_filename,
        "frames_name": cfg.frames_name,
        "initial_formation": cfg.initial_formation,
        "enable_data_logging": cfg.enable_data_logging,
        "enable_console_logging": cfg.enable_console_logging,
        "delete_old_files": cfg.delete_old_files,
        "GUI_speed_up": cfg.GUI_speed_up,
        "communication_ignore_occlusions": cfg.communication_ignore_occlusions,
        "random_tick_phase": cfg.random_tick_phase,
        "objects": {name: _object_tree(spec) for name, spec in objects.items()},
        "parameters": dict(parameters),
    }
    if controller is not None:
        canonical["controller"] = controller
    object.__setattr__(cfg, "tree", canonical)
    return cfg


def load_config(yaml_text: str) -> SimConfig:
    """Parse and validate a YAML configuration document."""
    try:
        tree = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError("", f"YAML parse error{where}: {exc}") from exc
    if tree is None:
        raise ConfigError("", "empty configuration")
    return load_config_tree(tree)


def load_config_file(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def resolve_parameter(config: SimConfig, name: str):
    """Scalar lookup in the ``parameters:`` block, typing preserved."""
    try:
        return config.parameters[name]
    except KeyError:
        available = ", ".join(sorted(config.parameters)) or "(none)"
        raise KeyError(f"unknown parameter {name!r}; available: {available}") from None
