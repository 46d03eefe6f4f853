import pytest
import yaml

from pogosim.config import (
    ConfigError,
    apply_sweep_defaults,
    extract_optim_domains,
    extract_sweeps,
    get_path,
    load_config,
    resolve_parameter,
)

FULL_EXAMPLE = """
---
window_width: 600       # In pixels
window_height: 600      # In pixels

arena_file: arenas/disk.csv
arena_surface: 1.0e6    # In mm^2

delete_old_files: true
enable_data_logging: true
data_filename: "frames/data.feather"
enable_console_logging: true
console_filename: "frames/console.txt"
save_data_period: 1.0
save_video_period: 1.0
frames_name: "frames/f{:010.4f}.png"

seed: 0

show_communication_channels: false
show_communication_channels_above_all: false
show_lateral_LEDs: false
show_light_levels: false
GUI: true

simulation_time: 50.0    # In s
time_step: 0.01          # In s
GUI_speed_up: 10.0

initial_formation: random

objects:
    global_light:
        type: static_light
        light_mode: static
        geometry: global
        value: 200

    robots:
        type: pogobot
        nb: 100
        geometry: disk
        radius: 26.5

        body_linear_damping: 0.3
        body_angular_damping: 0.3
        body_density: 10.0
        body_friction: 0.3
        body_restitution: 0.5

        max_linear_speed: 100.0
        max_angular_speed: 2.0

        communication_radius: 80.0
        msg_success_rate:
            type: dynamic
            alpha: 1.03215183
            beta:  0.00073859
            gamma: 3.14782227
            delta: 3.52543753
            zeta:  0.05720136
            theta: 0.00100000

parameters:
    run_duration_min: 1000
    run_duration_max: 5000
    tumble_duration_min: 100
    tumble_duration_max: 1100
    enable_backward_dir: true
"""

BATCH_EXAMPLE = """
simulation_time: 10.0
time_step: 0.01
arena_surface: 1.0e6
arena_file:
    batch_options: ["arenas/disk.csv", "arenas/arena8.csv"]
    default_option: arenas/disk.csv
objects:
    robots:
        type: pogobot
        nb:
            batch_options: [100, 200]
        geometry: disk
        radius: 26.5
result_filename_format: "result_{objects.robots.nb}.feather"
result_new_columns: ["arena_file"]
"""

OPTIM_EXAMPLE = """
simulation_time: 10.0
time_step: 0.01
arena_surface: 1.0e6
objects:
    robots:
        type: pogobot
        nb: 5
parameters:
    run_duration_min: 0
    run_duration_max:
        optimization_domain: {type: int, min: 10, max: 1000, init: 50}
    tumble_duration_min: 100
    tumble_duration_max: 1100
"""


def test_full_example_loads():
    cfg = load_config(FULL_EXAMPLE)
    assert cfg.simulation_time == 50.0
    assert cfg.time_step == 0.01
    assert cfg.objects["robots"].nb == 100
    assert cfg.objects["robots"].radius == 26.5
    assert cfg.objects["global_light"].value == 200
    assert cfg.objects["robots"].msg_success_rate.type == "dynamic"
    assert cfg.objects["robots"].msg_success_rate.alpha == pytest.approx(1.03215183)


def test_arena_surface_accepts_scientific_string():
    cfg = load_config(FULL_EXAMPLE.replace("arena_surface: 1.0e6", "arena_surface: '1.0e5'"))
    assert cfg.arena_surface == 1.0e5


def test_empty_objects_rejected():
    text = "simulation_time: 1.0\ntime_step: 0.01\narena_surface: 1.0e6\nobjects: {}\n"
    with pytest.raises(ConfigError, match="no object categories"):
        load_config(text)


def test_light_value_out_of_range():
    text = """
simulation_time: 1.0
time_step: 0.01
arena_surface: 1.0e6
objects:
    light:
        type: static_light
        value: 40000
"""
    with pytest.raises(ConfigError, match="32767"):
        load_config(text)


def test_four_coefficient_dynamic_model_rejected():
    text = """
simulation_time: 1.0
time_step: 0.01
arena_surface: 1.0e6
objects:
    robots:
        type: pogobot
        msg_success_rate:
            type: dynamic
            alpha: 0.000001
            beta: 3.0708
            gamma: 2.3234
            delta: 1.1897
"""
    with pytest.raises(ConfigError, match="ambiguous"):
        load_config(text)


def test_bad_yaml_reports_line():
    with pytest.raises(ConfigError, match="line"):
        load_config("a:\n  - 1\n b: 2\n")


def test_roundtrip_idempotent():
    cfg = load_config(FULL_EXAMPLE)
    cfg2 = load_config(cfg.to_yaml())
    assert cfg2.tree == cfg.tree
    assert cfg2.to_yaml() == cfg.to_yaml()


def test_extract_sweeps_paper_example():
    tree = yaml.safe_load(BATCH_EXAMPLE)
    anns = extract_sweeps(tree)
    assert len(anns) == 2
    by_path = {a.path: a for a in anns}
    assert by_path["arena_file"].options == ("arenas/disk.csv", "arenas/arena8.csv")
    assert by_path["arena_file"].default_option == "arenas/disk.csv"
    assert by_path["objects.robots.nb"].options == (100, 200)
    assert by_path["objects.robots.nb"].resolved_default() == 100


def test_extract_sweeps_empty():
    assert extract_sweeps(yaml.safe_load(OPTIM_EXAMPLE)) == []


def test_sweep_substitution_removes_all_annotations():
    tree = yaml.safe_load(BATCH_EXAMPLE)
    resolved = apply_sweep_defaults(tree)
    assert extract_sweeps(resolved) == []
    assert get_path(resolved, "objects.robots.nb") == 100
    assert get_path(resolved, "arena_file") == "arenas/disk.csv"
    # every annotation path resolves in the original tree
    for ann in extract_sweeps(tree):
        get_path(tree, ann.path)


def test_sweep_annotated_config_loads_directly():
    cfg = load_config(BATCH_EXAMPLE)
    assert cfg.objects["robots"].nb == 100
    assert cfg.arena_file == "arenas/disk.csv"


def test_empty_batch_options_rejected():
    tree = yaml.safe_load(BATCH_EXAMPLE)
    tree["arena_file"] = {"batch_options": []}
    with pytest.raises(ConfigError, match="non-empty"):
        extract_sweeps(tree)


def test_extract_optim_domains_paper_example():
    tree = yaml.safe_load(OPTIM_EXAMPLE)
    anns = extract_optim_domains(tree)
    assert len(anns) == 1
    ann = anns[0]
    assert ann.path == "parameters.run_duration_max"
    assert ann.kind == "int"
    assert (ann.min, ann.max) == (10, 1000)
    assert ann.init == 50


def test_extract_optim_domains_empty():
    tree = yaml.safe_load(BATCH_EXAMPLE)
    assert extract_optim_domains(tree) == []


def test_optim_domain_float_roundtrip():
    tree = yaml.safe_load(OPTIM_EXAMPLE)
    tree["parameters"]["gain"] = {"optimization_domain": {"type": "float", "min": 0.0, "max": 1.0}}
    anns = {a.path: a for a in extract_optim_domains(tree)}
    ann = anns["parameters.gain"]
    assert ann.kind == "float"
    assert (ann.min, ann.max) == (0.0, 1.0)


def test_optim_annotated_config_loads_with_init():
    cfg = load_config(OPTIM_EXAMPLE)
    assert cfg.parameters["run_duration_max"] == 50


def test_resolve_parameter():
    cfg = load_config(FULL_EXAMPLE)
    assert resolve_parameter(cfg, "run_duration_min") == 1000
    assert resolve_parameter(cfg, "enable_backward_dir") is True
    with pytest.raises(KeyError, match="run_duration_min"):
        resolve_parameter(cfg, "foo")


def test_unknown_top_level_key_warns_not_fails(caplog):
    text = FULL_EXAMPLE + "\narena_weirdness: 12\n"
    with caplog.at_level("WARNING"):
        cfg = load_config(text)
    assert cfg.simulation_time == 50.0
    assert any("arena_weirdness" in r.message for r in caplog.records)
