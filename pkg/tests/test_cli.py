import sys

import pyarrow.feather as feather
import pytest

from pogosim.cli import main

SIMPLE_YAML = """
seed: 3
simulation_time: 1.0
time_step: 0.01
save_data_period: 0.5
save_video_period: 0.5
arena_surface: 1.0e5
controller: run_and_tumble
data_filename: data.feather
frames_name: "frames/f{:010.4f}.png"
objects:
  robots:
    type: pogobot
    nb: 3
parameters: {}
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "simple.yaml"
    path.write_text(SIMPLE_YAML, encoding="utf-8")
    return path


def test_run_creates_data_and_frames(conf, tmp_path):
    assert main(["-c", str(conf), "-o", str(tmp_path), "-q"]) == 0
    table = feather.read_table(tmp_path / "data.feather")
    assert table.num_rows == 3 * 2
    frames = list((tmp_path / "frames").glob("*.png"))
    assert len(frames) == 2


def test_missing_config_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_nonexistent_config_file(tmp_path):
    assert main(["-c", str(tmp_path / "nope.yaml"), "-q"]) == 1


def test_invalid_config_reports_config_error(conf, tmp_path, caplog):
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulation_time: -5\ntime_step: 0.01\n", encoding="utf-8")
    assert main(["-c", str(bad), "-q"]) == 1


def test_override_robot_count(conf, tmp_path):
    out = tmp_path / "out"
    assert main(["-c", str(conf), "-o", str(out), "-q",
                 "objects.robots.nb=2"]) == 0
    table = feather.read_table(out / "data.feather")
    assert sorted(set(table.column("robot_id").to_pylist())) == [0, 1]


def test_controller_flag_overrides_config(conf, tmp_path):
    out = tmp_path / "out"
    assert main(["-c", str(conf), "-o", str(out), "-q",
                 "--controller", "hanabi"]) == 0
    table = feather.read_table(out / "data.feather")
    assert "rgb_colors_index" in table.column_names


def test_unknown_controller(conf, tmp_path):
    assert main(["-c", str(conf), "-o", str(tmp_path), "-q",
                 "--controller", "nope"]) == 1


def test_delete_old_files_honored(conf, tmp_path):
    stale = tmp_path / "frames"
    stale.mkdir()
    (stale / "f99999.png").write_bytes(b"old")
    conf2 = tmp_path / "del.yaml"
    conf2.write_text(SIMPLE_YAML + "delete_old_files: true\n", encoding="utf-8")
    assert main(["-c", str(conf2), "-o", str(tmp_path), "-q"]) == 0
    assert not (stale / "f99999.png").exists()


def test_module_invocation_matches_entry_point(conf, tmp_path):
    import subprocess

    proc = subprocess.run(
        [sys.executable, "-m", "pogosim.cli", "-c", str(conf), "-o", str(tmp_path), "-q"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "data.feather").exists()
