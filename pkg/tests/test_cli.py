"""End-to-end checks of the command line front end."""

import numpy as np
import pytest

from safespeed.cli import main
from safespeed.geometry import write_pgm


@pytest.fixture(scope="module")
def corridor_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_world")
    assert main(["make-world", "corridor", "--out", str(out)]) == 0
    return out


def test_make_world_writes_files(corridor_files, capsys):
    assert (corridor_files / "scenario.yaml").is_file()
    assert (corridor_files / "map.pgm").is_file()


def test_run_clean_exit_and_outputs(corridor_files, tmp_path, capsys):
    code = main([
        "run", "--scenario", str(corridor_files / "scenario.yaml"),
        "--out", str(tmp_path), "--duration", "0.5",
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.err == ""
    assert "corridor" in captured.out
    for name in ("run.csv", "heatmap.csv", "path_speed.csv"):
        assert (tmp_path / name).is_file()


def test_run_missing_scenario_is_a_usage_error(tmp_path, capsys):
    code = main(["run", "--scenario", str(tmp_path / "ghost.yaml"), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 2
    assert "does not exist" in captured.err


def test_run_rejects_bad_worker_count(corridor_files, tmp_path, capsys):
    code = main([
        "run", "--scenario", str(corridor_files / "scenario.yaml"),
        "--out", str(tmp_path), "--workers", "0",
    ])
    assert code == 2
    assert "workers" in capsys.readouterr().err


def test_run_rejects_bad_threshold_override(corridor_files, tmp_path, capsys):
    code = main([
        "run", "--scenario", str(corridor_files / "scenario.yaml"),
        "--out", str(tmp_path), "--p0", "2.0",
    ])
    assert code == 2
    assert "p0" in capsys.readouterr().err


def test_levels_override_widens_heatmap(corridor_files, tmp_path, capsys):
    code = main([
        "run", "--scenario", str(corridor_files / "scenario.yaml"),
        "--out", str(tmp_path), "--duration", "0.3", "--levels", "21",
    ])
    assert code == 0
    header = (tmp_path / "heatmap.csv").read_text().splitlines()[0]
    assert len(header.split(",")) == 1 + 21


def test_heatmap_off_skips_file(corridor_files, tmp_path, capsys):
    code = main([
        "run", "--scenario", str(corridor_files / "scenario.yaml"),
        "--out", str(tmp_path), "--duration", "0.3", "--heatmap", "off",
    ])
    assert code == 0
    assert not (tmp_path / "heatmap.csv").exists()
    assert (tmp_path / "run.csv").is_file()


def test_collision_exit_code(tmp_path, capsys):
    cells = np.zeros((30, 30), dtype=bool)
    cells[:, 12] = True
    write_pgm(tmp_path / "map.pgm", cells)
    (tmp_path / "scenario.yaml").write_text(
        "grid:\n"
        "  file: map.pgm\n"
        "  resolution: 0.5\n"
        "reference:\n"
        "  waypoints: [[1, 7.5], [14, 7.5]]\n"
        "start: [5.5, 7.5, 0.0]\n"
        "localization: {sigma_x: 0, sigma_y: 0, sigma_yaw: 0, particles: 5}\n"
        "v_max: 2.0\n"
        "speed_levels: 11\n"
        "duration: 0.5\n"
    )
    code = main([
        "run", "--scenario", str(tmp_path / "scenario.yaml"), "--out", str(tmp_path / "out"),
    ])
    captured = capsys.readouterr()
    assert code == 3
    assert "collision at t=0.10" in captured.err
    assert (tmp_path / "out" / "run.csv").read_text().splitlines()[-2] == "# collided,true"
