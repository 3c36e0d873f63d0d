# tests/unit/test_experiment_config.py

from pathlib import Path

import pytest

from config.experiment import load_experiment, parse_experiment
from core.check_registry import CHECK_NAMES
from core.exceptions import ConfigError

EXPERIMENTS = Path(__file__).resolve().parents[2] / "experiments"


def _raw(**overrides):
    raw = {
        "name": "tiny",
        "domain": {"kind": "disc", "radius": 1.0},
        "grid": {"h": 0.0625},
    }
    raw.update(overrides)
    return raw


@pytest.mark.parametrize("path", sorted(EXPERIMENTS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_experiments_load(path):
    config = load_experiment(path)
    assert config.name
    assert config.grid.h > 0
    config.domain.build()


def test_defaults():
    config = parse_experiment(_raw())
    assert config.checks == list(CHECK_NAMES)
    assert config.solver.p_schedule == [2, 4, 8, 16, 32, 64]
    assert config.epsilons == [0.04, 0.01, 0.0025]


def test_nonpositive_spacing_names_the_field():
    with pytest.raises(ConfigError) as exc:
        parse_experiment(_raw(grid={"h": 0.0}), source="bad.yaml")
    assert str(exc.value).startswith("bad.yaml: ")
    assert "grid.h" in str(exc.value)


def test_unknown_check():
    with pytest.raises(ConfigError) as exc:
        parse_experiment(_raw(checks=["residual", "no_such_check"]))
    assert "no_such_check" in str(exc.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_experiment(_raw(colour="blue"))


def test_disc_needs_radius():
    with pytest.raises(ConfigError) as exc:
        parse_experiment(_raw(domain={"kind": "disc"}))
    assert "radius" in str(exc.value)


def test_invalid_polygon_is_a_config_error():
    clockwise = [[0, 0], [0, 1], [1, 1], [1, 0]]
    with pytest.raises(ConfigError) as exc:
        parse_experiment(_raw(domain={"kind": "polygon", "vertices": clockwise}))
    assert "domain" in str(exc.value)


def test_decreasing_schedule_rejected():
    with pytest.raises(ConfigError):
        parse_experiment(_raw(solver={"p_schedule": [2, 8, 4]}))


def test_overrides_and_normalization():
    config = parse_experiment(
        _raw(epsilons=[0.01, 0.04]),
        seed=11,
        out="elsewhere",
        checks=["residual", "is_stadium_like", "residual"],
    )
    assert config.seed == 11
    assert config.output_dir == "elsewhere"
    assert config.checks == ["is_stadium_like", "residual"]
    assert config.epsilons == [0.04, 0.01]


def test_absolute_output_dir_kept(tmp_path):
    config = parse_experiment(_raw(), out=str(tmp_path))
    assert config.output_path() == tmp_path


def test_yaml_syntax_error_has_position(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: broken\ndomain: [unclosed\n")
    with pytest.raises(ConfigError) as exc:
        load_experiment(path)
    assert str(exc.value).startswith(f"{path}:")
    assert ":3:" in str(exc.value) or ":2:" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "absent.yaml")


def test_top_level_must_be_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_experiment(path)
