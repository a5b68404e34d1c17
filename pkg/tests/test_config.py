import numpy as np
import pytest

from frictionest import config
from frictionest.errors import ConfigError


def test_bundled_configs_load_and_validate():
    names = config.bundled_configs()
    assert {"demo_1dof", "demo_2dof"} <= set(names)
    for name in names:
        cfg = config.load_config(name)
        assert cfg.build_model().n_joints in (1, 2)
    cfg = config.load_config("demo_2dof")
    assert cfg.circle is not None and cfg.build_truth().n_joints == 2


def test_round_trip_through_dict():
    cfg = config.load_config("demo_1dof")
    again = config.ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert cfg.with_seed(5).seed == 5 and cfg.seed == 0


@pytest.mark.parametrize("data,match", [
    ({"bogus": 1}, "unknown top-level"),
    ({"model": {"kind": "one_dof", "mass": 1.0}}, "unknown key"),
    ({"model": {"kind": "scara"}}, "kind"),
    ({"friction": {"f_brk": 0.1, "f_c": 0.5}}, "f_brk"),
    ({"excitation": {"regressor": "x"}}, "regressor"),
    ({"estimation": {"models": ["lugre"]}}, "models"),
    ({"evaluation": {"controllers": ["lqr"]}}, "controller"),
    ({"evaluation": {"threshold": 0}}, "threshold"),
    ({"sim": {"plant_dt": 3e-4}}, "multiple"),
    ({"circle": {"radius": 0.1}}, "two_link"),
    ({"seed": "abc"}, "seed"),
    ([1, 2], "mapping"),
])
def test_invalid_configs_rejected(data, match):
    with pytest.raises(ConfigError, match=match):
        config.ExperimentConfig.from_dict(data)


def test_parse_controller():
    assert config.parse_controller("pd") == ("pd", None)
    assert config.parse_controller("adrc+friction") == ("adrc", "friction")
    with pytest.raises(ConfigError):
        config.parse_controller("pd+lugre")


def test_gains_auto_needs_rows():
    cfg = config.load_config("demo_1dof")
    model = cfg.build_model()
    with pytest.raises(ConfigError):
        cfg.gains.build(model)
    rows = np.random.default_rng(0).normal(size=(100, 1, 3))
    g = cfg.gains.build(model, rows)
    np.testing.assert_allclose(g.gamma_f, 3.0 * g.kd[:, None] / np.mean(rows ** 2, axis=0))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        config.load_config(str(tmp_path / "absent.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [\n")
    with pytest.raises(ConfigError):
        config.load_config(str(bad))
