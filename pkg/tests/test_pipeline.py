import numpy as np
import pytest

from frictionest import config, pipeline
from frictionest.errors import ConfigError
from frictionest.friction import FrictionModel, FrictionParams


@pytest.fixture
def cfg():
    return config.load_config("demo_1dof")


def test_breakaway_estimates_near_truth(cfg):
    d = cfg.to_dict()
    d["estimation"]["breakaway"] = {"rate": 0.05, "threshold": 0.05, "duration": 30.0}
    d["friction"]["v_brk"] = 0.02
    cfg = config.ExperimentConfig.from_dict(d)
    v = pipeline.breakaway_estimates(cfg, cfg.build_model(), cfg.build_truth())
    assert v.shape == (1,)
    assert v[0] == pytest.approx(0.02, rel=0.5)


def test_select_friction_variants():
    p = FrictionParams([0.8, 0.9], [0.5, 0.4], [0.4, 0.3], [0.1, 0.1])
    models = {"stribeck": FrictionModel.from_params(p),
              "simplified": FrictionModel.from_params(p, ("simplified", "simplified"))}
    assert pipeline.select_friction(None, models) is None
    assert pipeline.select_friction("friction", models) is models["stribeck"]
    mixed = pipeline.select_friction("mixed", models, ("stribeck", "simplified"))
    np.testing.assert_allclose(mixed.pi_f[0], models["stribeck"].pi_f[0])
    assert mixed.pi_f[1, 0] == 0.0
    with pytest.raises(ConfigError):
        pipeline.select_friction("mixed", models)
    with pytest.raises(ConfigError):
        pipeline.select_friction("simplified", {"stribeck": models["stribeck"]})


def test_build_controller_kinds(cfg):
    model = cfg.build_model()
    gains = pipeline._gains_for_campaign(cfg).gains.build(model)
    models = {"stribeck": FrictionModel.from_params(cfg.build_truth())}
    assert pipeline.build_controller("pid+friction", model, model.params, gains, models).name == "pid+friction"
    assert pipeline.build_controller("adrc", model, model.params, gains, models).name == "adrc"


def test_evaluation_trajectories_are_seeded(cfg):
    a = pipeline.evaluation_trajectories(cfg)
    b = pipeline.evaluation_trajectories(cfg)
    assert [t for t, _ in a] == ["traj0", "traj1", "traj2"]
    for (_, x), (_, y) in zip(a, b):
        np.testing.assert_array_equal(x.coefficients(), y.coefficients())
    np.testing.assert_allclose(a[0][1].offset, [0.5])


def test_friction_rows_shape(cfg):
    traj, _ = pipeline.run_excitation(cfg)
    rows = pipeline.friction_rows(traj, 0.14, 0.01)
    assert rows.shape == (400, 1, 3)
