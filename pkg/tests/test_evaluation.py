import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frictionest import control, evaluation, plotting, simloop
from frictionest.dynamics import ManipulatorModel
from frictionest.errors import DomainError
from frictionest.friction import FrictionModel, FrictionParams
from frictionest.trajectory import sample_random_fourier
from oracles import linear_quartiles


class FakeTrace:
    def __init__(self, q, q_des, qd_des=None, meta=None):
        self.q = np.asarray(q, float)
        self.q_des = np.asarray(q_des, float)
        self.qd_des = np.zeros_like(self.q) if qd_des is None else np.asarray(qd_des, float)
        self.meta = meta or {}

    @property
    def n_joints(self):
        return self.q.shape[1]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60))
def test_quartiles_match_linear_interpolation_oracle(xs):
    stats = evaluation.ErrorStats.from_samples([np.array(xs)])
    q25, q50, q75 = linear_quartiles(xs)
    assert stats.q25[0] == pytest.approx(q25, abs=1e-12)
    assert stats.median[0] == pytest.approx(q50, abs=1e-12)
    assert stats.q75[0] == pytest.approx(q75, abs=1e-12)
    assert stats.min[0] <= stats.q25[0] <= stats.median[0] <= stats.q75[0] <= stats.max[0]
    assert stats.iqr[0] >= 0


def test_tracking_stats_known_values():
    tr = FakeTrace([[1.0], [2.0], [3.0], [5.0]], [[0.0]] * 4)
    s = evaluation.tracking_error_stats(tr)
    assert s.median[0] == 2.5 and s.q25[0] == 1.75 and s.q75[0] == 3.5
    assert s.mean[0] == 2.75 and s.rms[0] == pytest.approx(np.sqrt(39 / 4))
    assert s.count[0] == 4


def test_low_velocity_filter_and_empty_subset():
    tr = FakeTrace([[0.1, 0.2], [0.3, 0.4]], [[0, 0], [0, 0]], qd_des=[[0.005, 0.5], [0.02, 0.5]])
    mask = evaluation.low_velocity_filter(tr, 0.01)
    np.testing.assert_array_equal(mask, [[True, False], [False, False]])
    s = evaluation.tracking_error_stats(tr, mask)
    assert s.count.tolist() == [1, 0]
    assert np.isnan(s.median[1]) and s.absent[1]
    assert s.to_dict()["median"][1] is None
    with pytest.raises(DomainError):
        evaluation.low_velocity_filter(tr, 0.0)
    with pytest.raises(DomainError):
        evaluation.tracking_error_stats(FakeTrace(np.zeros((0, 1)), np.zeros((0, 1))))


def test_pooled_stats_concatenate_runs():
    a = FakeTrace([[1.0], [2.0]], [[0.0], [0.0]])
    b = FakeTrace([[3.0], [4.0]], [[0.0], [0.0]])
    s = evaluation.pooled_error_stats([a, b])
    assert s.median[0] == 2.5 and s.count[0] == 4
    with pytest.raises(DomainError):
        evaluation.pooled_error_stats([])


def test_settling_time():
    t = np.arange(10.0)
    x = np.array([0, 5, 9, 11, 9.6, 10.2, 10.1, 9.9, 10, 10], float)
    assert evaluation.settling_time(t, x, 10.0, tol=0.05) == 4.0
    assert evaluation.settling_time(t, x, 10.0, tol=0.4) == 2.0
    assert evaluation.settling_time(t, x, 20.0) == np.inf
    assert evaluation.settling_time(t, np.full(10, 3.0)) == 0.0


@pytest.fixture(scope="module")
def adaptive_trace():
    model = ManipulatorModel.one_dof()
    truth = FrictionParams(0.8, 0.5, 0.4, 0.1)
    gains = control.Gains.from_bandwidth([0.5], 10.0, [20.0, 20.0, 20.0])
    fm = FrictionModel(np.zeros((1, 3)), truth.v_st, truth.v_coul)
    ctrl = control.AdaptiveController(model, model.params, gains, fm, hold_compensation=True)
    traj = sample_random_fourier(1, 3, 2 * np.pi * 0.5, 0.2, 0, duration=3.0, offset=0.5)
    tr = simloop.run_closed_loop(model, truth, ctrl, traj, simloop.SimConfig(duration=3.0), trajectory_id="x")
    return model, truth, gains, tr


def test_lyapunov_series_definition(adaptive_trace):
    model, truth, gains, tr = adaptive_trace
    summary = evaluation.lyapunov_series(tr, model, gains, truth.vector())
    k = 700
    err = tr.pi_f[k] - truth.vector()
    expect = (0.5 * model.params[1] * tr.s[k, 0] ** 2 + 0.5 * np.sum(err ** 2 / gains.gamma_f)
              + 0.5 * tr.eps[k, 0] ** 2 / gains.gamma_e[0])
    assert summary.series[k] == pytest.approx(expect, rel=1e-12)
    assert summary.series[-1] < summary.series[0]
    assert summary.relative_increment < 1e-3
    d = summary.to_dict()
    assert d["max_value"] == summary.max_value


def test_lyapunov_needs_estimator_streams():
    model = ManipulatorModel.one_dof()
    gains = control.Gains.from_bandwidth([0.5])
    tr = simloop.run_closed_loop(model, None, control.NominalController(model, model.params, gains),
                                 sample_random_fourier(1, 2, 1.0, 0.1, 0, duration=0.1),
                                 simloop.SimConfig(duration=0.1))
    with pytest.raises(DomainError):
        evaluation.lyapunov_series(tr, model, gains, np.zeros((1, 3)))


def test_disturbance_comparison_checks_pairing():
    meta = {"trajectory": "a", "seed": 1}

    class T:
        def __init__(self, z3, meta):
            self.t = np.arange(4.0)
            self.eso = np.zeros((4, 1, 3))
            self.eso[:, 0, 2] = z3
            self.meta = meta

        def __len__(self):
            return 4

    c = evaluation.disturbance_comparison(T(0.1, meta), T(-1.0, meta))
    assert c.ratio == pytest.approx(0.1) and not c.degenerate
    c = evaluation.disturbance_comparison(T(0.0, meta), T(0.0, meta))
    assert c.degenerate and c.ratio == 1.0
    with pytest.raises(DomainError):
        evaluation.disturbance_comparison(T(0.1, meta), T(1.0, {"trajectory": "b", "seed": 1}))


def test_evaluate_trace_report(adaptive_trace):
    model, truth, gains, tr = adaptive_trace
    rep = evaluation.evaluate_trace(tr, 0.01, model, gains, truth.vector())
    d = rep.to_dict()
    assert d["controller"] == "adaptive" and d["trajectory"] == "x"
    assert d["lyapunov"]["max_value"] > 0
    assert len(d["terminal_pi_f"][0]) == 3
    assert rep.trace_digest == evaluation.trace_digest(tr)


def _svg_texts(blob):
    root = ET.fromstring(blob)
    return ["".join(el.itertext()) for el in root.iter() if el.tag.endswith("text")]


def test_error_box_svg_parses_and_labels_medians():
    a = evaluation.ErrorStats.from_samples([np.array([0.1, 0.2, 0.3]), np.array([])])
    b = evaluation.ErrorStats.from_samples([np.array([0.01, 0.02, 0.04]), np.array([0.5])])
    svg = plotting.render_error_boxes([("pd", a), ("pd+friction", b)], "errors")
    texts = _svg_texts(svg)
    assert plotting.fmt(0.2) in texts and plotting.fmt(0.02) in texts
    assert any("no samples" in t for t in texts)
    assert svg == plotting.render_error_boxes([("pd", a), ("pd+friction", b)], "errors")


def test_figures_are_deterministic(adaptive_trace):
    model, truth, gains, tr = adaptive_trace
    a = plotting.render_convergence(tr.t, tr.pi_f, truth.vector())
    assert a == plotting.render_convergence(tr.t, tr.pi_f, truth.vector())
    ET.fromstring(a)
    V = evaluation.lyapunov_series(tr, model, gains, truth.vector()).series
    ET.fromstring(plotting.render_lyapunov(tr.t, V))
    ET.fromstring(plotting.render_cond_history([50.0, 20.0, 10.0]))
    ET.fromstring(plotting.render_z3(tr.t, np.zeros(len(tr)), np.ones(len(tr))))
    xy = np.stack([np.cos(np.linspace(0, 6, 50)), np.sin(np.linspace(0, 6, 50))], -1)
    ET.fromstring(plotting.render_cartesian_paths(xy, [("pd", xy * 1.01)]))
