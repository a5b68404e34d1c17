"""Experiment stages built from an :class:`~frictionest.config.ExperimentConfig`.

Each stage is a pure function of the configuration and its inputs; the CLI
only adds file handling on top.
"""

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import control, dynamics, evaluation, simloop
from .config import parse_controller
from .errors import ConfigError
from .excitation import optimize_excitation
from .friction import (SIMPLIFIED, STRIBECK, FrictionModel, FrictionParams, estimate_breakaway,
                       friction_regressor)
from .trajectory import circle_path, sample_random_fourier, two_link_fk


def run_excitation(cfg):
    model, truth = cfg.build_model(), cfg.build_truth()
    problem = cfg.excitation.build(model, truth, cfg.seed)
    return optimize_excitation(problem)


def nominal_pi_hat(cfg, model):
    """Rigid-body estimate handed to controllers, with configured mismatch."""
    return simloop.inject_mismatch(model.params, cfg.sim.mismatch_pi, cfg.seed)


def nominal_v_brk(cfg, truth):
    """Breakaway velocity the controllers assume (truth plus configured mismatch)."""
    return simloop.inject_mismatch(truth.v_brk, cfg.sim.mismatch_vbrk, cfg.seed + 1)


def friction_rows(traj, v_st, v_coul, dt=0.01):
    """``Y_f`` at the trajectory velocity over one period, shape ``(K, n, 3)``."""
    t = np.arange(0.0, min(traj.period, traj.duration), dt)
    return friction_regressor(traj.evaluate(t)[1], v_st, v_coul)


def breakaway_estimates(cfg, model, truth):
    """Per-joint breakaway velocity from simulated torque ramps.

    Each joint is ramped on its own as a gravity-free single joint with the
    joint's nominal inertia, the simulated analogue of a gravity-compensated
    ramp test.
    """
    spec = cfg.estimation.breakaway
    J = control.nominal_inertia(model)
    out = []
    for j in range(model.n_joints):
        single = dynamics.ManipulatorModel.one_dof(mass=1.0, length=1.0, com=1e-9,
                                                   inertia=J[j], gravity=0.0)
        joint_truth = FrictionParams(truth.f_brk[j], truth.f_c[j], truth.f_vis[j], truth.v_brk[j])
        trace = simloop.torque_ramp_trace(single, joint_truth, spec.rate, spec.duration,
                                          simloop.SimConfig(duration=spec.duration,
                                                            plant_dt=cfg.sim.plant_dt,
                                                            control_dt=cfg.sim.control_dt))
        out.append(estimate_breakaway(trace, spec.threshold))
    return np.array(out)


@dataclass
class EstimationResult:
    models: dict
    traces: dict
    gains: control.Gains
    v_brk: np.ndarray
    settling: dict = field(default_factory=dict)
    lyapunov: dict = field(default_factory=dict)
    backstepping: dict = field(default_factory=dict)

    def params_document(self, truth):
        return {
            "version": 1,
            "truth": truth.to_dict(),
            "truth_pi_f": truth.vector().tolist(),
            "v_brk": self.v_brk.tolist(),
            "models": {k: m.to_dict() for k, m in self.models.items()},
        }


def estimation_gains(cfg, model, traj, v_brk):
    v_st, v_coul = v_brk * np.sqrt(2.0), v_brk / 10.0
    return cfg.gains.build(model, friction_rows(traj, v_st, v_coul))


def run_estimation(cfg, traj):
    """Adaptive friction estimation on ``traj`` for every configured model kind."""
    model, truth = cfg.build_model(), cfg.build_truth()
    if traj.n_joints != model.n_joints:
        raise ConfigError("trajectory and model disagree on the number of joints")
    est = cfg.estimation
    v_brk = breakaway_estimates(cfg, model, truth) if est.breakaway else nominal_v_brk(cfg, truth)
    v_st, v_coul = v_brk * np.sqrt(2.0), v_brk / 10.0
    gains = estimation_gains(cfg, model, traj, v_brk)
    pi_hat = nominal_pi_hat(cfg, model)
    sim_cfg = cfg.sim.build(est.duration, cfg.seed, disturbance=est.disturbance)
    init = np.broadcast_to(np.asarray(est.initial_pi_f, float), (model.n_joints, 3))
    result = EstimationResult({}, {}, gains, v_brk)
    truth_pi = truth.vector()

    def run(kind, backstepping):
        fm = FrictionModel(init, v_st, v_coul, (kind,) * model.n_joints)
        ctrl = control.AdaptiveController(model, pi_hat, gains, fm, backstepping,
                                          est.hold_compensation)
        tid = f"excitation-{cfg.seed}"
        trace = simloop.run_closed_loop(model, truth, ctrl, traj, sim_cfg, trajectory_id=tid,
                                        extra_meta={"model_kind": kind})
        if trace.meta["fault"]:
            raise RuntimeError(f"estimation run failed: {trace.meta['fault']}")
        return ctrl, trace, fm.column_mask

    for kind in est.models:
        ctrl, trace, mask = run(kind, est.backstepping)
        name = f"{ctrl.name}-{kind}"
        result.models[kind] = ctrl.estimate()
        result.traces[name] = trace
        target = np.where(mask, truth_pi, 0.0) if kind == SIMPLIFIED else truth_pi
        if kind == STRIBECK:
            result.settling[kind] = evaluation.settling_time(
                trace.t, trace.pi_f.reshape(len(trace), -1), target.reshape(-1))
        lyap = evaluation.lyapunov_series(trace, model, gains, target, mask)
        result.lyapunov[name] = lyap
    if est.compare_backstepping:
        kind = est.models[0]
        for flag in (True, False):
            name = ("adaptive" if flag else "adaptive-nobs") + f"-{kind}"
            if name in result.traces:
                trace = result.traces[name]
            else:
                _, trace, _ = run(kind, flag)
            tail = trace.tail(0.2)
            result.backstepping[trace.meta["controller"]] = {
                "mean_s": np.mean(trace.s[tail], axis=0).tolist(),
                "rms_s": float(np.sqrt(np.mean(np.sum(trace.s[tail] ** 2, axis=1)))),
            }
            result.traces.setdefault(name, trace)
    return result


def load_models(doc):
    """Friction models from a parameters document written by the estimate stage."""
    return {k: FrictionModel.from_dict(v) for k, v in doc["models"].items()}


def select_friction(model_name, models, mixed_kinds=None):
    """Friction model used by a ``<base>+<model>`` controller."""
    if model_name is None:
        return None
    if model_name == "friction":
        if STRIBECK not in models:
            raise ConfigError("parameters lack a Stribeck model estimate")
        return models[STRIBECK]
    if model_name == "simplified":
        if SIMPLIFIED not in models:
            raise ConfigError("parameters lack a simplified model estimate")
        return models[SIMPLIFIED]
    if mixed_kinds is None:
        raise ConfigError("'mixed' controllers need evaluation.mixed_kinds")
    if STRIBECK not in models or SIMPLIFIED not in models:
        raise ConfigError("'mixed' controllers need both model estimates")
    rows = np.where(FrictionModel.simplified_mask(mixed_kinds)[:, None],
                    models[SIMPLIFIED].pi_f, models[STRIBECK].pi_f)
    return FrictionModel(rows, models[STRIBECK].v_st, models[STRIBECK].v_coul, mixed_kinds)


def build_controller(name, model, pi_hat, gains, models, velocity="eso", mixed_kinds=None):
    base, model_name = parse_controller(name)
    friction = select_friction(model_name, models, mixed_kinds)
    if base == "adrc":
        return control.ADRCController(model, pi_hat, gains, friction, name=name)
    return control.NominalController(model, pi_hat, gains, friction, integral=(base == "pid"),
                                     velocity=velocity, name=name)


def evaluation_trajectories(cfg):
    """The campaign's random Fourier trajectories, seeded from the config seed."""
    spec = cfg.evaluation.trajectories
    model = cfg.build_model()
    offset = cfg.excitation.offset if spec.offset is None else spec.offset
    out = []
    for k in range(spec.count):
        traj = sample_random_fourier(model.n_joints, spec.harmonics,
                                     2.0 * np.pi * spec.base_frequency, spec.std,
                                     cfg.seed + 1000 + k, duration=spec.duration, offset=offset)
        out.append((f"traj{k}", traj))
    return out


def _campaign_job(job):
    cfg, models, controller, tid, traj, seed = job
    model = cfg.build_model()
    truth = cfg.build_truth()
    gains = cfg.gains.build(model)
    ctrl = build_controller(controller, model, nominal_pi_hat(cfg, model), gains, models,
                            cfg.evaluation.velocity, cfg.evaluation.mixed_kinds)
    sim_cfg = cfg.sim.build(traj.duration, seed,
                            initial_perturbation=cfg.evaluation.initial_perturbation)
    trace = simloop.run_closed_loop(model, truth, ctrl, traj, sim_cfg, trajectory_id=tid)
    report = evaluation.evaluate_trace(trace, cfg.evaluation.threshold)
    return report, trace


def _gains_for_campaign(cfg):
    if isinstance(cfg.gains.gamma_f, str):
        # friction update gains are unused by the nominal controllers
        return dataclasses.replace(cfg, gains=dataclasses.replace(cfg.gains, gamma_f=[1.0, 1.0, 1.0]))
    return cfg


def run_campaign(cfg, models, workers=1):
    """Controllers x trajectories x seeds; returns ``[(EvalReport, SimTrace)]`` in job order.

    Every controller sees the same trajectory, seed and initial perturbation,
    so comparisons are paired.
    """
    cfg = _gains_for_campaign(cfg)
    jobs = [(cfg, models, c, tid, traj, cfg.seed + s)
            for tid, traj in evaluation_trajectories(cfg)
            for s in range(cfg.evaluation.seeds)
            for c in cfg.evaluation.controllers]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_campaign_job, jobs))
    return [_campaign_job(j) for j in jobs]


def campaign_summary(cfg, results):
    """Pooled statistics per controller plus paired comparisons."""
    by_ctrl = {}
    for report, trace in results:
        by_ctrl.setdefault(report.controller, []).append(trace)
    thr = cfg.evaluation.threshold
    pooled = [(c, evaluation.pooled_error_stats(trs), evaluation.pooled_error_stats(trs, thr))
              for c, trs in by_ctrl.items()]
    summary = {"controllers": {c: {"full": f.to_dict(), "low_velocity": lo.to_dict()}
                               for c, f, lo in pooled},
               "comparisons": {}, "z3": {}}
    stats = {c: (f, lo) for c, f, lo in pooled}
    for c in by_ctrl:
        base, model = parse_controller(c)
        if model and base in stats:
            f, lo = stats[c]
            bf, blo = stats[base]
            summary["comparisons"][f"{c} vs {base}"] = {
                "median_ratio": _ratios(f.median, bf.median),
                "low_velocity_median_ratio": _ratios(lo.median, blo.median),
            }
    index = {(r.controller, r.trajectory, r.seed): tr for r, tr in results}
    for (c, tid, seed), tr in sorted(index.items()):
        base, model = parse_controller(c)
        if base == "adrc" and model and ("adrc", tid, seed) in index:
            comp = evaluation.disturbance_comparison(tr, index[("adrc", tid, seed)])
            summary["z3"].setdefault(c, []).append(dict(comp.to_dict(), trajectory=tid, seed=seed))
    return summary, pooled


def _ratios(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.asarray(a) / np.asarray(b)
    return [None if not np.isfinite(x) else float(x) for x in r]


def run_circle(cfg, models):
    """Circle tracking with the configured controllers on a two-link arm.

    Returns ``(reference_xy, {controller: trace})``. Without estimated
    models (``models`` empty) the friction controllers use the ground truth.
    """
    model, truth = cfg.build_model(), cfg.build_truth()
    spec = cfg.circle
    traj = circle_path(spec.center, spec.radius, spec.period, model.lengths, spec.laps, spec.elbow)
    if not models:
        models = {STRIBECK: FrictionModel.from_params(truth)}
    cfg = _gains_for_campaign(cfg)
    gains = cfg.gains.build(model)
    traces = {}
    for name in spec.controllers:
        ctrl = build_controller(name, model, nominal_pi_hat(cfg, model), gains, models,
                                cfg.evaluation.velocity, cfg.evaluation.mixed_kinds)
        sim_cfg = cfg.sim.build(traj.duration, cfg.seed)
        traces[name] = simloop.run_closed_loop(model, truth, ctrl, traj, sim_cfg,
                                               trajectory_id="circle")
    _, ref_q = traj.sample(721)[:2]
    return two_link_fk(ref_q, *model.lengths), traces


def cartesian(trace, model, desired=False):
    """End-effector path of a two-link trace (measured, or the reference with ``desired``)."""
    return two_link_fk(trace.q_des if desired else trace.q, *model.lengths)
