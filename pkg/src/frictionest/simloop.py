"""Closed-loop simulation with a zero-order-hold controller.

The plant is integrated with classical RK4 at ``plant_dt``; the controller
runs every ``control_dt`` and its torque is held in between. The Stribeck
model is continuous in velocity, so no event handling is needed.
"""

import hashlib
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dynamics
from .errors import DomainError
from .friction import stribeck_torque

TRACE_VERSION = 1
JOURNAL_MAGIC = b"FESTTRC1"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``disturbance`` is a constant torque per joint (or a scalar for all);
    ``disturbance_amplitude``/``disturbance_frequency`` add a sinusoid.
    ``mismatch_pi`` and ``mismatch_vbrk`` are the relative perturbations used
    when building nominal models for the controller (see
    :func:`inject_mismatch`). ``initial_perturbation`` is the std of the
    seeded offset of the initial position from the reference.
    """

    duration: float = 10.0
    plant_dt: float = 2.5e-4
    control_dt: float = 1e-3
    noise_q: float = 0.0
    noise_qd: float = 0.0
    disturbance: tuple = 0.0
    disturbance_amplitude: tuple = 0.0
    disturbance_frequency: float = 0.0
    mismatch_pi: float = 0.0
    mismatch_vbrk: float = 0.0
    initial_perturbation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("duration must be positive")
        if not self.plant_dt > 0 or not self.control_dt > 0:
            raise DomainError("time steps must be positive")
        ratio = self.control_dt / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise DomainError("control period must be an integer multiple of the plant step")
        for name in ("disturbance", "disturbance_amplitude"):
            value = getattr(self, name)
            object.__setattr__(self, name, tuple(np.atleast_1d(value).astype(float).tolist()))

    @property
    def substeps(self):
        return int(round(self.control_dt / self.plant_dt))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def disturbance_at(self, t, n):
        d = np.broadcast_to(np.asarray(self.disturbance), (n,))
        amp = np.broadcast_to(np.asarray(self.disturbance_amplitude), (n,))
        if self.disturbance_frequency and np.any(amp):
            return d + amp * np.sin(2 * np.pi * self.disturbance_frequency * t)
        return d.copy()


def config_hash(*parts):
    """SHA-256 over the canonical JSON of ``parts``."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


ARRAY_FIELDS = ("t", "q", "qd", "q_des", "qd_des", "qdd_des", "tau", "disturbance", "s",
                "eps", "pi_f", "eso", "saturated")


@dataclass
class SimTrace:
    """Control-rate record of one closed-loop run.

    Per-joint arrays have shape ``(K, n)``; ``pi_f`` and ``eso`` are
    ``(K, n, 3)``. ``meta`` carries ``config_hash``, ``seed``,
    ``controller`` and ``trajectory`` ids and a ``fault`` message (empty when
    the run completed).
    """

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    q_des: np.ndarray
    qd_des: np.ndarray
    qdd_des: np.ndarray
    tau: np.ndarray
    disturbance: np.ndarray
    s: np.ndarray
    eps: np.ndarray
    pi_f: np.ndarray
    eso: np.ndarray
    saturated: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_joints(self):
        return self.q.shape[1]

    def __len__(self):
        return self.t.shape[0]

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self) > 1 else 0.0

    def tail(self, fraction):
        """Index slice covering the final ``fraction`` of the ticks."""
        k = len(self)
        return slice(k - max(1, int(round(fraction * k))), k)

    def columns(self):
        """CSV header names in column order."""
        n = self.n_joints
        cols = ["t"]
        for name in ("q", "qd", "q_des", "qd_des", "qdd_des", "tau", "disturbance", "s", "eps"):
            cols += [f"{name}_{j}" for j in range(n)]
        cols += [f"pi_f_{j}_{k}" for j in range(n) for k in range(3)]
        cols += [f"eso_{j}_{k}" for j in range(n) for k in ("pos", "vel", "dist")]
        cols += [f"saturated_{j}" for j in range(n)]
        return cols

    def matrix(self):
        K = len(self)
        return np.hstack([
            self.t[:, None], self.q, self.qd, self.q_des, self.qd_des, self.qdd_des, self.tau,
            self.disturbance, self.s, self.eps, self.pi_f.reshape(K, -1),
            self.eso.reshape(K, -1), self.saturated.astype(float),
        ])

    @classmethod
    def from_matrix(cls, M, n, meta):
        parts = {}
        col = 1
        parts["t"] = M[:, 0].copy()
        for name in ("q", "qd", "q_des", "qd_des", "qdd_des", "tau", "disturbance", "s", "eps"):
            parts[name] = M[:, col:col + n].copy()
            col += n
        parts["pi_f"] = M[:, col:col + 3 * n].reshape(-1, n, 3).copy()
        col += 3 * n
        parts["eso"] = M[:, col:col + 3 * n].reshape(-1, n, 3).copy()
        col += 3 * n
        parts["saturated"] = M[:, col:col + n] > 0.5
        return cls(meta=dict(meta), **parts)

    def to_csv(self):
        """CSV text: a ``#`` metadata line, a header row, one row per tick."""
        buf = io.StringIO()
        meta = dict(self.meta, version=TRACE_VERSION, n_joints=self.n_joints)
        buf.write("# simtrace " + json.dumps(meta, sort_keys=True) + "\n")
        buf.write(",".join(self.columns()) + "\n")
        for row in self.matrix():
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# simtrace "):
            raise ValueError("missing simtrace metadata line")
        meta = json.loads(lines[0][len("# simtrace "):])
        if meta.get("version") != TRACE_VERSION:
            raise ValueError(f"unsupported trace version {meta.get('version')}")
        n = meta.pop("n_joints")
        meta.pop("version")
        M = np.array([[float(x) for x in line.split(",")] for line in lines[2:] if line])
        M = M.reshape(-1, len(lines[1].split(",")))
        return cls.from_matrix(M, n, meta)

    def to_journal(self):
        """Binary form: magic, header length, JSON header, little-endian float64 matrix."""
        M = np.ascontiguousarray(self.matrix(), dtype="<f8")
        header = json.dumps(dict(self.meta, version=TRACE_VERSION, n_joints=self.n_joints,
                                 rows=M.shape[0], cols=M.shape[1]), sort_keys=True).encode()
        return JOURNAL_MAGIC + struct.pack("<I", len(header)) + header + M.tobytes()

    @classmethod
    def from_journal(cls, blob):
        if blob[:8] != JOURNAL_MAGIC:
            raise ValueError("not a simtrace journal")
        (hlen,) = struct.unpack("<I", blob[8:12])
        meta = json.loads(blob[12:12 + hlen])
        if meta.pop("version") != TRACE_VERSION:
            raise ValueError("unsupported journal version")
        n, rows, cols = meta.pop("n_joints"), meta.pop("rows"), meta.pop("cols")
        M = np.frombuffer(blob[12 + hlen:], dtype="<f8").reshape(rows, cols)
        return cls.from_matrix(M, n, meta)


def inject_mismatch(params, relative_scale, seed):
    """``params * (1 + relative_scale * u)`` with ``u ~ U[-1, 1]`` per entry."""
    if relative_scale < 0:
        raise DomainError("relative scale must be non-negative")
    params = np.asarray(params, float)
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, params.shape)
    return params * (1.0 + relative_scale * u)


def _plant_accel(model, friction):
    """Joint acceleration on plain float lists.

    Same equations as :func:`dynamics.forward_dynamics` with the Stribeck
    torque, unrolled for one and two joints: numpy's per-call overhead on
    length-2 arrays dominates the RK4 inner loop otherwise.
    """
    p = [float(x) for x in model.params]
    g = float(model.gravity)
    if friction is None:
        fr = [(0.0, 0.0, 0.0, 1.0, 1.0)] * model.n_joints
    else:
        a = friction.vector()[:, 0]
        fr = [(float(a[j]), float(friction.f_c[j]), float(friction.f_vis[j]),
               float(friction.v_st[j]), float(friction.v_coul[j])) for j in range(model.n_joints)]

    def tf(j, v):
        a, fc, fv, vst, vc = fr[j]
        x = v / vst
        return a * math.exp(-abs(x)) * x + fc * math.tanh(v / vc) + fv * v

    if model.kind == dynamics.ONE_DOF:
        J, mgl = p[1], g * p[0]

        def accel(q, qd, tau):
            return [(tau[0] - mgl * math.sin(q[0]) - tf(0, qd[0])) / J]
        return accel

    l1 = float(model.lengths[0])

    def accel(q, qd, tau):
        s1, s2, c2 = math.sin(q[0]), math.sin(q[1]), math.cos(q[1])
        s12 = math.sin(q[0] + q[1])
        m11 = p[1] + p[3] + 2.0 * l1 * p[2] * c2
        m12 = p[3] + l1 * p[2] * c2
        m22 = p[3]
        hh = -l1 * p[2] * s2
        v1, v2 = qd
        r1 = tau[0] - (hh * v2 * v1 + hh * (v1 + v2) * v2 + g * (p[0] * s1 + p[2] * s12)) - tf(0, v1)
        r2 = tau[1] - (-hh * v1 * v1 + g * p[2] * s12) - tf(1, v2)
        det = m11 * m22 - m12 * m12
        return [(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det]
    return accel


def _rk4(accel, q, qd, tau_of_t, t, h):
    """One classical RK4 step of ``(q, qd)`` on float lists."""
    n = len(q)
    half = 0.5 * h
    k1q, k1v = qd, accel(q, qd, tau_of_t(t))
    k2q = [qd[i] + half * k1v[i] for i in range(n)]
    k2v = accel([q[i] + half * k1q[i] for i in range(n)], k2q, tau_of_t(t + half))
    k3q = [qd[i] + half * k2v[i] for i in range(n)]
    k3v = accel([q[i] + half * k2q[i] for i in range(n)], k3q, tau_of_t(t + half))
    k4q = [qd[i] + h * k3v[i] for i in range(n)]
    k4v = accel([q[i] + h * k3q[i] for i in range(n)], k4q, tau_of_t(t + h))
    w = h / 6.0
    return ([q[i] + w * (k1q[i] + 2 * k2q[i] + 2 * k3q[i] + k4q[i]) for i in range(n)],
            [qd[i] + w * (k1v[i] + 2 * k2v[i] + 2 * k3v[i] + k4v[i]) for i in range(n)])


def run_closed_loop(model, friction, controller, trajectory, config, initial_state=None,
                    trajectory_id="", extra_meta=None):
    """Simulate ``controller`` tracking ``trajectory`` on ``model``.

    ``friction`` is the ground-truth :class:`~frictionest.friction.FrictionParams`
    (``None`` for a frictionless plant). The initial state is the reference
    at ``t = 0`` plus a seeded perturbation, unless ``initial_state`` is
    given. A non-finite state or controller fault ends the run early; the
    trace then holds the ticks up to the failure and ``meta["fault"]`` the
    reason.
    """
    from .errors import SimulationFault

    n = model.n_joints
    rng = np.random.default_rng(config.seed)
    dt, h, sub = config.control_dt, config.plant_dt, config.substeps
    K = int(round(config.duration / dt)) + 1
    accel = _plant_accel(model, friction)

    if initial_state is None:
        q0, qd0, _ = trajectory.evaluate(0.0)
        q = np.array(q0, float) + config.initial_perturbation * rng.standard_normal(n)
        qd = np.array(qd0, float)
    else:
        q, qd = (np.array(x, float) for x in initial_state)
    controller.reset(q.copy(), qd.copy())

    rec = {name: np.zeros((K, n)) for name in
           ("q", "qd", "q_des", "qd_des", "qdd_des", "tau", "disturbance", "s", "eps")}
    rec["pi_f"] = np.zeros((K, n, 3))
    rec["eso"] = np.zeros((K, n, 3))
    rec["saturated"] = np.zeros((K, n), bool)
    t_arr = dt * np.arange(K)
    fault = ""
    last = K
    constant_dist = not (config.disturbance_frequency and np.any(config.disturbance_amplitude))
    for k in range(K):
        t = t_arr[k]
        ref = trajectory.evaluate(t)
        q_meas = q + config.noise_q * rng.standard_normal(n) if config.noise_q else q
        qd_meas = qd + config.noise_qd * rng.standard_normal(n) if config.noise_qd else qd
        try:
            tau = np.asarray(controller.step(t, q_meas, qd_meas, ref, dt), float)
        except SimulationFault as exc:
            fault, last = str(exc), k
            break
        sat = np.abs(tau) > model.tau_max
        tau = np.clip(tau, -model.tau_max, model.tau_max)
        dist = config.disturbance_at(t, n)
        rec["q"][k], rec["qd"][k] = q, qd
        rec["q_des"][k], rec["qd_des"][k], rec["qdd_des"][k] = ref
        rec["tau"][k], rec["disturbance"][k], rec["saturated"][k] = tau, dist, sat
        internals = controller.internals()
        for name in ("s", "eps", "pi_f", "eso"):
            rec[name][k] = internals[name]
        if k == K - 1:
            break
        if constant_dist:
            total = (tau + dist).tolist()
            tau_of_t = lambda _t: total  # noqa: E731
        else:
            tau_of_t = lambda _t: (tau + config.disturbance_at(_t, n)).tolist()  # noqa: E731
        ql, qdl = q.tolist(), qd.tolist()
        try:
            for i in range(sub):
                ql, qdl = _rk4(accel, ql, qdl, tau_of_t, t + i * h, h)
        except (OverflowError, ZeroDivisionError):
            ql = [math.nan] * n
        q, qd = np.array(ql), np.array(qdl)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            fault, last = f"non-finite plant state after t={t:.4f}", k + 1
            break
    meta = {
        "config_hash": config_hash(model.to_dict(), friction.to_dict() if friction else None,
                                   config.to_dict(), controller.name, trajectory_id,
                                   extra_meta or {}),
        "seed": config.seed,
        "controller": controller.name,
        "trajectory": trajectory_id,
        "fault": fault,
    }
    if extra_meta:
        meta.update(extra_meta)
    return SimTrace(t=t_arr[:last], meta=meta, **{k: v[:last] for k, v in rec.items()})


def torque_ramp_trace(model, friction, rate, duration, config=None, joint=0):
    """Open-loop slow torque ramp from rest, for breakaway estimation."""
    from .control import RampController
    from .trajectory import FourierTrajectory

    n = model.n_joints
    config = config or SimConfig(duration=duration)
    hold = FourierTrajectory(np.zeros((n, 1)), np.zeros((n, 1)), 1.0, np.zeros(n), duration)
    return run_closed_loop(model, friction, RampController(n, rate, (joint,)), hold,
                           SimConfig(**dict(config.to_dict(), duration=duration)),
                           initial_state=(np.zeros(n), np.zeros(n)), trajectory_id="ramp")


def mechanical_energy(model, q, qd):
    return dynamics.kinetic_energy(model, q, qd) + dynamics.potential_energy(model, q)


def energy_audit(trace, model, friction=None):
    """Per-tick work-energy residual in joules.

    ``dE - W_input + W_friction`` between consecutive ticks. The applied and
    disturbance torques are held over a tick, so their work is exact;
    friction work uses the trapezoidal rule on the friction power.
    """
    E = mechanical_energy(model, trace.q, trace.qd)
    dq = np.diff(trace.q, axis=0)
    work_in = np.sum((trace.tau[:-1] + trace.disturbance[:-1]) * dq, axis=1)
    if friction is None:
        work_f = np.zeros_like(work_in)
    else:
        p = np.sum(stribeck_torque(friction, trace.qd) * trace.qd, axis=1)
        work_f = 0.5 * (p[1:] + p[:-1]) * np.diff(trace.t)
    return np.diff(E) - work_in + work_f
