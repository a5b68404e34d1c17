"""Controllers and observers.

The step functions are pure and operate on per-joint arrays. The controller
classes wrap them with the state a discrete controller keeps between ticks
and share one interface used by the simulation loop::

    ctrl.reset(q0, qd0)
    tau = ctrl.step(t, q_meas, qd_meas, (q_d, qd_d, qdd_d), dt)
    ctrl.internals()  # dict of per-joint arrays recorded in the trace

Integration of controller states (friction estimates, backstepping
integrator, PID integral, observer) is explicit Euler at the control period.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import dynamics
from .errors import SimulationFault
from .friction import FrictionModel, clip_passivity, friction_regressor

ESO_DIVERGENCE = 1e9


def _vec(x, n):
    return np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()


@dataclass(frozen=True, eq=False)
class Gains:
    """Diagonal controller gains stored as per-joint vectors.

    ``gamma_f`` has shape ``(n_joints, 3)``, one update gain per friction
    column. The position gain of the PD family is ``kd * sigma``.
    """

    kd: np.ndarray
    sigma: np.ndarray
    gamma_f: np.ndarray
    gamma_e: np.ndarray
    ki: np.ndarray
    eso_bandwidth: float = 50.0

    def __post_init__(self):
        kd = np.atleast_1d(np.asarray(self.kd, float)).copy()
        n = kd.shape[0]
        object.__setattr__(self, "kd", kd)
        for name in ("sigma", "gamma_e", "ki"):
            object.__setattr__(self, name, _vec(getattr(self, name), n))
        object.__setattr__(self, "gamma_f",
                           np.broadcast_to(np.asarray(self.gamma_f, float), (n, 3)).copy())
        if not (np.all(self.kd > 0) and np.all(self.sigma > 0) and np.all(self.gamma_f > 0)
                and np.all(self.gamma_e > 0) and np.all(self.ki > 0) and self.eso_bandwidth > 0):
            raise ValueError("all gains must be strictly positive")

    @property
    def n_joints(self):
        return self.kd.shape[0]

    @property
    def kp(self):
        return self.kd * self.sigma

    @classmethod
    def from_bandwidth(cls, inertia, bandwidth=10.0, gamma_f=(1.0, 1.0, 0.1), gamma_e=10.0,
                       eso_bandwidth=50.0, ki_ratio=0.25):
        """Critically damped gains for per-joint inertias ``inertia``.

        A double pole at ``-bandwidth`` gives ``kd = 2 J w`` and ``sigma = w/2``
        so that ``kp = J w**2``. The integral gain is ``ki_ratio * w * kp``.
        """
        J = np.atleast_1d(np.asarray(inertia, float))
        w = float(bandwidth)
        kd = 2.0 * J * w
        sigma = np.full_like(J, w / 2.0)
        return cls(kd, sigma, gamma_f, gamma_e, ki_ratio * w * kd * sigma, eso_bandwidth)

    def to_dict(self):
        return {"kd": self.kd.tolist(), "sigma": self.sigma.tolist(),
                "gamma_f": self.gamma_f.tolist(), "gamma_e": self.gamma_e.tolist(),
                "ki": self.ki.tolist(), "eso_bandwidth": self.eso_bandwidth}


def scaled_gamma_f(friction_rows, kd, scale=3.0):
    """Friction update gains normalized by regressor column energy.

    ``friction_rows`` is a ``(K, n_joints, 3)`` stack of ``Y_f`` over an
    excitation period. Each gain is ``scale * kd / mean(Y_f**2)``, which puts
    every column's averaged adaptation rate near ``scale`` times the
    normalized column correlation. Columns that are never excited keep a
    unit gain.
    """
    energy = np.mean(np.asarray(friction_rows, float) ** 2, axis=0)
    kd = np.asarray(kd, float)[:, None]
    with np.errstate(divide="ignore"):
        gamma = np.where(energy > 1e-12, scale * kd / energy, 1.0)
    return gamma


def nominal_inertia(model, q=None):
    """Diagonal of M at ``q`` (the model's mid-range posture by default)."""
    q = 0.5 * (model.q_min + model.q_max) if q is None else np.asarray(q, float)
    return np.diag(dynamics.mass_matrix(model, q, check=False)).copy()


@dataclass(frozen=True, eq=False)
class AdaptiveState:
    pi_f: np.ndarray
    eps: np.ndarray
    backstepping: bool = True


@dataclass(frozen=True, eq=False)
class EsoState:
    """Observer states per joint: ``z[:, 0]`` position, ``z[:, 1]`` velocity,
    ``z[:, 2]`` total disturbance in acceleration units."""

    z: np.ndarray
    fault: bool = False

    @classmethod
    def at(cls, q, qd=None):
        q = np.atleast_1d(np.asarray(q, float))
        qd = np.zeros_like(q) if qd is None else np.asarray(qd, float)
        return cls(np.stack([q, qd, np.zeros_like(q)], -1))


def sliding_error(q, qd, q_d, qd_d, sigma):
    """``s = (qd - qd_d) + sigma (q - q_d)``."""
    return (np.asarray(qd) - qd_d) + np.asarray(sigma) * (np.asarray(q) - q_d)


def adaptive_step(state, gains, model, pi_hat, q, qd, q_d, qd_d, qdd_d, dt,
                  v_st, v_coul, column_mask=None, hold_compensation=False):
    """One tick of the certainty-equivalence friction estimator.

    The torque uses the estimates held at the start of the tick::

        tau = Y(q, qd, qd_r, qdd_r) pi_hat + Y_f(qd) pi_f - K_D s [+ eps]

    with ``qd_r = qd_d - sigma q~`` and ``qdd_r = qdd_d - sigma qd~``. Then
    ``pi_f <- clip(pi_f - dt Gamma_f Y_f^T s)`` and, with backstepping,
    ``eps <- eps - dt Gamma_e s``. ``column_mask`` freezes friction columns
    that are not part of the model (the Stribeck column of a simplified one).

    With ``hold_compensation`` the friction regressor is evaluated at the
    velocity predicted for the middle of the hold interval,
    ``qd + dt/2 * qdd_r``, instead of at ``qd``. This removes the first-order
    lag a zero-order hold adds to the steep Coulomb term.
    """
    q, qd = np.asarray(q, float), np.asarray(qd, float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise SimulationFault("non-finite state passed to the adaptive controller")
    if dt <= 0:
        raise ValueError("dt must be positive")
    e, ed = q - q_d, qd - qd_d
    s = ed + gains.sigma * e
    qd_r = qd_d - gains.sigma * e
    qdd_r = qdd_d - gains.sigma * ed
    Y = dynamics.rigid_body_regressor(model, q, qd, qdd_r, qd_ref=qd_r, check=False)
    v = qd + 0.5 * dt * qdd_r if hold_compensation else qd
    Yf = friction_regressor(v, v_st, v_coul)
    if column_mask is not None:
        Yf = np.where(column_mask, Yf, 0.0)
    tau = Y @ pi_hat + np.sum(Yf * state.pi_f, axis=-1) - gains.kd * s
    if state.backstepping:
        tau = tau + state.eps
    pi_f = clip_passivity(state.pi_f - dt * gains.gamma_f * Yf * s[:, None])
    eps = state.eps - dt * gains.gamma_e * s if state.backstepping else state.eps
    return tau, replace(state, pi_f=pi_f, eps=eps)


def pd_step(q, qd_est, q_d, qd_d, gains):
    """``tau = -kp (q - q_d) - kd (qd - qd_d)`` with ``kp = kd * sigma``."""
    return -gains.kp * (np.asarray(q) - q_d) - gains.kd * (np.asarray(qd_est) - qd_d)


def pid_step(q, qd_est, q_d, qd_d, gains, integral, dt, tau_limit=np.inf):
    """PD plus integral action on the position error.

    The integral state is clamped so that ``ki * integral`` never exceeds
    ``tau_limit`` in magnitude (anti-windup).
    """
    e = np.asarray(q) - q_d
    integral = np.asarray(integral, float) + dt * e
    bound = np.asarray(tau_limit, float) / gains.ki
    integral = np.clip(integral, -bound, bound)
    return pd_step(q, qd_est, q_d, qd_d, gains) - gains.ki * integral, integral


def eso_step(state, q_measured, u, inertia, bandwidth, dt):
    """Third-order linear observer with gains ``[3w, 3w**2, w**3]``.

    Model per joint: ``qdd = u / inertia + z3``, so ``z3`` collects every
    acceleration the input ``u`` does not explain.
    """
    if bandwidth <= 0 or dt <= 0:
        raise ValueError("bandwidth and dt must be positive")
    z = state.z
    w = bandwidth
    err = np.asarray(q_measured, float) - z[:, 0]
    b0u = np.asarray(u, float) / inertia
    nz = np.empty_like(z)
    nz[:, 0] = z[:, 0] + dt * (z[:, 1] + 3.0 * w * err)
    nz[:, 1] = z[:, 1] + dt * (z[:, 2] + b0u + 3.0 * w ** 2 * err)
    nz[:, 2] = z[:, 2] + dt * (w ** 3 * err)
    fault = state.fault or not np.all(np.isfinite(nz)) or np.max(np.abs(nz)) > ESO_DIVERGENCE
    return EsoState(nz, fault)


def adrc_step(eso, q_d, qd_d, qdd_d, gains, inertia, friction=None):
    """ADRC law on the observer estimates.

    Returns ``(tau, u0)`` where ``u0 = inertia (qdd_d - k1 (z1 - q_d) -
    k2 (z2 - qd_d) - z3)`` with ``k1 = kp/inertia`` and ``k2 = kd/inertia``,
    and ``tau = u0 + Y_f(z2) pi_f`` when a friction model is given. The
    observer should be driven with ``u0``: the friction feedforward is part
    of the known model, not of the disturbance.
    """
    z = eso.z
    u0 = (inertia * (qdd_d - z[:, 2]) - gains.kp * (z[:, 0] - q_d)
          - gains.kd * (z[:, 1] - qd_d))
    tau = u0 if friction is None else u0 + friction.torque(z[:, 1])
    return tau, u0


class Controller:
    """Base class; subclasses set ``name`` and implement ``step``."""

    name = "controller"

    def __init__(self, n_joints, sigma=None):
        self.n_joints = n_joints
        self.sigma = np.ones(n_joints) if sigma is None else np.asarray(sigma, float)
        self._s = np.zeros(n_joints)

    def reset(self, q0, qd0):
        self._s = np.zeros(self.n_joints)

    def step(self, t, q, qd, ref, dt):
        raise NotImplementedError

    def internals(self):
        n = self.n_joints
        return {"pi_f": np.full((n, 3), np.nan), "eps": np.zeros(n), "s": self._s,
                "eso": np.full((n, 3), np.nan)}

    def _track(self, q, qd, ref):
        self._s = sliding_error(q, qd, ref[0], ref[1], self.sigma)


class ZeroController(Controller):
    name = "zero"

    def step(self, t, q, qd, ref, dt):
        self._track(q, qd, ref)
        return np.zeros(self.n_joints)


class RampController(Controller):
    """Open-loop torque ``rate * t`` on the selected joints."""

    name = "ramp"

    def __init__(self, n_joints, rate, joints=(0,)):
        super().__init__(n_joints)
        self.rate = np.zeros(n_joints)
        self.rate[list(joints)] = rate

    def step(self, t, q, qd, ref, dt):
        return self.rate * t


class FeedforwardController(Controller):
    """Exact inverse dynamics plus friction at the reference, no feedback."""

    name = "feedforward"

    def __init__(self, model, friction_params=None):
        super().__init__(model.n_joints)
        self.model = model
        self.friction_params = friction_params

    def step(self, t, q, qd, ref, dt):
        from .friction import stribeck_torque

        self._track(q, qd, ref)
        q_d, qd_d, qdd_d = ref
        tau = dynamics.inverse_dynamics(self.model, q_d, qd_d, qdd_d, check=False)
        if self.friction_params is not None:
            tau = tau + stribeck_torque(self.friction_params, qd_d)
        return tau


class AdaptiveController(Controller):
    """Friction estimator, optionally with the backstepping integrator."""

    def __init__(self, model, pi_hat, gains, friction, backstepping=True,
                 hold_compensation=False):
        super().__init__(model.n_joints, gains.sigma)
        self.model = model
        self.pi_hat = np.asarray(pi_hat, float)
        self.gains = gains
        self.friction = friction
        self.backstepping = backstepping
        self.hold_compensation = hold_compensation
        self.name = "adaptive" if backstepping else "adaptive-nobs"
        self.reset(np.zeros(self.n_joints), np.zeros(self.n_joints))

    def reset(self, q0, qd0):
        super().reset(q0, qd0)
        self.state = AdaptiveState(self.friction.pi_f.copy(), np.zeros(self.n_joints),
                                   self.backstepping)

    def step(self, t, q, qd, ref, dt):
        self._track(q, qd, ref)
        tau, self.state = adaptive_step(
            self.state, self.gains, self.model, self.pi_hat, q, qd, *ref, dt,
            self.friction.v_st, self.friction.v_coul, self.friction.column_mask,
            self.hold_compensation)
        return tau

    def internals(self):
        d = super().internals()
        d["pi_f"] = self.state.pi_f
        d["eps"] = self.state.eps
        return d

    def estimate(self):
        return FrictionModel(self.state.pi_f, self.friction.v_st, self.friction.v_coul,
                             self.friction.kinds)


class _ObserverMixin:
    def _init_observer(self, model, gains, inertia):
        self.inertia = nominal_inertia(model) if inertia is None else np.asarray(inertia, float)
        self.eso = EsoState.at(np.zeros(model.n_joints))

    def _observe(self, q, u, dt):
        self.eso = eso_step(self.eso, q, u, self.inertia, self.gains.eso_bandwidth, dt)
        if self.eso.fault:
            raise SimulationFault("extended state observer diverged")


class NominalController(_ObserverMixin, Controller):
    """PD or PID feedback around rigid-body feedforward at the reference.

    ``friction`` adds ``Y_f(v) pi_f`` evaluated at the velocity estimate.
    ``velocity`` selects that estimate: ``"eso"`` (observer) or ``"true"``.
    """

    def __init__(self, model, pi_hat, gains, friction=None, integral=False,
                 velocity="eso", inertia=None, name=None):
        super().__init__(model.n_joints, gains.sigma)
        self.model = model
        self.pi_hat = np.asarray(pi_hat, float)
        self.gains = gains
        self.friction = friction
        self.integral = integral
        self.velocity = velocity
        base = "pid" if integral else "pd"
        self.name = name or (base if friction is None else f"{base}+friction")
        self._init_observer(model, gains, inertia)
        self._i = np.zeros(self.n_joints)
        self._last_tau = np.zeros(self.n_joints)

    def reset(self, q0, qd0):
        super().reset(q0, qd0)
        self.eso = EsoState.at(q0, qd0)
        self._i = np.zeros(self.n_joints)
        self._last_tau = np.zeros(self.n_joints)

    def step(self, t, q, qd, ref, dt):
        self._observe(q, self._last_tau, dt)
        v = self.eso.z[:, 1] if self.velocity == "eso" else np.asarray(qd, float)
        self._track(q, v, ref)
        q_d, qd_d, qdd_d = ref
        ff = dynamics.rigid_body_regressor(self.model, q_d, qd_d, qdd_d, check=False) @ self.pi_hat
        if self.integral:
            fb, self._i = pid_step(q, v, q_d, qd_d, self.gains, self._i, dt, self.model.tau_max)
        else:
            fb = pd_step(q, v, q_d, qd_d, self.gains)
        tau = ff + fb
        if self.friction is not None:
            tau = tau + self.friction.torque(v)
        self._last_tau = tau
        return tau

    def internals(self):
        d = super().internals()
        d["eso"] = self.eso.z
        if self.friction is not None:
            d["pi_f"] = self.friction.pi_f
        return d


class ADRCController(_ObserverMixin, Controller):
    """Linear ADRC; the nominal gravity torque is treated as known input."""

    def __init__(self, model, pi_hat, gains, friction=None, inertia=None,
                 gravity_compensation=True, name=None):
        super().__init__(model.n_joints, gains.sigma)
        self.model = model
        self.pi_hat = np.asarray(pi_hat, float)
        self.gains = gains
        self.friction = friction
        self.gravity_compensation = gravity_compensation
        self.name = name or ("adrc" if friction is None else "adrc+friction")
        self._init_observer(model, gains, inertia)
        self._u0 = np.zeros(self.n_joints)

    def reset(self, q0, qd0):
        super().reset(q0, qd0)
        self.eso = EsoState.at(q0, qd0)
        self._u0 = np.zeros(self.n_joints)

    def step(self, t, q, qd, ref, dt):
        self._observe(q, self._u0, dt)
        self._track(q, self.eso.z[:, 1], ref)
        tau, self._u0 = adrc_step(self.eso, *ref, self.gains, self.inertia, self.friction)
        if self.gravity_compensation:
            tau = tau + dynamics.gravity_vector(self.model, self.eso.z[:, 0], self.pi_hat,
                                                check=False)
        return tau

    def internals(self):
        d = super().internals()
        d["eso"] = self.eso.z
        if self.friction is not None:
            d["pi_f"] = self.friction.pi_f
        return d
