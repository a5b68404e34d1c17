"""Reference trajectories: finite Fourier series and a two-link circle.

A Fourier trajectory is parameterized through its velocity series,

    qd_j(t) = sum_i a_ji cos(i w t) + b_ji sin(i w t)
    q_j(t)  = sum_i a_ji/(i w) sin(i w t) - b_ji/(i w) cos(i w t) + offset_j

so position, velocity and acceleration are all linear in the coefficients.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class FourierTrajectory:
    """Per-joint Fourier coefficients plus the fixed-joint mask.

    ``a`` and ``b`` have shape ``(n_joints, harmonics)``. Joints flagged in
    ``fixed`` ignore their coefficients and sit at ``fixed_positions``.
    """

    a: np.ndarray
    b: np.ndarray
    omega: float
    offset: np.ndarray
    duration: float
    fixed: np.ndarray = None
    fixed_positions: np.ndarray = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float)).copy()
        b = np.atleast_2d(np.asarray(self.b, dtype=float)).copy()
        if a.shape != b.shape or a.shape[1] < 1:
            raise DomainError("coefficient arrays must share a shape with at least one harmonic")
        n = a.shape[0]
        if not self.omega > 0 or not self.duration > 0:
            raise DomainError("omega and duration must be positive")
        fixed = np.zeros(n, bool) if self.fixed is None else np.broadcast_to(np.asarray(self.fixed, bool), (n,)).copy()
        held = np.zeros(n) if self.fixed_positions is None else np.broadcast_to(
            np.asarray(self.fixed_positions, float), (n,)).copy()
        a[fixed] = 0.0
        b[fixed] = 0.0
        set_ = object.__setattr__
        set_(self, "a", a)
        set_(self, "b", b)
        set_(self, "omega", float(self.omega))
        set_(self, "duration", float(self.duration))
        set_(self, "offset", np.broadcast_to(np.asarray(self.offset, float), (n,)).copy())
        set_(self, "fixed", fixed)
        set_(self, "fixed_positions", held)

    @property
    def n_joints(self):
        return self.a.shape[0]

    @property
    def harmonics(self):
        return self.a.shape[1]

    @property
    def period(self):
        return 2.0 * np.pi / self.omega

    def basis(self, t):
        """Design matrices mapping ``[a_1..a_N, b_1..b_N]`` to q, qd, qdd.

        Each returned array has shape ``(len(t), 2N)``; the position matrix
        excludes the offset.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        iw = self.omega * np.arange(1, self.harmonics + 1)
        s, c = np.sin(np.outer(t, iw)), np.cos(np.outer(t, iw))
        Bq = np.hstack([s / iw, -c / iw])
        Bqd = np.hstack([c, s])
        Bqdd = np.hstack([-iw * s, iw * c])
        return Bq, Bqd, Bqdd

    def coefficients(self):
        """Coefficient matrix of shape ``(n_joints, 2N)`` ordered ``[a | b]``."""
        return np.hstack([self.a, self.b])

    def with_coefficients(self, coef):
        coef = np.asarray(coef, dtype=float).reshape(self.n_joints, 2 * self.harmonics)
        N = self.harmonics
        return FourierTrajectory(coef[:, :N], coef[:, N:], self.omega, self.offset,
                                 self.duration, self.fixed, self.fixed_positions)

    def evaluate(self, t):
        """Return ``(q, qd, qdd)`` without range checking.

        A scalar ``t`` gives arrays of shape ``(n_joints,)``; an array of
        length K gives ``(K, n_joints)``.
        """
        scalar = np.ndim(t) == 0
        Bq, Bqd, Bqdd = self.basis(t)
        C = self.coefficients()
        q = Bq @ C.T + self.offset
        qd = Bqd @ C.T
        qdd = Bqdd @ C.T
        q[:, self.fixed] = self.fixed_positions[self.fixed]
        qd[:, self.fixed] = 0.0
        qdd[:, self.fixed] = 0.0
        if scalar:
            return q[0], qd[0], qdd[0]
        return q, qd, qdd

    def with_start(self, q_start):
        """Same coefficients, offset chosen so that ``q(0) == q_start``."""
        q_start = np.broadcast_to(np.asarray(q_start, float), (self.n_joints,))
        iw = self.omega * np.arange(1, self.harmonics + 1)
        offset = q_start + np.sum(self.b / iw, axis=1)
        held = np.where(self.fixed, q_start, self.fixed_positions)
        return FourierTrajectory(self.a, self.b, self.omega, offset, self.duration,
                                 self.fixed, held)

    def to_dict(self):
        return {
            "type": "fourier",
            "version": 1,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "omega": self.omega,
            "offset": self.offset.tolist(),
            "duration": self.duration,
            "fixed": self.fixed.tolist(),
            "fixed_positions": self.fixed_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("type", "fourier") != "fourier":
            raise DomainError(f"not a Fourier trajectory document: {d.get('type')!r}")
        return cls(d["a"], d["b"], d["omega"], d["offset"], d["duration"],
                   d.get("fixed"), d.get("fixed_positions"))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fourier_eval(traj, t):
    """Evaluate ``traj`` at time(s) ``t`` within ``[0, duration]``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > traj.duration * (1 + 1e-12)):
        raise DomainError("time outside the trajectory horizon")
    return traj.evaluate(t)


def sample_random_fourier(n_joints, harmonics, omega, std, seed, duration=100.0,
                          offset=0.0, fixed=None, fixed_positions=None):
    """Draw coefficients i.i.d. from ``Normal(0, std**2)``."""
    if not std > 0:
        raise DomainError("std must be positive")
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, std, (n_joints, harmonics))
    b = rng.normal(0.0, std, (n_joints, harmonics))
    return FourierTrajectory(a, b, omega, offset, duration, fixed, fixed_positions)


def two_link_ik(x, y, l1, l2, elbow=1.0):
    """Closed-form inverse kinematics, angles from the downward vertical.

    ``elbow`` picks the sign of the elbow angle and is held fixed.
    """
    rho2 = x ** 2 + y ** 2
    c2 = (rho2 - l1 ** 2 - l2 ** 2) / (2.0 * l1 * l2)
    if np.any(np.abs(c2) > 1.0):
        raise DomainError("point outside the reachable annulus")
    q2 = elbow * np.arccos(c2)
    q1 = np.arctan2(x, -y) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    return np.stack([q1, q2], -1)


def two_link_fk(q, l1, l2):
    q = np.asarray(q, dtype=float)
    q12 = q[..., 0] + q[..., 1]
    return np.stack([l1 * np.sin(q[..., 0]) + l2 * np.sin(q12),
                     -l1 * np.cos(q[..., 0]) - l2 * np.cos(q12)], -1)


def _jacobian(q, l1, l2):
    q12 = q[..., 0] + q[..., 1]
    c1, s1 = np.cos(q[..., 0]), np.sin(q[..., 0])
    c12, s12 = np.cos(q12), np.sin(q12)
    return np.stack([np.stack([l1 * c1 + l2 * c12, l2 * c12], -1),
                     np.stack([l1 * s1 + l2 * s12, l2 * s12], -1)], -2)


@dataclass(frozen=True)
class CircleTrajectory:
    """Joint-space reference tracing a Cartesian circle with a two-link arm."""

    center: tuple
    radius: float
    period: float
    link_lengths: tuple
    laps: float = 1.0
    elbow: float = 1.0
    phase: float = 0.0

    @property
    def duration(self):
        return self.period * self.laps

    @property
    def n_joints(self):
        return 2

    def cartesian(self, t):
        t = np.asarray(t, dtype=float)
        w = 2.0 * np.pi / self.period
        phi = self.phase + w * t
        cx, cy = self.center
        r = self.radius
        p = np.stack([cx + r * np.cos(phi), cy + r * np.sin(phi)], -1)
        v = np.stack([-r * w * np.sin(phi), r * w * np.cos(phi)], -1)
        acc = np.stack([-r * w ** 2 * np.cos(phi), -r * w ** 2 * np.sin(phi)], -1)
        return p, v, acc

    def evaluate(self, t):
        l1, l2 = self.link_lengths
        p, v, acc = self.cartesian(t)
        q = two_link_ik(p[..., 0], p[..., 1], l1, l2, self.elbow)
        J = _jacobian(q, l1, l2)
        qd = np.linalg.solve(J, v[..., None])[..., 0]
        q12d = qd[..., 0] + qd[..., 1]
        q12 = q[..., 0] + q[..., 1]
        jdot_qd = np.stack([
            -l1 * np.sin(q[..., 0]) * qd[..., 0] ** 2 - l2 * np.sin(q12) * q12d ** 2,
            l1 * np.cos(q[..., 0]) * qd[..., 0] ** 2 + l2 * np.cos(q12) * q12d ** 2,
        ], -1)
        qdd = np.linalg.solve(J, (acc - jdot_qd)[..., None])[..., 0]
        return q, qd, qdd

    def sample(self, n_knots):
        """Evaluate on ``n_knots`` evenly spaced times covering the horizon."""
        t = np.linspace(0.0, self.duration, n_knots)
        return (t,) + tuple(self.evaluate(t))

    def to_dict(self):
        return {"type": "circle", "version": 1, "center": list(self.center),
                "radius": self.radius, "period": self.period,
                "link_lengths": list(self.link_lengths), "laps": self.laps,
                "elbow": self.elbow, "phase": self.phase}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["center"]), d["radius"], d["period"], tuple(d["link_lengths"]),
                   d.get("laps", 1.0), d.get("elbow", 1.0), d.get("phase", 0.0))


def circle_path(center, radius, period, link_lengths, laps=1.0, elbow=1.0, phase=0.0):
    """Build a :class:`CircleTrajectory`, rejecting circles the arm cannot trace.

    Every point must lie strictly inside the annulus ``|l1 - l2| < r < l1 + l2``
    and the circle may not enclose the base, which would force the shoulder
    angle to wrap.
    """
    l1, l2 = (float(x) for x in link_lengths)
    if radius < 0 or not period > 0:
        raise DomainError("radius must be non-negative and period positive")
    d = float(np.hypot(*center))
    near, far = d - radius, d + radius
    if near <= abs(l1 - l2) or far >= l1 + l2:
        raise DomainError("circle leaves the reachable workspace")
    return CircleTrajectory(tuple(float(c) for c in center), float(radius), float(period),
                            (l1, l2), float(laps), float(elbow), float(phase))


def trajectory_from_dict(d):
    kind = d.get("type", "fourier")
    if kind == "fourier":
        return FourierTrajectory.from_dict(d)
    if kind == "circle":
        return CircleTrajectory.from_dict(d)
    raise DomainError(f"unknown trajectory type {kind!r}")
