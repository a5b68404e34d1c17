"""Rigid-body dynamics of a single revolute joint and a two-link planar arm.

Joint angles are measured from the downward vertical, so ``q = 0`` is the
hanging configuration and gravity torque vanishes there. Both models are
written in terms of their minimal base inertial parameters, which keeps the
inverse dynamics exactly linear in the parameter vector:

* one revolute joint: ``[m*lc, m*lc**2 + I]``
* two-link arm: ``[m1*lc1 + m2*l1, I1 + m1*lc1**2 + m2*l1**2, m2*lc2, I2 + m2*lc2**2]``

All functions broadcast over leading axes: ``q`` of shape ``(..., n)`` gives
matrices of shape ``(..., n, n)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

ONE_DOF = "one_dof"
TWO_LINK = "two_link"
KINDS = (ONE_DOF, TWO_LINK)


def _arr(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class ManipulatorModel:
    """Physical description of a small serial arm.

    Per-link quantities are sequences with one entry per link. ``com`` is the
    distance from the joint axis to the link's center of mass and ``inertias``
    the rotational inertia about that center of mass.
    """

    kind: str
    masses: np.ndarray
    lengths: np.ndarray
    com: np.ndarray
    inertias: np.ndarray
    gravity: float = 9.81
    q_min: np.ndarray = None
    q_max: np.ndarray = None
    qd_min: np.ndarray = None
    qd_max: np.ndarray = None
    tau_max: np.ndarray = None
    params: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        n = 1 if self.kind == ONE_DOF else 2
        set_ = object.__setattr__
        for name in ("masses", "lengths", "com", "inertias"):
            value = _arr(getattr(self, name))
            if value.shape != (n,):
                raise DomainError(f"{name} must have {n} entries, got {value.shape}")
            if not np.all(value > 0) or not np.all(np.isfinite(value)):
                raise DomainError(f"{name} must be finite and strictly positive")
            set_(self, name, value)
        if self.gravity < 0 or not np.isfinite(self.gravity):
            raise DomainError("gravity must be finite and non-negative")
        defaults = {"q_min": -np.pi, "q_max": np.pi, "qd_min": -2.0, "qd_max": 2.0,
                    "tau_max": 100.0}
        for name, default in defaults.items():
            value = getattr(self, name)
            value = np.full(n, default) if value is None else np.broadcast_to(_arr(value), (n,)).copy()
            set_(self, name, value)
        if not np.all(self.q_min < self.q_max) or not np.all(self.qd_min < self.qd_max):
            raise DomainError("joint limits must satisfy min < max")
        if not np.all(self.tau_max > 0):
            raise DomainError("torque limits must be positive")
        set_(self, "params", _base_params(self))

    @property
    def n_joints(self):
        return 1 if self.kind == ONE_DOF else 2

    @property
    def n_params(self):
        return 2 if self.kind == ONE_DOF else 4

    @classmethod
    def one_dof(cls, mass=1.0, length=1.0, com=0.5, inertia=0.25, gravity=9.81, **limits):
        return cls(ONE_DOF, [mass], [length], [com], [inertia], gravity, **limits)

    @classmethod
    def two_link(cls, masses=(1.0, 1.0), lengths=(0.5, 0.5), com=(0.25, 0.25),
                 inertias=(0.02, 0.02), gravity=9.81, **limits):
        return cls(TWO_LINK, masses, lengths, com, inertias, gravity, **limits)

    def to_dict(self):
        return {
            "kind": self.kind,
            "masses": self.masses.tolist(),
            "lengths": self.lengths.tolist(),
            "com": self.com.tolist(),
            "inertias": self.inertias.tolist(),
            "gravity": float(self.gravity),
            "q_min": self.q_min.tolist(),
            "q_max": self.q_max.tolist(),
            "qd_min": self.qd_min.tolist(),
            "qd_max": self.qd_max.tolist(),
            "tau_max": self.tau_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _base_params(model):
    m, l, lc, inertia = model.masses, model.lengths, model.com, model.inertias
    if model.kind == ONE_DOF:
        return np.array([m[0] * lc[0], m[0] * lc[0] ** 2 + inertia[0]])
    return np.array([
        m[0] * lc[0] + m[1] * l[0],
        inertia[0] + m[0] * lc[0] ** 2 + m[1] * l[0] ** 2,
        m[1] * lc[1],
        inertia[1] + m[1] * lc[1] ** 2,
    ])


def check_limits(model, q, qd=None):
    """Raise :class:`DomainError` if ``q`` (or ``qd``) leaves the limit box."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (model.n_joints,):
        raise DomainError(f"expected {model.n_joints} joint values, got shape {q.shape}")
    if np.any(q < model.q_min) or np.any(q > model.q_max):
        raise DomainError("joint position outside limits")
    if qd is not None:
        qd = np.asarray(qd, dtype=float)
        if np.any(qd < model.qd_min) or np.any(qd > model.qd_max):
            raise DomainError("joint velocity outside limits")


def _params(model, params):
    return model.params if params is None else np.asarray(params, dtype=float)


def mass_matrix(model, q, params=None, check=True):
    """Joint-space inertia matrix M(q)."""
    q = np.asarray(q, dtype=float)
    if check:
        check_limits(model, q)
    p = _params(model, params)
    if model.kind == ONE_DOF:
        return np.broadcast_to(p[1], q.shape[:-1] + (1, 1)).copy()
    l1 = model.lengths[0]
    c2 = np.cos(q[..., 1])
    m11 = p[1] + p[3] + 2.0 * l1 * p[2] * c2
    m12 = p[3] + l1 * p[2] * c2
    m22 = np.broadcast_to(p[3], c2.shape)
    return np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)


def coriolis_matrix(model, q, qd, params=None, check=True):
    """Christoffel-symbol Coriolis matrix C(q, qd); ``dM/dt - 2C`` is skew."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if check:
        check_limits(model, q, qd)
    p = _params(model, params)
    if model.kind == ONE_DOF:
        return np.zeros(np.broadcast_shapes(q.shape, qd.shape)[:-1] + (1, 1))
    h = -model.lengths[0] * p[2] * np.sin(q[..., 1])
    row1 = np.stack([h * qd[..., 1], h * (qd[..., 0] + qd[..., 1])], -1)
    row2 = np.stack([-h * qd[..., 0], np.zeros_like(h * qd[..., 0])], -1)
    return np.stack([row1, row2], -2)


def gravity_vector(model, q, params=None, check=True):
    q = np.asarray(q, dtype=float)
    if check:
        check_limits(model, q)
    p = _params(model, params)
    g = model.gravity
    if model.kind == ONE_DOF:
        return g * p[0] * np.sin(q)
    s12 = np.sin(q[..., 0] + q[..., 1])
    return np.stack([g * (p[0] * np.sin(q[..., 0]) + p[2] * s12), g * p[2] * s12], -1)


def bias_forces(model, q, qd, params=None, check=True):
    """Return C(q, qd) qd + g(q)."""
    C = coriolis_matrix(model, q, qd, params, check)
    return np.einsum("...ij,...j->...i", C, qd) + gravity_vector(model, q, params, check=False)


def inverse_dynamics(model, q, qd, qdd, params=None, check=True):
    """Torque M(q) qdd + C(q, qd) qd + g(q), computed from the matrices."""
    M = mass_matrix(model, q, params, check)
    return np.einsum("...ij,...j->...i", M, qdd) + bias_forces(model, q, qd, params, check)


def rigid_body_regressor(model, q, qd, qdd, qd_ref=None, check=True):
    """Regressor Y with ``Y @ params == M qdd + C(q, qd) qd_ref + g``.

    With ``qd_ref`` omitted it is taken equal to ``qd`` and the product is the
    plain inverse dynamics. Passing the reference velocity and acceleration of
    a sliding-surface controller gives the form used in adaptive control.
    Shape is ``(..., n_joints, n_params)``.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    r = qd if qd_ref is None else np.asarray(qd_ref, dtype=float)
    if check:
        check_limits(model, q, qd)
    g = model.gravity
    shape = np.broadcast_shapes(q.shape, qd.shape, qdd.shape, r.shape)[:-1]
    if model.kind == ONE_DOF:
        Y = np.zeros(shape + (1, 2))
        Y[..., 0, 0] = g * np.sin(q[..., 0])
        Y[..., 0, 1] = qdd[..., 0]
        return Y
    l1 = model.lengths[0]
    s1, s2 = np.sin(q[..., 0]), np.sin(q[..., 1])
    c2 = np.cos(q[..., 1])
    s12 = np.sin(q[..., 0] + q[..., 1])
    a1, a2 = qdd[..., 0], qdd[..., 1]
    v1, v2 = qd[..., 0], qd[..., 1]
    r1, r2 = r[..., 0], r[..., 1]
    Y = np.zeros(shape + (2, 4))
    Y[..., 0, 0] = g * s1
    Y[..., 0, 1] = a1
    Y[..., 0, 2] = l1 * c2 * (2.0 * a1 + a2) - l1 * s2 * (v2 * r1 + (v1 + v2) * r2) + g * s12
    Y[..., 0, 3] = a1 + a2
    Y[..., 1, 2] = l1 * c2 * a1 + l1 * s2 * v1 * r1 + g * s12
    Y[..., 1, 3] = a1 + a2
    return Y


def regressor_partials(model, q, qd, qdd):
    """Partial derivatives of the (non-reference) regressor.

    Returns ``(dY/dq, dY/dqd, dY/dqdd)``, each of shape
    ``(..., n_joints, n_params, n_joints)`` where the last axis indexes the
    joint being differentiated.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    shape = np.broadcast_shapes(q.shape, qd.shape, qdd.shape)[:-1]
    n, p = model.n_joints, model.n_params
    dq = np.zeros(shape + (n, p, n))
    dqd = np.zeros(shape + (n, p, n))
    dqdd = np.zeros(shape + (n, p, n))
    g = model.gravity
    if model.kind == ONE_DOF:
        dq[..., 0, 0, 0] = g * np.cos(q[..., 0])
        dqdd[..., 0, 1, 0] = 1.0
        return dq, dqd, dqdd
    l1 = model.lengths[0]
    c1, s2, c2 = np.cos(q[..., 0]), np.sin(q[..., 1]), np.cos(q[..., 1])
    c12 = np.cos(q[..., 0] + q[..., 1])
    a1, a2 = qdd[..., 0], qdd[..., 1]
    v1, v2 = qd[..., 0], qd[..., 1]
    dq[..., 0, 0, 0] = g * c1
    dq[..., 0, 2, 0] = g * c12
    dq[..., 1, 2, 0] = g * c12
    dq[..., 0, 2, 1] = -l1 * s2 * (2.0 * a1 + a2) - l1 * c2 * (2.0 * v1 * v2 + v2 ** 2) + g * c12
    dq[..., 1, 2, 1] = -l1 * s2 * a1 + l1 * c2 * v1 ** 2 + g * c12
    dqd[..., 0, 2, 0] = -2.0 * l1 * s2 * v2
    dqd[..., 1, 2, 0] = 2.0 * l1 * s2 * v1
    dqd[..., 0, 2, 1] = -2.0 * l1 * s2 * (v1 + v2)
    dqdd[..., 0, 1, 0] = 1.0
    dqdd[..., 0, 2, 0] = 2.0 * l1 * c2
    dqdd[..., 0, 3, 0] = 1.0
    dqdd[..., 1, 2, 0] = l1 * c2
    dqdd[..., 1, 3, 0] = 1.0
    dqdd[..., 0, 2, 1] = l1 * c2
    dqdd[..., 0, 3, 1] = 1.0
    dqdd[..., 1, 3, 1] = 1.0
    return dq, dqd, dqdd


def forward_dynamics(model, q, qd, tau_applied, tau_friction=0.0, check=True):
    """Joint acceleration solving ``M qdd + C qd + g + tau_friction = tau_applied``."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if check:
        check_limits(model, q, qd)
        if np.any(np.abs(tau_applied) > model.tau_max):
            raise DomainError("applied torque outside limits")
    rhs = np.asarray(tau_applied, dtype=float) - bias_forces(model, q, qd, check=False) - tau_friction
    M = mass_matrix(model, q, check=False)
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def kinetic_energy(model, q, qd):
    M = mass_matrix(model, q, check=False)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", qd, M, qd)


def potential_energy(model, q):
    """Gravitational potential energy, zero reference at the joint axis height."""
    q = np.asarray(q, dtype=float)
    p, g = model.params, model.gravity
    if model.kind == ONE_DOF:
        return -g * p[0] * np.cos(q[..., 0])
    return -g * (p[0] * np.cos(q[..., 0]) + p[2] * np.cos(q[..., 0] + q[..., 1]))


def forward_kinematics(model, q):
    """End-effector position ``(x, y)`` with ``y`` pointing up."""
    q = np.asarray(q, dtype=float)
    l = model.lengths
    if model.kind == ONE_DOF:
        return np.stack([l[0] * np.sin(q[..., 0]), -l[0] * np.cos(q[..., 0])], -1)
    q12 = q[..., 0] + q[..., 1]
    x = l[0] * np.sin(q[..., 0]) + l[1] * np.sin(q12)
    y = -l[0] * np.cos(q[..., 0]) - l[1] * np.cos(q12)
    return np.stack([x, y], -1)


@dataclass(frozen=True)
class StructuralBounds:
    """Grid estimates of the constants bounding M, C, g and Y."""

    sigma_min: float
    sigma_max: float
    c0: float
    c1: float
    c2: float


def structural_bounds(model, qdd_bound=5.0, n_grid=41, seed=0):
    """Estimate the eigenvalue bounds of M and the norm bounds c0, c1, c2.

    Positions are swept on a dense grid of the limit box; velocity and
    acceleration directions are sampled. The Coriolis bound ``c0`` is the
    largest observed ``|C(q, x) y| / (|x| |y|)`` over random pairs.
    """
    rng = np.random.default_rng(seed)
    axes = [np.linspace(lo, hi, n_grid) for lo, hi in zip(model.q_min, model.q_max)]
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, model.n_joints)
    eig = np.linalg.eigvalsh(mass_matrix(model, Q, check=False))
    c1 = np.max(np.linalg.norm(gravity_vector(model, Q, check=False), axis=-1))
    X = rng.standard_normal(Q.shape)
    Z = rng.standard_normal(Q.shape)
    C = coriolis_matrix(model, Q, X, check=False)
    cz = np.linalg.norm(np.einsum("...ij,...j->...i", C, Z), axis=-1)
    c0 = np.max(cz / (np.linalg.norm(X, axis=-1) * np.linalg.norm(Z, axis=-1)))
    qd_lo, qd_hi = model.qd_min, model.qd_max
    corners = np.stack(np.meshgrid(*[[lo, hi] for lo, hi in zip(qd_lo, qd_hi)], indexing="ij"),
                       -1).reshape(-1, model.n_joints)
    c2 = 0.0
    for v in corners:
        for a in (-qdd_bound, qdd_bound):
            Y = rigid_body_regressor(model, Q, np.broadcast_to(v, Q.shape),
                                     np.full(Q.shape, a), check=False)
            c2 = max(c2, float(np.max(np.linalg.norm(Y, ord=2, axis=(-2, -1)))))
    return StructuralBounds(float(eig.min()), float(eig.max()), float(c0), float(c1), c2)
