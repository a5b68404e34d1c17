"""Static Stribeck friction and its linear-in-parameters form.

The classic model

    tau_f = sqrt(2e) (f_brk - f_c) exp(-v/v_st) v/v_st + f_c tanh(v/v_coul) + f_vis v

becomes linear once the two velocity scales are fixed. The constant
``sqrt(2e)`` is folded into the first estimated parameter, so

    tau_f = Y_f(v) @ pi_f,   pi_f = [sqrt(2e) (f_brk - f_c), f_c, f_vis].

The Stribeck column is evaluated as ``exp(-|v|/v_st) v/v_st`` so that every
column is odd in ``v`` and friction opposes motion in both directions.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EstimationError

SQRT_2E = math.sqrt(2.0 * math.e)
STRIBECK = "stribeck"
SIMPLIFIED = "simplified"
MODEL_KINDS = (STRIBECK, SIMPLIFIED)


def _arr(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class FrictionParams:
    """Physical friction parameters, one entry per joint.

    ``v_st`` and ``v_coul`` are derived from the breakaway velocity on every
    access and never stored.
    """

    f_brk: np.ndarray
    f_c: np.ndarray
    f_vis: np.ndarray
    v_brk: np.ndarray

    def __post_init__(self):
        arrays = np.broadcast_arrays(*(_arr(getattr(self, k)) for k in ("f_brk", "f_c", "f_vis", "v_brk")))
        for name, value in zip(("f_brk", "f_c", "f_vis", "v_brk"), arrays):
            object.__setattr__(self, name, value.copy())
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise DomainError("friction parameters must be finite")
        if np.any(self.f_c < 0) or np.any(self.f_brk < self.f_c):
            raise DomainError("friction parameters must satisfy f_brk >= f_c >= 0")
        if np.any(self.f_vis < 0):
            raise DomainError("viscous coefficient must be non-negative")
        if np.any(self.v_brk <= 0):
            raise DomainError("breakaway velocity must be positive")

    @property
    def n_joints(self):
        return self.f_c.shape[0]

    @property
    def v_st(self):
        return self.v_brk * math.sqrt(2.0)

    @property
    def v_coul(self):
        return self.v_brk / 10.0

    def vector(self):
        """Estimation target ``pi_f`` with shape ``(n_joints, 3)``."""
        return np.stack([SQRT_2E * (self.f_brk - self.f_c), self.f_c, self.f_vis], -1)

    @classmethod
    def from_vector(cls, pi_f, v_brk):
        pi_f = np.atleast_2d(np.asarray(pi_f, dtype=float))
        f_c = pi_f[:, 1]
        return cls(f_c + pi_f[:, 0] / SQRT_2E, f_c, pi_f[:, 2], v_brk)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("f_brk", "f_c", "f_vis", "v_brk")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _check_scales(*scales):
    for s in scales:
        if np.any(np.asarray(s) <= 0):
            raise DomainError("velocity scales must be positive")


def stribeck_torque(params, v):
    """Friction torque of the classic model at joint velocity ``v``.

    ``v`` has shape ``(..., n_joints)`` (a scalar is accepted for one joint).
    """
    v = np.asarray(v, dtype=float)
    x = v / params.v_st
    stribeck = SQRT_2E * (params.f_brk - params.f_c) * np.exp(-np.abs(x)) * x
    return stribeck + params.f_c * np.tanh(v / params.v_coul) + params.f_vis * v


def friction_regressor(v, v_st, v_coul):
    """Row ``[exp(-|v|/v_st) v/v_st, tanh(v/v_coul), v]`` per velocity entry."""
    _check_scales(v_st, v_coul)
    v, v_st, v_coul = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (v, v_st, v_coul)))
    x = v / v_st
    return np.stack([np.exp(-np.abs(x)) * x, np.tanh(v / v_coul), v], -1)


def friction_regressor_derivative(v, v_st, v_coul):
    """Derivative of :func:`friction_regressor` with respect to ``v``."""
    _check_scales(v_st, v_coul)
    v, v_st, v_coul = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (v, v_st, v_coul)))
    x = np.abs(v / v_st)
    return np.stack([np.exp(-x) * (1.0 - x) / v_st,
                     (1.0 - np.tanh(v / v_coul) ** 2) / v_coul,
                     np.ones_like(v)], -1)


def simplified_regressor(v, v_coul):
    """Row ``[tanh(v/v_coul), v]``: Coulomb plus viscous, no Stribeck term."""
    _check_scales(v_coul)
    v, v_coul = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(v_coul, dtype=float))
    return np.stack([np.tanh(v / v_coul), v], -1)


def clip_passivity(pi_f):
    """Project estimates onto the non-negative orthant."""
    return np.maximum(np.asarray(pi_f, dtype=float), 0.0)


@dataclass(frozen=True, eq=False)
class FrictionModel:
    """A linear friction model as used by a controller.

    ``pi_f`` has shape ``(n_joints, 3)``. Joints whose kind is ``"simplified"``
    have their Stribeck coefficient pinned at zero, which is exactly the
    Coulomb-plus-viscous model. Mixing kinds per joint gives the mixed setting.
    """

    pi_f: np.ndarray
    v_st: np.ndarray
    v_coul: np.ndarray
    kinds: tuple = None

    def __post_init__(self):
        pi_f = np.atleast_2d(np.asarray(self.pi_f, dtype=float)).copy()
        n = pi_f.shape[0]
        kinds = (STRIBECK,) * n if self.kinds is None else tuple(self.kinds)
        if len(kinds) != n or any(k not in MODEL_KINDS for k in kinds):
            raise DomainError(f"kinds must list one of {MODEL_KINDS} per joint")
        pi_f[self.simplified_mask(kinds), 0] = 0.0
        object.__setattr__(self, "pi_f", pi_f)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "v_st", np.broadcast_to(_arr(self.v_st), (n,)).copy())
        object.__setattr__(self, "v_coul", np.broadcast_to(_arr(self.v_coul), (n,)).copy())
        _check_scales(self.v_st, self.v_coul)

    @staticmethod
    def simplified_mask(kinds):
        return np.array([k == SIMPLIFIED for k in kinds])

    @property
    def n_joints(self):
        return self.pi_f.shape[0]

    @property
    def column_mask(self):
        """Boolean ``(n_joints, 3)`` mask of the columns that are estimated."""
        mask = np.ones((self.n_joints, 3), dtype=bool)
        mask[self.simplified_mask(self.kinds), 0] = False
        return mask

    @classmethod
    def from_params(cls, params, kinds=None):
        return cls(params.vector(), params.v_st, params.v_coul, kinds)

    def with_kinds(self, kinds):
        return FrictionModel(self.pi_f, self.v_st, self.v_coul, kinds)

    def regressor(self, v):
        return friction_regressor(v, self.v_st, self.v_coul)

    def torque(self, v):
        return np.einsum("...j,...j->...", self.regressor(v), self.pi_f)

    def to_dict(self):
        return {"kinds": list(self.kinds), "pi_f": self.pi_f.tolist(),
                "v_st": self.v_st.tolist(), "v_coul": self.v_coul.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["pi_f"], d["v_st"], d["v_coul"], d.get("kinds"))


def estimate_breakaway(trace, deviation_threshold, joint=0):
    """Breakaway velocity from a slow torque-ramp experiment.

    Returns ``|qd|`` at the first sample whose position has moved more than
    ``deviation_threshold`` away from the initial position.
    """
    q = np.asarray(trace.q)[:, joint]
    qd = np.asarray(trace.qd)[:, joint]
    moved = np.flatnonzero(np.abs(q - q[0]) > deviation_threshold)
    if moved.size == 0:
        raise EstimationError("position never left the deviation band")
    return float(abs(qd[moved[0]]))
