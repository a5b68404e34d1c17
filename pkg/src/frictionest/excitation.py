"""Excitation design: minimize the condition number of the stacked regressor.

The decision variables are the Fourier coefficients of the free joints. The
objective is ``log cond(Y)`` over a uniform sampling grid, with analytic
gradients from singular-vector sensitivities ``d sigma = u^T dY v``. Position
and velocity limits are linear in the coefficients and enter the solver as
a constant-Jacobian inequality system.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import dynamics
from .errors import DomainError, InfeasibleError
from .friction import friction_regressor, friction_regressor_derivative
from .trajectory import FourierTrajectory

RIGID_BODY = "rigid_body"
FRICTION = "friction"
COMBINED = "combined"
REGRESSORS = (RIGID_BODY, FRICTION, COMBINED)

DEGENERACY_GAP = 1e-8


@dataclass(frozen=True, eq=False)
class ExcitationProblem:
    """Everything needed to generate one excitation trajectory.

    Limits come from ``model``. ``v_st``/``v_coul`` are only used by the
    friction and combined regressors. ``horizon`` defaults to one period of
    the base frequency.
    """

    model: dynamics.ManipulatorModel
    harmonics: int = 5
    omega: float = 2.0 * np.pi * 0.1
    duration: float = 100.0
    offset: np.ndarray = 0.0
    fixed: np.ndarray = None
    fixed_positions: np.ndarray = None
    grid_dt: float = 0.01
    horizon: float = None
    regressor: str = RIGID_BODY
    v_st: np.ndarray = 0.1 * np.sqrt(2.0)
    v_coul: np.ndarray = 0.01
    std: float = 0.05
    seed: int = 0
    velocity_margin: float = 0.05
    max_iter: int = 200
    feasibility_tol: float = 1e-6
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.model.n_joints
        set_ = object.__setattr__
        if self.regressor not in REGRESSORS:
            raise DomainError(f"regressor must be one of {REGRESSORS}")
        if self.harmonics < 1 or not self.omega > 0 or not self.grid_dt > 0 or not self.std > 0:
            raise DomainError("harmonics, omega, grid spacing and std must be positive")
        set_(self, "offset", np.broadcast_to(np.asarray(self.offset, float), (n,)).copy())
        set_(self, "fixed", np.zeros(n, bool) if self.fixed is None
             else np.broadcast_to(np.asarray(self.fixed, bool), (n,)).copy())
        set_(self, "fixed_positions", self.offset.copy() if self.fixed_positions is None
             else np.broadcast_to(np.asarray(self.fixed_positions, float), (n,)).copy())
        set_(self, "v_st", np.broadcast_to(np.asarray(self.v_st, float), (n,)).copy())
        set_(self, "v_coul", np.broadcast_to(np.asarray(self.v_coul, float), (n,)).copy())
        if self.fixed.all():
            raise DomainError("at least one joint must be free")
        horizon = 2.0 * np.pi / self.omega if self.horizon is None else float(self.horizon)
        set_(self, "horizon", horizon)
        set_(self, "grid", np.arange(0.0, horizon, self.grid_dt))
        rows = self.grid.size * n
        if rows < 10 * self.n_columns:
            raise DomainError(f"grid gives {rows} rows for {self.n_columns} columns; need 10x")
        if np.any(self.offset <= self.model.q_min) or np.any(self.offset >= self.model.q_max):
            raise DomainError("offsets must lie strictly inside the position limits")

    @property
    def n_joints(self):
        return self.model.n_joints

    @property
    def free(self):
        return ~self.fixed

    @property
    def n_columns(self):
        n_rb = self.model.n_params
        n_f = 3 * int(np.count_nonzero(self.free))
        return {RIGID_BODY: n_rb, FRICTION: n_f, COMBINED: n_rb + n_f}[self.regressor]

    @property
    def n_variables(self):
        return int(np.count_nonzero(self.free)) * 2 * self.harmonics

    def template(self, coefficients=None):
        n, N = self.n_joints, self.harmonics
        coef = np.zeros((n, 2 * N)) if coefficients is None else np.asarray(coefficients, float)
        return FourierTrajectory(coef[:, :N], coef[:, N:], self.omega, self.offset,
                                 self.duration, self.fixed, self.fixed_positions)

    def trajectory(self, theta):
        """Trajectory for the flat decision vector ``theta``."""
        coef = np.zeros((self.n_joints, 2 * self.harmonics))
        coef[self.free] = np.asarray(theta, float).reshape(-1, 2 * self.harmonics)
        return self.template(coef)

    def initial_theta(self):
        rng = np.random.default_rng(self.seed)
        n, N = self.n_joints, self.harmonics
        a = rng.normal(0.0, self.std, (n, N))
        b = rng.normal(0.0, self.std, (n, N))
        return np.hstack([a, b])[self.free].ravel()


@dataclass
class ExcitationReport:
    initial_cond: float
    final_cond: float
    iterations: int
    max_violation: float
    wall_time: float
    success: bool = True
    initial_feasible: bool = True
    message: str = ""
    history: list = field(default_factory=list)

    def to_dict(self, include_timing=True):
        d = {
            "initial_cond": self.initial_cond,
            "final_cond": self.final_cond,
            "iterations": self.iterations,
            "max_violation": self.max_violation,
            "success": self.success,
            "initial_feasible": self.initial_feasible,
            "message": self.message,
            "history": list(self.history),
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


def _as_trajectory(problem, coefficients):
    if isinstance(coefficients, FourierTrajectory):
        return coefficients
    coef = np.asarray(coefficients, float)
    if coef.ndim == 1:
        return problem.trajectory(coef)
    return problem.template(coef)


def _blocks(problem, q, qd, qdd):
    """Per-sample regressor blocks of shape ``(K, n_joints, n_columns)``."""
    parts = []
    if problem.regressor in (RIGID_BODY, COMBINED):
        parts.append(dynamics.rigid_body_regressor(problem.model, q, qd, qdd, check=False))
    if problem.regressor in (FRICTION, COMBINED):
        K, n = qd.shape
        free = np.flatnonzero(problem.free)
        Yf = np.zeros((K, n, 3 * free.size))
        rows = friction_regressor(qd, problem.v_st, problem.v_coul)
        for col, j in enumerate(free):
            Yf[:, j, 3 * col:3 * col + 3] = rows[:, j]
        parts.append(Yf)
    return np.concatenate(parts, axis=-1)


def stacked_regressor(problem, coefficients, times=None):
    """Regressor rows for every grid time stacked into one matrix.

    ``coefficients`` may be a flat decision vector, an ``(n_joints, 2N)``
    coefficient matrix or a :class:`FourierTrajectory`. Rows are ordered
    sample-major: row ``k * n_joints + j`` is joint ``j`` at grid time ``k``.
    """
    traj = _as_trajectory(problem, coefficients)
    t = problem.grid if times is None else np.atleast_1d(times)
    q, qd, qdd = traj.evaluate(t)
    Y = _blocks(problem, q, qd, qdd)
    return Y.reshape(-1, Y.shape[-1])


def condition_number(matrix):
    """``sigma_max / sigma_min``; ``inf`` when the matrix lacks full column rank."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1] or not np.all(np.isfinite(A)):
        return np.inf
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= s[0] * max(A.shape) * np.finfo(float).eps:
        return np.inf
    return float(s[0] / s[-1])


def _cond_from_theta(problem, theta):
    return condition_number(stacked_regressor(problem, theta))


def cond_gradient(problem, theta, fd_step=1e-6):
    """Condition number and its gradient with respect to ``theta``.

    Uses ``d sigma_k = u_k^T dY v_k`` for the extreme singular values. Falls
    back to central differences when either extreme singular value is
    (numerically) repeated, where the analytic form is undefined.
    Returns ``(cond, grad, analytic)``.
    """
    theta = np.asarray(theta, float)
    traj = problem.trajectory(theta)
    t = problem.grid
    q, qd, qdd = traj.evaluate(t)
    Yb = _blocks(problem, q, qd, qdd)
    K, n, p = Yb.shape
    U, s, Vt = np.linalg.svd(Yb.reshape(-1, p), full_matrices=False)
    if s[-1] <= s[0] * max(K * n, p) * np.finfo(float).eps:
        return np.inf, np.zeros_like(theta), True
    cond = s[0] / s[-1]
    degenerate = p > 1 and ((s[0] - s[1]) / s[0] < DEGENERACY_GAP
                            or (s[-2] - s[-1]) / s[-1] < DEGENERACY_GAP)
    if degenerate:
        grad = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = fd_step * max(1.0, abs(theta[i]))
            grad[i] = (_cond_from_theta(problem, theta + e)
                       - _cond_from_theta(problem, theta - e)) / (2 * e[i])
        return cond, grad, False

    Bq, Bqd, Bqdd = traj.basis(t)
    n_rb = problem.model.n_params if problem.regressor in (RIGID_BODY, COMBINED) else 0
    free = np.flatnonzero(problem.free)

    def dsigma(u, v):
        u = u.reshape(K, n)
        Sq = np.zeros((K, n))
        Sqd = np.zeros((K, n))
        Sqdd = np.zeros((K, n))
        if n_rb:
            dq, dqd, dqdd = dynamics.regressor_partials(problem.model, q, qd, qdd)
            vr = v[:n_rb]
            Sq += np.einsum("kr,krcm,c->km", u, dq, vr)
            Sqd += np.einsum("kr,krcm,c->km", u, dqd, vr)
            Sqdd += np.einsum("kr,krcm,c->km", u, dqdd, vr)
        if problem.regressor in (FRICTION, COMBINED):
            dYf = friction_regressor_derivative(qd, problem.v_st, problem.v_coul)
            for col, j in enumerate(free):
                vf = v[n_rb + 3 * col:n_rb + 3 * col + 3]
                Sqd[:, j] += u[:, j] * (dYf[:, j] @ vf)
        g = Sq.T @ Bq + Sqd.T @ Bqd + Sqdd.T @ Bqdd
        return g[problem.free].ravel()

    d_max = dsigma(U[:, 0], Vt[0])
    d_min = dsigma(U[:, -1], Vt[-1])
    grad = (d_max * s[-1] - s[0] * d_min) / s[-1] ** 2
    return cond, grad, True


def _constraint_system(problem):
    """Return ``(A, c)`` such that the grid limits read ``A @ theta + c >= 0``."""
    model = problem.model
    Bq, Bqd, _ = problem.template().basis(problem.grid)
    K, nb = Bq.shape
    free = np.flatnonzero(problem.free)
    mid = 0.5 * (model.qd_min + model.qd_max)
    half = 0.5 * (model.qd_max - model.qd_min) * (1.0 - problem.velocity_margin)
    blocks, consts = [], []
    for col, j in enumerate(free):
        A = np.zeros((4 * K, free.size * nb))
        sl = slice(col * nb, (col + 1) * nb)
        A[0:K, sl] = -Bq
        A[K:2 * K, sl] = Bq
        A[2 * K:3 * K, sl] = -Bqd
        A[3 * K:4 * K, sl] = Bqd
        c = np.concatenate([
            np.full(K, model.q_max[j] - problem.offset[j]),
            np.full(K, problem.offset[j] - model.q_min[j]),
            np.full(K, mid[j] + half[j]),
            np.full(K, half[j] - mid[j]),
        ])
        blocks.append(A)
        consts.append(c)
    return np.vstack(blocks), np.concatenate(consts)


def constraint_violations(trajectory, model, times):
    """Per-sample limit violation, shape ``(len(times), n_joints)``.

    Each entry is the largest amount by which position or velocity leaves
    its interval at that sample, zero when inside.
    """
    q, qd, _ = trajectory.evaluate(np.atleast_1d(times))
    over = np.maximum.reduce([
        q - model.q_max, model.q_min - q, qd - model.qd_max, model.qd_min - qd,
        np.zeros_like(q),
    ])
    return over


def optimize_excitation(problem, initial=None):
    """Minimize the stacked-regressor condition number under the joint limits.

    Starts from the seeded random draw (or ``initial``, a flat decision
    vector). An infeasible start is shrunk toward the offsets until it
    satisfies the limits. The best feasible point evaluated is returned, so
    the final condition number never exceeds the condition number at a
    feasible start.
    """
    start = time.perf_counter()
    theta0 = problem.initial_theta() if initial is None else np.asarray(initial, float).copy()
    A, c = _constraint_system(problem)
    tol = problem.feasibility_tol

    def feasible(th):
        return np.min(A @ th + c) >= -tol

    cond0 = _cond_from_theta(problem, theta0)
    initial_feasible = feasible(theta0)
    x0 = theta0
    if not initial_feasible:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(mid * theta0):
                lo = mid
            else:
                hi = mid
        x0 = lo * theta0
        if not feasible(x0):
            raise InfeasibleError("no feasible scaling of the initial draw")

    best = {"theta": x0.copy(), "cond": _cond_from_theta(problem, x0)}
    history = [float(best["cond"])]

    def objective(th):
        cond, grad, _ = cond_gradient(problem, th)
        if feasible(th) and cond < best["cond"]:
            best["theta"] = th.copy()
            best["cond"] = cond
        if not np.isfinite(cond):
            return 1e3, np.zeros_like(th)
        return np.log(cond), grad / cond

    def callback(th):
        history.append(float(_cond_from_theta(problem, th)))

    res = minimize(objective, x0, jac=True, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda th: A @ th + c, "jac": lambda th: A}],
                   callback=callback,
                   options={"maxiter": problem.max_iter, "ftol": 1e-10})
    if feasible(res.x):
        cond_x = _cond_from_theta(problem, res.x)
        if cond_x <= best["cond"]:
            best["theta"], best["cond"] = res.x.copy(), cond_x
    theta = best["theta"]
    traj = problem.trajectory(theta)
    violation = float(np.max(constraint_violations(traj, problem.model, problem.grid)))
    report = ExcitationReport(
        initial_cond=float(cond0),
        final_cond=float(best["cond"]),
        iterations=int(res.nit),
        max_violation=violation,
        wall_time=time.perf_counter() - start,
        success=violation <= tol,
        initial_feasible=bool(initial_feasible),
        message=str(res.message),
        history=history,
    )
    if not report.success:
        raise InfeasibleError("optimized trajectory violates the limits", traj, report)
    return traj, report
