"""Metrics over simulation traces.

Quartiles use linear interpolation between order statistics (numpy's
default ``percentile`` method). Statistics are per joint; a joint whose
subset is empty gets NaN entries and ``count == 0``.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .errors import DomainError

LOW_VELOCITY_THRESHOLD = 0.01
DEGENERATE_Z3 = 1e-9


@dataclass(frozen=True, eq=False)
class ErrorStats:
    """Descriptive statistics of absolute tracking error, one entry per joint."""

    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    min: np.ndarray
    max: np.ndarray
    mean: np.ndarray
    rms: np.ndarray
    count: np.ndarray

    @property
    def iqr(self):
        return self.q75 - self.q25

    @property
    def absent(self):
        """Per-joint flag: no samples in the subset."""
        return self.count == 0

    @classmethod
    def from_samples(cls, per_joint):
        """Build from a list of 1-D arrays of absolute errors."""
        rows = []
        for x in per_joint:
            x = np.asarray(x, float)
            if x.size == 0:
                rows.append([np.nan] * 7 + [0])
                continue
            q25, q50, q75 = np.percentile(x, [25, 50, 75])
            rows.append([q50, q25, q75, x.min(), x.max(), x.mean(), np.sqrt(np.mean(x ** 2)), x.size])
        cols = np.array(rows, float).T
        return cls(*cols[:7], cols[7].astype(int))

    def to_dict(self):
        d = {k: [None if np.isnan(v) else float(v) for v in getattr(self, k)]
             for k in ("median", "q25", "q75", "min", "max", "mean", "rms")}
        d["iqr"] = [None if np.isnan(v) else float(v) for v in self.iqr]
        d["count"] = self.count.tolist()
        return d


def abs_tracking_error(trace):
    return np.abs(np.asarray(trace.q) - np.asarray(trace.q_des))


def tracking_error_stats(trace, mask=None):
    """Statistics of ``|q - q_des|`` per joint, optionally over a ``(K, n)`` mask."""
    err = abs_tracking_error(trace)
    if err.shape[0] == 0:
        raise DomainError("empty trace")
    if mask is None:
        mask = np.ones_like(err, dtype=bool)
    return ErrorStats.from_samples([err[mask[:, j], j] for j in range(err.shape[1])])


def low_velocity_filter(trace, threshold=LOW_VELOCITY_THRESHOLD):
    """Boolean ``(K, n)`` mask of ticks where ``|qd_des| < threshold``, per joint."""
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    return np.abs(np.asarray(trace.qd_des)) < threshold


@dataclass
class LyapunovSummary:
    series: np.ndarray
    max_increment: float
    max_value: float

    @property
    def relative_increment(self):
        return self.max_increment / self.max_value if self.max_value > 0 else 0.0

    def to_dict(self):
        return {"max_increment": self.max_increment, "max_value": self.max_value,
                "relative_increment": self.relative_increment,
                "initial": float(self.series[0]), "final": float(self.series[-1])}


def lyapunov_series(trace, model, gains, pi_f_true, column_mask=None):
    """``V1 = s'Ms/2 + pi~' Gamma_f^-1 pi~/2 + eps' Gamma_e^-1 eps/2`` per tick.

    ``pi_f_true`` has shape ``(n_joints, 3)``. ``column_mask`` drops friction
    columns the estimator does not adapt. The maximum positive increment
    between consecutive ticks is reported alongside the series.
    """
    pi_f = np.asarray(trace.pi_f)
    if pi_f.size == 0 or np.isnan(pi_f).any() or np.isnan(np.asarray(trace.eps)).any():
        raise DomainError("trace lacks friction-estimate or integrator streams")
    s = np.asarray(trace.s)
    M = dynamics.mass_matrix(model, trace.q, check=False)
    v = 0.5 * np.einsum("ki,kij,kj->k", s, M, s)
    err = pi_f - np.asarray(pi_f_true, float)
    if column_mask is not None:
        err = np.where(column_mask, err, 0.0)
    v += 0.5 * np.sum(err ** 2 / gains.gamma_f, axis=(1, 2))
    v += 0.5 * np.sum(np.asarray(trace.eps) ** 2 / gains.gamma_e, axis=1)
    inc = np.diff(v)
    return LyapunovSummary(v, float(max(inc.max(), 0.0)) if inc.size else 0.0, float(v.max()))


@dataclass
class DisturbanceComparison:
    mean_with: float
    mean_without: float
    ratio: float
    degenerate: bool

    def to_dict(self):
        return dict(self.__dict__)


def mean_abs_z3(trace):
    return float(np.mean(np.abs(np.asarray(trace.eso)[:, :, 2])))


def disturbance_comparison(trace_with, trace_without):
    """Ratio of mean ``|z3|`` with and without the friction model.

    Both traces must share time base, trajectory and seed. When the
    reference run shows no disturbance at all the ratio is reported as 1
    and flagged degenerate.
    """
    same = (len(trace_with) == len(trace_without)
            and np.array_equal(trace_with.t, trace_without.t)
            and trace_with.meta.get("trajectory") == trace_without.meta.get("trajectory")
            and trace_with.meta.get("seed") == trace_without.meta.get("seed"))
    if not same:
        raise DomainError("paired traces must share trajectory, seed and time base")
    a, b = mean_abs_z3(trace_with), mean_abs_z3(trace_without)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise DomainError("traces carry no observer states")
    if b < DEGENERATE_Z3:
        return DisturbanceComparison(a, b, 1.0, True)
    return DisturbanceComparison(a, b, a / b, False)


def settling_time(t, values, reference=None, tol=0.05):
    """First time after which every entry stays within ``tol`` of its target.

    The target is ``reference`` when given, else the terminal value; the band
    is relative to the target's magnitude. Returns ``inf`` if the final
    sample is outside the band.
    """
    t = np.asarray(t, float)
    x = np.asarray(values, float).reshape(len(t), -1)
    target = x[-1] if reference is None else np.asarray(reference, float).reshape(-1)
    band = tol * np.abs(target)
    outside = np.any(np.abs(x - target) > band, axis=1)
    if outside[-1]:
        return float("inf")
    idx = np.flatnonzero(outside)
    return float(t[0]) if idx.size == 0 else float(t[idx[-1] + 1])


def trace_digest(trace):
    """SHA-256 of a trace's numeric content and metadata."""
    h = hashlib.sha256(json.dumps(trace.meta, sort_keys=True).encode())
    h.update(np.ascontiguousarray(trace.matrix(), dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class EvalReport:
    controller: str
    trajectory: str
    seed: int
    full: ErrorStats
    low_velocity: ErrorStats
    threshold: float = LOW_VELOCITY_THRESHOLD
    lyapunov: dict = None
    z3_mean: float = None
    terminal_pi_f: list = None
    settling_time: float = None
    trace_digest: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "controller": self.controller,
            "trajectory": self.trajectory,
            "seed": self.seed,
            "threshold": self.threshold,
            "full": self.full.to_dict(),
            "low_velocity": self.low_velocity.to_dict(),
            "lyapunov": self.lyapunov,
            "z3_mean": self.z3_mean,
            "terminal_pi_f": self.terminal_pi_f,
            "settling_time": _finite_or_none(self.settling_time),
            "trace_digest": self.trace_digest,
        }
        d.update(self.extra)
        return d


def _finite_or_none(x):
    return None if x is None or not np.isfinite(x) else float(x)


def evaluate_trace(trace, threshold=LOW_VELOCITY_THRESHOLD, model=None, gains=None,
                   pi_f_true=None, column_mask=None):
    """Assemble an :class:`EvalReport` for one run.

    Lyapunov and convergence entries are filled in only when the trace holds
    friction estimates and the needed model, gains and truth are given.
    """
    report = EvalReport(
        controller=trace.meta.get("controller", ""),
        trajectory=trace.meta.get("trajectory", ""),
        seed=int(trace.meta.get("seed", 0)),
        full=tracking_error_stats(trace),
        low_velocity=tracking_error_stats(trace, low_velocity_filter(trace, threshold)),
        threshold=threshold,
        trace_digest=trace_digest(trace),
    )
    eso = np.asarray(trace.eso)
    if not np.isnan(eso).any():
        report.z3_mean = mean_abs_z3(trace)
    pi_f = np.asarray(trace.pi_f)
    if not np.isnan(pi_f).any():
        report.terminal_pi_f = pi_f[-1].tolist()
        if pi_f_true is not None:
            report.settling_time = settling_time(trace.t, pi_f.reshape(len(trace), -1),
                                                 np.asarray(pi_f_true).reshape(-1))
        if model is not None and gains is not None and pi_f_true is not None:
            report.lyapunov = lyapunov_series(trace, model, gains, pi_f_true, column_mask).to_dict()
    return report


def pooled_error_stats(traces, threshold=None):
    """Statistics over the concatenated samples of several runs.

    With ``threshold`` only low-velocity ticks of each run contribute.
    """
    traces = list(traces)
    if not traces:
        raise DomainError("no traces to pool")
    n = traces[0].n_joints
    per_joint = [[] for _ in range(n)]
    for tr in traces:
        err = abs_tracking_error(tr)
        mask = np.ones_like(err, bool) if threshold is None else low_velocity_filter(tr, threshold)
        for j in range(n):
            per_joint[j].append(err[mask[:, j], j])
    return ErrorStats.from_samples([np.concatenate(x) for x in per_joint])
