"""SVG figures for reports.

Every renderer returns the SVG document as bytes. Output is deterministic:
text stays as ``<text>`` elements (no glyph paths), element ids use a fixed
salt and no creation date is embedded.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


RC = {"svg.fonttype": "none", "svg.hashsalt": "frictionest", "font.size": 9}
MAX_POINTS = 4000
FRICTION_LABELS = ("stribeck", "coulomb", "viscous")


def fmt(x):
    """Number format used for every numeric label in the figures."""
    return f"{x:.4g}"


def _save(fig):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _thin(n):
    step = max(1, int(np.ceil(n / MAX_POINTS)))
    return slice(None, None, step)


def render_error_boxes(groups, title="absolute tracking error"):
    """Box plot per joint, one box per ``(label, ErrorStats)`` in ``groups``.

    Boxes are drawn from the statistics themselves (whiskers at min/max), and
    the median of each box is written next to it. A joint with no samples
    for some label gets an annotation in place of the box.
    """
    groups = list(groups)
    n = groups[0][1].median.shape[0]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, n, figsize=(3.2 * n + 1, 3.6), squeeze=False)
        for j, ax in enumerate(axes[0]):
            boxes, positions = [], []
            for i, (label, stats) in enumerate(groups):
                if stats.count[j] == 0:
                    ax.annotate(f"{label}: no samples", (i + 1, 0.5), xycoords=("data", "axes fraction"),
                                ha="center", rotation=90, fontsize=7)
                    continue
                boxes.append({"label": label, "med": stats.median[j], "q1": stats.q25[j],
                              "q3": stats.q75[j], "whislo": stats.min[j], "whishi": stats.max[j],
                              "fliers": []})
                positions.append(i + 1)
            if boxes:
                ax.bxp(boxes, positions=positions, showfliers=False)
                for b, p in zip(boxes, positions):
                    ax.text(p + 0.3, b["med"], fmt(b["med"]), fontsize=7, va="center")
            ax.set_xticks(range(1, len(groups) + 1))
            ax.set_xticklabels([g[0] for g in groups], rotation=30, ha="right")
            ax.set_xlim(0.4, len(groups) + 0.9)
            ax.set_title(f"joint {j + 1}")
            ax.set_ylabel("rad")
        fig.suptitle(title)
        fig.tight_layout()
        return _save(fig)


def render_convergence(t, pi_f, truth=None):
    """Friction estimates over time, one panel per joint."""
    t = np.asarray(t)
    pi_f = np.asarray(pi_f)
    sl = _thin(len(t))
    n = pi_f.shape[1]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(n, 1, figsize=(6, 2.6 * n), squeeze=False, sharex=True)
        for j, ax in enumerate(axes[:, 0]):
            for k, name in enumerate(FRICTION_LABELS):
                line, = ax.plot(t[sl], pi_f[sl, j, k], label=name)
                if truth is not None:
                    ax.axhline(truth[j][k], color=line.get_color(), ls="--", lw=0.8)
            ax.set_ylabel(f"joint {j + 1} estimate")
            ax.legend(loc="best", fontsize=7)
        axes[-1, 0].set_xlabel("time [s]")
        fig.tight_layout()
        return _save(fig)


def render_lyapunov(t, V):
    t, V = np.asarray(t), np.asarray(V)
    sl = _thin(len(t))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.semilogy(t[sl], np.maximum(V[sl], 1e-300))
        ax.set_xlabel("time [s]")
        ax.set_ylabel("V1")
        ax.set_title(f"max V1 {fmt(V.max())}")
        fig.tight_layout()
        return _save(fig)


def render_z3(t, z3_with, z3_without, labels=("with friction model", "without")):
    """Observer disturbance estimate for a paired run, one panel per joint."""
    t = np.asarray(t)
    a, b = np.atleast_2d(np.asarray(z3_with).T).T, np.atleast_2d(np.asarray(z3_without).T).T
    sl = _thin(len(t))
    n = a.shape[1]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(n, 1, figsize=(6, 2.6 * n), squeeze=False, sharex=True)
        for j, ax in enumerate(axes[:, 0]):
            ax.plot(t[sl], b[sl, j], label=f"{labels[1]} (mean |z3| {fmt(np.mean(np.abs(b[:, j])))})")
            ax.plot(t[sl], a[sl, j], label=f"{labels[0]} (mean |z3| {fmt(np.mean(np.abs(a[:, j])))})")
            ax.set_ylabel(f"z3 joint {j + 1} [rad/s^2]")
            ax.legend(loc="best", fontsize=7)
        axes[-1, 0].set_xlabel("time [s]")
        fig.tight_layout()
        return _save(fig)


def render_cond_history(history):
    history = np.asarray(history, float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.semilogy(np.arange(len(history)), history, marker=".")
        ax.set_xlabel("iteration")
        ax.set_ylabel("condition number")
        ax.set_title(f"initial {fmt(history[0])}, final {fmt(history.min())}")
        fig.tight_layout()
        return _save(fig)


def render_cartesian_paths(reference_xy, paths):
    """Reference circle and the end-effector paths of each named run."""
    ref = np.asarray(reference_xy)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot(ref[:, 0], ref[:, 1], "k--", lw=1, label="reference")
        for label, xy in paths:
            xy = np.asarray(xy)
            sl = _thin(len(xy))
            ax.plot(xy[sl, 0], xy[sl, 1], lw=1, label=label)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(loc="best", fontsize=7)
        fig.tight_layout()
        return _save(fig)


def emit_plots(summary, traces, truth=None, lyapunov=None):
    """Figures for one evaluation campaign as ``{file name: svg bytes}``.

    ``summary`` lists ``(controller, full ErrorStats, low-velocity
    ErrorStats)`` in display order. ``traces`` maps controller id to a
    representative trace for the time-series figures; ``lyapunov`` is an
    optional ``(t, V1)`` pair.
    """
    out = {}
    if summary:
        out["errors_full.svg"] = render_error_boxes(
            [(c, full) for c, full, _ in summary], "absolute tracking error, all samples")
        out["errors_low_velocity.svg"] = render_error_boxes(
            [(c, low) for c, _, low in summary], "absolute tracking error, low velocity")
    for name, tr in traces.items():
        if name.startswith("adaptive"):
            out[f"convergence_{name}.svg"] = render_convergence(tr.t, tr.pi_f, truth)
    for name in traces:
        if name.startswith("adrc") and not name.endswith("+friction") and name + "+friction" in traces:
            a, b = traces[name + "+friction"], traces[name]
            out["z3_comparison.svg"] = render_z3(b.t, a.eso[:, :, 2], b.eso[:, :, 2])
    if lyapunov is not None:
        out["lyapunov.svg"] = render_lyapunov(*lyapunov)
    return out
