"""Deterministic SVG time-series rendering.

One figure per trajectory: states against time with setpoint lines, inputs
against time with their box bounds.  Rendering is pinned (fixed hash salt, no
date metadata, paths instead of font glyphs) so identical inputs produce
byte-identical files.  Every drawn guide line carries a gid, which survives
into the SVG as an element id and lets tests assert figure structure.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "svg.hashsalt": "yannrl-bench",
    "svg.fonttype": "path",
    "figure.figsize": (8.0, 6.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
}

_STATE_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def emit_svg_timeseries(trajectory, setpoint, bounds, path,
                        state_names=None, input_names=None, title=None) -> None:
    """Render a closed-loop trajectory to a standalone SVG file.

    trajectory carries times, states, inputs (may all be empty); setpoint is
    the tracked operating point drawn as dashed lines; bounds is the
    (low, high) input box drawn twice per input channel.
    """
    times = np.asarray(trajectory.times, dtype=float)
    states = np.atleast_2d(np.asarray(trajectory.states, dtype=float))
    inputs = np.atleast_2d(np.asarray(trajectory.inputs, dtype=float))
    setpoint = np.asarray(setpoint, dtype=float)
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    n = setpoint.size
    m = lo.size
    empty = times.size == 0
    state_names = state_names or [f"x{i + 1}" for i in range(n)]
    input_names = input_names or [f"u{j + 1}" for j in range(m)]

    with plt.rc_context(_RC):
        fig, (ax_x, ax_u) = plt.subplots(2, 1, sharex=True)
        for i in range(n):
            color = _STATE_COLORS[i % len(_STATE_COLORS)]
            if not empty:
                ax_x.plot(times, states[:times.size, i], color=color,
                          label=state_names[i], gid=f"state-x{i + 1}")
            ax_x.axhline(setpoint[i], color=color, ls="--", lw=0.9,
                         gid=f"setpoint-x{i + 1}")
        ax_x.set_ylabel("states")
        if not empty:
            ax_x.legend(loc="best", fontsize=8)

        for j in range(m):
            color = _STATE_COLORS[j % len(_STATE_COLORS)]
            if not empty:
                ax_u.step(times, inputs[:times.size, j], where="post",
                          color=color, label=input_names[j], gid=f"input-u{j + 1}")
            ax_u.axhline(lo[j], color=color, ls=":", lw=0.9, gid=f"bound-u{j + 1}-lo")
            ax_u.axhline(hi[j], color=color, ls=":", lw=0.9, gid=f"bound-u{j + 1}-hi")
        ax_u.set_ylabel("inputs")
        ax_u.set_xlabel("time (min)")
        if not empty:
            ax_u.legend(loc="best", fontsize=8)
        if title:
            ax_x.set_title(title)

        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_svg_for_env(trajectory, env, path, title=None) -> None:
    emit_svg_timeseries(trajectory, env.x_sp,
                        (env.input_box.low, env.input_box.high), path,
                        title=title)
