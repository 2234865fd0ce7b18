"""SVG trajectory plots of one period in the x-y plane."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .nbody import build_initial_state  # noqa: E402
from .precision import mp, working_digits  # noqa: E402
from .taylor import advance, integrate_to, resolve_config  # noqa: E402

BODY_COLORS = ("tab:red", "tab:blue", "tab:green")


def sample_period(triplet, resolution: int = 800, preset="scan"):
    """Per-body (xs, ys) float lists, sampled finer than one pixel.

    The pixel size is the larger plot extent divided by ``resolution``.
    """
    cfg = resolve_config(preset)
    with working_digits(cfg.digits):
        T = mp(triplet.T)
        if not T > 0:
            raise ValueError("period must be positive")
        traj = integrate_to(build_initial_state(triplet.v_x, triplet.v_y), T, cfg)
        pts = [[float(v) for v in s[:6]] for s in traj.states]
        xs = [p[0::2] for p in pts]
        ys = [p[1::2] for p in pts]
        extent = max(
            max(max(x) for x in xs) - min(min(x) for x in xs),
            max(max(y) for y in ys) - min(min(y) for y in ys),
        )
        pixel = extent / resolution
        paths = [([], []) for _ in range(3)]
        for n, exp in enumerate(traj.expansions):
            h = traj.times[n + 1] - traj.times[n]
            start, end = traj.states[n], traj.states[n + 1]
            speed = max(
                math.hypot(float(s[6 + 2 * b]), float(s[7 + 2 * b])) for s in (start, end) for b in range(3)
            )
            # chord length bound with a margin for curvature inside the step
            count = max(2, math.ceil(2 * speed * float(h) / pixel) + 1)
            for m in range(count):
                state = advance(exp, h * m / count)
                for b in range(3):
                    paths[b][0].append(float(state[2 * b]))
                    paths[b][1].append(float(state[2 * b + 1]))
        final = traj.final
        for b in range(3):
            paths[b][0].append(float(final[2 * b]))
            paths[b][1].append(float(final[2 * b + 1]))
    return paths, pixel


def plot_orbit(triplet, path, resolution: int = 800, title=None, preset="scan") -> Path:
    """Render the three paths over one period to an SVG file."""
    paths, _ = sample_period(triplet, resolution, preset)
    inches = resolution / 100
    fig, ax = plt.subplots(figsize=(inches, inches), dpi=100)
    for b, (xs, ys) in enumerate(paths):
        ax.plot(xs, ys, color=BODY_COLORS[b], linewidth=0.6, label=f"body {b + 1}")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(loc="upper right", fontsize="small")
    if title:
        ax.set_title(title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_record(record, directory, resolution: int = 800, preset="scan") -> Path:
    cfg = resolve_config(preset)
    with working_digits(cfg.digits):
        triplet = record.triplet()
    title = f"{record.id}  T*={record.T_star[:14]}"
    if record.k is not None:
        title += f"  k={record.k}"
    return plot_orbit(triplet, Path(directory) / f"{record.id}.svg", resolution, title, preset)
