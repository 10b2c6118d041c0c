"""SVG figures for experiment outputs.

Figures are rendered with the Agg backend under a fixed SVG hash salt and
without date metadata, so the same inputs give byte-identical files.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .inference import gumbel_cdf  # noqa: E402

_RC = {"svg.hashsalt": "lpmbrw", "svg.fonttype": "path", "figure.figsize": (6.0, 4.0)}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _read_csv(path):
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_log_correction(rows, fits, path):
    """Centered medians against ``log n`` with the fitted line per theta."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for fit in fits:
            t = float(fit["theta"])
            pts = sorted((float(r["n"]), float(r["median"])) for r in rows
                         if float(r["theta"]) == t)
            x = np.log([p[0] for p in pts])
            y = np.array([p[1] for p in pts])
            line = ax.plot(x, y, "o", label=f"theta={t:.4g} ({fit['regime']})")[0]
            ax.plot(x, float(fit["intercept"]) + float(fit["slope"]) * x, "-",
                    color=line.get_color())
        ax.set_xlabel("log n")
        ax.set_ylabel("median of R*_n - n drift")
        ax.legend()
        _save(fig, path)


def plot_gumbel_histogram(samples, location, scale, path, title=""):
    """Histogram of ``samples`` with the fitted Gumbel density overlaid."""
    x = np.asarray(samples, dtype=float)
    grid = np.linspace(x.min(), x.max(), 400)
    z = (grid - location) / scale
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.hist(x, bins=60, density=True, alpha=0.5)
        ax.plot(grid, np.exp(-z - np.exp(-z)) / scale, "-")
        ax.plot(grid, np.gradient(gumbel_cdf(grid), grid), ":")
        ax.set_title(title)
        _save(fig, path)


def plot_log_correction_from_dir(directory):
    rows = _read_csv(os.path.join(directory, "log_correction.csv"))
    fits = _read_csv(os.path.join(directory, "log_correction_fits.csv"))
    plot_log_correction(rows, fits, os.path.join(directory, "log_correction.svg"))


def plot_centered_from_dir(directory):
    rows = _read_csv(os.path.join(directory, "centered_limit.csv"))
    samples = _read_csv(os.path.join(directory, "centered_samples.csv"))
    for i, row in enumerate(rows):
        sel = [float(s["set_i"]) for s in samples
               if s["theta"] == row["theta"] and s["n"] == row["n"]]
        plot_gumbel_histogram(sel, float(row["set_i_location"]), float(row["set_i_scale"]),
                              os.path.join(directory, f"centered_set_i_{i}.svg"),
                              title=f"theta={float(row['theta']):.4g} n={row['n']}")


PLOTTERS = {
    "log_correction": plot_log_correction_from_dir,
    "centered_limit": plot_centered_from_dir,
}


def render(directory, kind):
    """Re-render the figures of a finished experiment directory."""
    fn = PLOTTERS.get(kind)
    if fn is not None:
        fn(directory)
    return fn is not None
