"""Figure builders for the error-distribution and MSE power-law plots."""

import csv
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import __version__

ERRORS_HEADER = ["eps", "sample", "error"]
MSE_HEADER = ["eps", "mean_error", "mse", "n"]
FIT_HEADER = ["coefficient", "exponent", "r_squared"]

# identical inputs must give identical bytes at fixed dpi and versions
plt.rcParams["svg.hashsalt"] = "bouss2d-figures"

_META_SOFTWARE = f"bouss2d-figures {__version__} / matplotlib {matplotlib.__version__}"


class CsvFormatError(ValueError):
    """A CSV file does not match the expected schema."""


@dataclass(frozen=True)
class FigureSpec:
    input_dir: str
    output_dir: str
    format: str = "png"
    dpi: int = 150

    def __post_init__(self):
        if self.format not in ("png", "svg"):
            raise ValueError(f"format must be png or svg, got {self.format!r}")
        if self.dpi <= 0:
            raise ValueError(f"dpi must be positive, got {self.dpi}")


def _read_rows(path: str, expected_header: list) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected header {expected_header}")
        if header != expected_header:
            for got, want in zip(header + [""] * len(expected_header), expected_header):
                if got != want:
                    raise CsvFormatError(
                        f"{path}: expected column {want!r}, got {got!r}"
                    )
        return [row for row in reader if row]


def _metadata(fmt: str) -> dict:
    if fmt == "svg":
        # no timestamp (reproducible bytes), library versions recorded
        return {"Date": None, "Creator": _META_SOFTWARE}
    return {"Software": _META_SOFTWARE}


def _save(fig, spec: FigureSpec, stem: str) -> str:
    os.makedirs(spec.output_dir, exist_ok=True)
    path = os.path.join(spec.output_dir, f"{stem}.{spec.format}")
    fig.savefig(path, dpi=spec.dpi, format=spec.format, metadata=_metadata(spec.format))
    plt.close(fig)
    return path


def plot_error_distribution(spec: FigureSpec) -> str:
    """Strip plot of the per-eps error samples with group means overlaid."""
    rows = _read_rows(os.path.join(spec.input_dir, "errors.csv"), ERRORS_HEADER)
    if not rows:
        raise CsvFormatError("errors.csv has no data rows")
    groups: dict = {}
    for eps_s, _, err_s in rows:
        groups.setdefault(float(eps_s), []).append(float(err_s))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    eps_sorted = sorted(groups)
    for eps in eps_sorted:
        vals = groups[eps]
        n = len(vals)
        # deterministic horizontal spread inside each group
        offs = [0.0] if n == 1 else [(-0.5 + i / (n - 1)) * 0.12 * eps for i in range(n)]
        ax.scatter(
            [eps + o for o in offs], vals, s=9, alpha=0.55, linewidths=0,
            label=f"eps = {eps:g}",
        )
    means = [sum(groups[e]) / len(groups[e]) for e in eps_sorted]
    ax.plot(eps_sorted, means, "k--", marker="_", markersize=16, label="group mean")
    ax.set_xscale("log")
    ax.set_xlabel("time-scale ratio eps")
    ax.set_ylabel("error(eps) = sup_t |j_eps - j_avg|")
    n_samples = max(len(v) for v in groups.values())
    ax.set_title(f"error distribution, {n_samples} samples per eps")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec, "error_distribution")


def plot_mse_fit(spec: FigureSpec) -> str:
    """Log-log MSE against eps with the fitted power law, when available."""
    rows = _read_rows(os.path.join(spec.input_dir, "mse.csv"), MSE_HEADER)
    if not rows:
        raise CsvFormatError("mse.csv has no data rows")
    pts = []
    for eps_s, _, mse_s, _ in rows:
        eps, mse = float(eps_s), float(mse_s)
        if mse <= 0.0 or eps <= 0.0:
            print(
                f"warning: skipping nonpositive row eps={eps_s} mse={mse_s}",
                file=sys.stderr,
            )
            continue
        pts.append((eps, mse))
    if not pts:
        raise CsvFormatError("mse.csv has no positive rows to plot")
    pts.sort()

    fit = None
    fit_path = os.path.join(spec.input_dir, "fit.csv")
    if os.path.exists(fit_path):
        fit_rows = _read_rows(fit_path, FIT_HEADER)
        if fit_rows:
            c, e, r2 = (float(v) for v in fit_rows[0])
            fit = (c, e, r2)
    if fit is None:
        print("warning: no fit row found; plotting points only", file=sys.stderr)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    ax.loglog(xs, ys, "o", color="tab:blue", label="mean squared error")
    if fit is not None:
        c, e, r2 = fit
        ax.loglog(xs, [c * x**e for x in xs], "-", color="tab:red",
                  label=f"fit: {c:.3g} * eps^{e:.3g}")
        ax.annotate(
            f"mse ~ eps^{e:.3g}  (r^2 = {r2:.3g})",
            xy=(0.05, 0.9), xycoords="axes fraction",
        )
    ax.set_xlabel("time-scale ratio eps")
    ax.set_ylabel("mean squared error")
    ax.set_title("mean squared error vs eps")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec, "mse_fit")


def render_all(spec: FigureSpec) -> list:
    return [plot_error_distribution(spec), plot_mse_fit(spec)]
