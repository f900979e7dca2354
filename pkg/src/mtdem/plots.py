"""Figure rendering for sweep reports.

Renders the mean-error-versus-SNR comparison (one line per method, std
error bars) to a file next to the CSV tables.  SVG output is kept
byte-reproducible: a fixed hash salt pins matplotlib's generated element
ids and the creation-date metadata is suppressed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import SweepResult, summarize  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "mtdem"

_METHOD_STYLE = {
    "no-prior": {"color": "tab:orange", "marker": "s"},
    "with-prior": {"color": "tab:blue", "marker": "o"},
}


def save_error_plot(result: SweepResult, path, title: str | None = None) -> None:
    """Plot mean relative error vs SNR per method and save to ``path``
    (format from the suffix; .svg stays deterministic across reruns)."""
    summary = summarize(result)
    methods = []
    for _, method, *_ in summary:
        if method not in methods:
            methods.append(method)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in methods:
        pts = sorted((s, m, sd) for s, meth, m, sd, _ in summary if meth == method)
        snrs = [p[0] for p in pts]
        means = [p[1] for p in pts]
        stds = [p[2] for p in pts]
        style = _METHOD_STYLE.get(method, {})
        ax.errorbar(snrs, means, yerr=stds, capsize=3, label=method, **style)
    ax.set_xlabel("SNR")
    ax.set_ylabel("mean relative error")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    if path.suffix.lower() == ".svg":
        fig.savefig(path, metadata={"Date": None})
    else:
        fig.savefig(path)
    plt.close(fig)
