"""Static SVG power curves."""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def power_curve_svg(x, series, xlabel, ylabel="rejection proportion", title=None) -> str:
    """Render one or more curves to a standalone SVG string.

    Parameters
    ----------
    x : sequence of float
        Shared abscissa (signal strength or sparsity level).
    series : dict
        Label -> sequence of y values, one per ``x``.

    The output is deterministic for fixed inputs: no timestamp, fixed ids.
    """
    with plt.rc_context({"svg.hashsalt": "dcftest", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        markers = "sox^vD"
        for i, (label, y) in enumerate(series.items()):
            ax.plot(x, y, marker=markers[i % len(markers)], label=label, gid=f"curve{i}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()
