"""Figure output for scenario reports (file rendering only)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_series(path, x, series, title, xlabel, ylabel, logx=False, reference=None):
    """Line plot of named series against x; ``reference`` draws a horizontal line."""
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    for name, ys in series.items():
        ax.plot(x, ys, marker="o", label=name)
    if reference is not None:
        ax.axhline(reference, color="k", linestyle="--", linewidth=1, label="reference")
    if logx:
        ax.set_xscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
