"""Plot-data text files and PNG figures for flow traces."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_plotdata(path, trace):
    """Two whitespace-separated columns: t and dev_sup."""
    t = trace.column("t")
    dev = trace.column("dev_sup")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# t dev_sup\n")
        for a, b in zip(t, dev):
            fh.write("%.17g %.17g\n" % (a, b))


def read_plotdata(path):
    return np.loadtxt(path, comments="#", ndmin=2)


def render_trace(path, trace, title=None, target=None):
    """Deviation (log scale) and functional against flow time, stacked."""
    t = trace.column("t")
    dev = trace.column("dev_sup")
    lval = trace.column("L")
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6.0, 5.5), sharex=True)
    ax0.semilogy(t, np.maximum(dev, 1e-300), lw=1.5, label="sup deviation")
    ax0.semilogy(t, np.maximum(trace.column("dev_l2"), 1e-300), lw=1.0, ls="--", label="L2 deviation")
    if target is not None:
        ax0.axhline(target, color="gray", lw=0.8, ls=":", label="target")
    ax0.set_ylabel(r"$|K_h - c\,\mathrm{Id}|$")
    ax0.legend(frameon=False, fontsize=8)
    ax1.plot(t, lval, lw=1.5, color="C3")
    ax1.set_ylabel(r"$\mathcal{L}(h_t, h_0)$")
    ax1.set_xlabel("t")
    if title:
        ax0.set_title(title)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
