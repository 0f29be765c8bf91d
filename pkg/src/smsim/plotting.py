"""Render BER-versus-SNR figures from sweep records to image files."""

from collections import defaultdict


def render_ber_figure(records, path, title=None):
    """Save a semilog BER plot, one curve per detector, to ``path``.

    Zero-error points have no log-scale position and are left as gaps.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = defaultdict(list)
    for r in records:
        curves[r.detector].append((r.snr_db, r.ber))

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    for name in sorted(curves):
        pts = sorted(curves[name])
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("total BER")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
