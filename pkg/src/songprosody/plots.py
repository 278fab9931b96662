"""Report figures: pitch contours and per-phoneme MIDI steps."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import read_plot_data  # noqa: E402

REF_COLOR = "#d9529b"
SYN_COLOR = "#6a3d9a"

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "songprosody",
}

# no timestamps or version strings, so reruns give identical files
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_contours(plot_csv, path, title: str | None = None) -> None:
    """Reference vs synthesized F0 over time from an ``export_plot_data`` CSV."""
    t, ref, syn = read_plot_data(plot_csv)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 2.6))
        ax.plot(t, ref, color=REF_COLOR, lw=1.2, label="reference (transposed)")
        ax.plot(t, syn, color=SYN_COLOR, lw=1.2, label="synthesized")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("F0 (Hz)")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_midi(midi_csv, path) -> None:
    """Horizontal steps, one per phoneme, for reference and synthesis."""
    with open(midi_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 2.6))
        for i, r in enumerate(rows):
            ax.hlines(int(r["ref_midi"]), float(r["ref_start_s"]), float(r["ref_end_s"]),
                      color=REF_COLOR, lw=4, alpha=0.7, label="reference" if i == 0 else None)
            ax.hlines(int(r["syn_midi"]), float(r["syn_start_s"]), float(r["syn_end_s"]),
                      color=SYN_COLOR, lw=2, label="synthesized" if i == 0 else None)
        if rows:
            lo = min(min(int(r["ref_midi"]), int(r["syn_midi"])) for r in rows)
            hi = max(max(int(r["ref_midi"]), int(r["syn_midi"])) for r in rows)
            ax.set_ylim(lo - 2, hi + 2)
            ax.yaxis.set_major_locator(matplotlib.ticker.MaxNLocator(integer=True))
        ax.set_xlabel("time (s)")
        ax.set_ylabel("MIDI note")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        _save(fig, path)
