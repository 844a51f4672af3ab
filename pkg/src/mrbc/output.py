"""Trace CSV files and plots."""
from __future__ import annotations

import os
import re
import warnings
from typing import Sequence

import numpy as np

from .simulation import Trace, trace_columns

_FMT = "%.17g"


def emit(trace: Trace, path: str | os.PathLike) -> None:
    """Write ``trace`` as CSV: one header row, one row per sample, 17 significant digits."""
    np.savetxt(path, trace.data, fmt=_FMT, delimiter=",", header=",".join(trace.columns), comments="")


def read_trace(path: str | os.PathLike) -> Trace:
    """Inverse of :func:`emit`; values come back bit-identical (run metadata is not stored)."""
    with open(path) as fh:
        cols = fh.readline().rstrip("\n").split(",")
        n = sum(1 for c in cols if re.fullmatch(r"x\d+", c))
        if n == 0 or cols != trace_columns(n):
            raise ValueError(f"{path}: header does not match the trace schema")
        with warnings.catch_warnings():
            # a header-only file is a valid empty trace
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(cols)))
    return Trace(n=n, data=data)


def expand_signals(trace: Trace, signals: Sequence[str]) -> list[str]:
    """Resolve column names; a per-subsystem prefix (``ebar``) expands to all channels."""
    out = []
    for s in signals:
        s = s.strip()
        if not s:
            continue
        if s in trace.columns:
            out.append(s)
        elif f"{s}1" in trace.columns:
            out += [f"{s}{i}" for i in range(1, trace.n + 1)]
        else:
            raise ValueError(f"unknown signal {s!r}")
    if not out:
        raise ValueError("no signals selected")
    return out


def render(trace: Trace, signals: Sequence[str]):
    """Figure with the selected columns against time, one panel each.

    Tracking errors ``ebar_i`` are drawn with their ``+/- o_i`` envelopes.
    """
    cols = expand_signals(trace, signals)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(cols), 1, sharex=True, figsize=(8, 2.2 * len(cols)), squeeze=False)
    t = trace.t
    for ax, c in zip(axes[:, 0], cols):
        ax.plot(t, trace[c], lw=1.0, label=c)
        m = re.fullmatch(r"ebar(\d+)", c)
        if m:
            o = trace[f"o{m.group(1)}"]
            ax.plot(t, o, "k--", lw=0.8, label=f"+/-o{m.group(1)}")
            ax.plot(t, -o, "k--", lw=0.8)
        ax.set_ylabel(c)
        ax.legend(loc="upper right", fontsize="small")
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("t [s]")
    fig.tight_layout()
    return fig


def plot(trace: Trace, signals: Sequence[str], path: str | os.PathLike) -> list[str]:
    """Save :func:`render` output to ``path``; returns the plotted columns."""
    import matplotlib.pyplot as plt

    fig = render(trace, signals)
    fig.savefig(path)
    plt.close(fig)
    return expand_signals(trace, signals)
