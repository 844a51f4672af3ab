import numpy as np
import pytest

from conftest import make_trace
from mrbc.output import emit, expand_signals, plot, read_trace, render
from mrbc.simulation import trace_columns

EDGE = [0.0, -0.0, 1e-308, 5e-324, -1.7976931348623157e308, 0.1 + 0.2, np.pi, 1 / 3, -2.5e-17]


def test_round_trip_is_bit_exact(tmp_path):
    cols = trace_columns(2)
    rng = np.random.default_rng(0)
    data = rng.standard_normal((20, len(cols))) * 10.0 ** rng.integers(-20, 20, (20, len(cols)))
    data[: len(EDGE), 1] = EDGE
    tr = make_trace(2, np.arange(20) * 1e-3)
    tr.data[:, 1:] = data[:, 1:]
    p = tmp_path / "t.csv"
    emit(tr, p)
    back = read_trace(p)
    assert back.n == 2
    assert back.data.tobytes() == tr.data.tobytes()


def test_single_header_row(tmp_path):
    tr = make_trace(1, [0.0, 0.1])
    p = tmp_path / "t.csv"
    emit(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(trace_columns(1))
    assert len(lines) == 3


def test_single_row_and_empty(tmp_path):
    p = tmp_path / "one.csv"
    emit(make_trace(2, [0.5]), p)
    assert read_trace(p).data.shape == (1, len(trace_columns(2)))
    p = tmp_path / "none.csv"
    emit(make_trace(2, []), p)
    assert len(read_trace(p)) == 0


def test_header_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,x1,y\n0,1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_trace(p)


def test_expand_signals():
    tr = make_trace(2, [0.0])
    assert expand_signals(tr, ["ebar"]) == ["ebar1", "ebar2"]
    assert expand_signals(tr, ["u_sat", " x1 "]) == ["u_sat", "x1"]
    with pytest.raises(ValueError, match="unknown signal"):
        expand_signals(tr, ["nope"])
    with pytest.raises(ValueError, match="no signals"):
        expand_signals(tr, ["", " "])


def test_render_overlays_envelopes():
    t = np.linspace(0, 1, 11)
    tr = make_trace(2, t, ebar1=0.01 * t, o1=0.1, o2=0.2)
    fig = render(tr, ["ebar1", "u_sat"])
    axes = fig.axes
    assert len(axes) == 2
    labels = [line.get_label() for line in axes[0].lines]
    assert "+/-o1" in labels
    assert np.allclose(axes[0].lines[1].get_ydata(), 0.1)
    assert np.allclose(axes[0].lines[2].get_ydata(), -0.1)
    assert len(axes[1].lines) == 1


def test_plot_writes_file(tmp_path):
    tr = make_trace(2, np.linspace(0, 1, 11), o1=0.1, o2=0.2)
    p = tmp_path / "p.png"
    assert plot(tr, ["ebar", "u_sat"], p) == ["ebar1", "ebar2", "u_sat"]
    assert p.stat().st_size > 1000
    with pytest.raises(ValueError):
        plot(tr, [], tmp_path / "q.png")
