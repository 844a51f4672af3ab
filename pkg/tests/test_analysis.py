import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import make_trace
from mrbc.analysis import (
    PositivityError,
    StabilityReport,
    analyze,
    analyze_config,
    check_bound_cont,
    check_bound_ob,
    check_lyapunov_rate,
    connector_residuals,
    connectors,
    connectors_bar,
    decay_params_cont,
    decay_params_ob,
    fit_decay_rate,
    steady_slice,
    v_all,
    v_cont,
    v_ob,
)
from mrbc.hacblf import EnvelopeParams, EnvelopeViolation, HacBlfConfig
from mrbc.hae import HaeConfig
from mrbc.simulation import Trace

HAE = HaeConfig(xi=(0.08, 0.08), lam=(500.0, 500.0), beta=(0.8, 0.8))
ENV = EnvelopeParams(0.2, 0.01, 1.0)
HAC = HacBlfConfig(gamma=(40.0, 40.0), epsilon=(0.8, 0.8), kappa=(1.0, 1.0), envelopes=(ENV, ENV),
                   u_min=-1.0, u_max=1.0)
T = np.linspace(0.0, 5.0, 501)


def test_v_ob():
    assert v_ob([1.0], [0.0]) == 0.5
    assert v_ob([1.0, 1.0], [1.0, 1.0]) == 2.0
    assert np.allclose(v_ob([[1.0], [2.0]], [[0.0], [0.0]]), [0.5, 2.0])


def test_v_cont():
    assert v_cont([0.5], [1.0], [0.0]) == pytest.approx(0.5 * math.log(1 / 0.75), abs=1e-12)
    assert v_cont([0.5], [1.0], [0.0]) == pytest.approx(0.143841, abs=1e-6)
    assert v_cont([0.0, 0.0], [1.0, 1.0], [math.sqrt(2), math.sqrt(2)]) == pytest.approx(2.0)
    with pytest.raises(EnvelopeViolation):
        v_cont([0.0, 1.0], [1.0, 1.0], [0.0, 0.0])


def test_v_all():
    assert v_all([1.0], [0.0], [0.5], [1.0], [0.0]) == pytest.approx(0.643841, abs=1e-6)


def test_connectors():
    assert connectors([1.0, 2.0, 3.0]).tolist() == [2.0, 6.0]
    assert connectors([4.0]).size == 0
    assert connectors_bar([1.0, 2.0], [0.5, 1.0]).tolist() == [4.0]


@given(hnp.arrays(float, (7, 3), elements=st.floats(-1, 1)),
       hnp.arrays(float, (7, 3), elements=st.floats(-0.9, 0.9)))
def test_connector_residuals_vanish(e, eb):
    o = np.ones_like(eb)
    tr = make_trace(3, np.arange(7.0), **{f"e{i + 1}": e[:, i] for i in range(3)},
                    **{f"ebar{i + 1}": eb[:, i] for i in range(3)},
                    **{f"Q{i + 1}": (o * o - eb * eb)[:, i] for i in range(3)},
                    **{f"o{i + 1}": 1.0 for i in range(3)})
    ob, cont = connector_residuals(tr)
    assert np.max(np.abs(ob)) <= 1e-15
    assert np.max(np.abs(cont)) <= 1e-12


def test_decay_params_reference_gains():
    tr = make_trace(2, T, o1=0.1, o2=0.1, Q1=0.01, Q2=0.01)
    assert decay_params_ob(HAE, tr) == (1.6, 0.0)
    assert decay_params_cont(HAC, tr) == (2.0, 0.0)


def test_decay_params_levels():
    hae = HaeConfig(xi=(1.0,), lam=(8.0,), beta=(3.0,))
    tr = make_trace(1, T, dstar1=1.0, gamma1=2.0, o1=1.0, Q1=0.5, delta_u=np.linspace(0, 1, T.size))
    # min(8 - 2 - 2, 6); 1/(2*2) + 4/(2*2)
    assert decay_params_ob(hae, tr) == (4.0, 1.25)
    hac = HacBlfConfig(gamma=(4.0,), epsilon=(1.0,), kappa=(0.5,), envelopes=(ENV,), u_min=-1, u_max=1)
    # min(4 - 2, 1); 1 / (2 * 2 * 0.5)
    assert decay_params_cont(hac, tr) == (1.0, 0.5)


def test_decay_params_empty_trace():
    tr = Trace(n=2, data=np.empty((0, len(make_trace(2, [0.0]).columns))))
    assert decay_params_ob(HAE, tr) == (1.6, 0.0)


def test_positivity_preconditions():
    tr = make_trace(2, T)
    with pytest.raises(PositivityError):
        decay_params_ob(HAE, tr, delta=(250.0, 250.0), zeta=(250.0, 250.0))
    with pytest.raises(PositivityError):
        decay_params_ob(HAE, tr, delta=(0.0, 1.0))
    with pytest.raises(PositivityError):
        decay_params_cont(HAC, tr, v_n=40.0)
    with pytest.raises(PositivityError):
        decay_params_cont(HAC, tr, v_n=0.0)


def _decaying(a):
    return make_trace(1, T, e1=np.exp(-a * T), o1=1.0, Q1=1.0)


def test_bound_ob_synthetic():
    assert check_bound_ob(_decaying(2.0), 1.6, 0.0) == 1.0
    assert check_bound_ob(_decaying(0.8), 1.6, 0.0) == 1.0
    frac = check_bound_ob(_decaying(0.2), 1.6, 0.0)
    assert 0.0 < frac < 0.1


def test_rate_synthetic():
    # V = e^2/2 decays at 2a
    assert check_lyapunov_rate(_decaying(2.0), 1.6, 0.0, "ob") == 1.0
    assert check_lyapunov_rate(_decaying(0.2), 1.6, 0.0, "ob") < 0.05
    # a level ell lifts the bound
    assert check_lyapunov_rate(_decaying(0.2), 1.6, 1.0, "ob") == 1.0
    with pytest.raises(ValueError):
        check_lyapunov_rate(_decaying(1.0), 1.0, 0.0, "nope")


def test_bound_cont_synthetic():
    o = 1.0
    eb = 0.5 * np.exp(-2.0 * T)
    tr = make_trace(1, T, ebar1=eb, o1=o, Q1=o * o - eb * eb)
    assert check_bound_cont(tr, 2.0, 0.0) == 1.0
    tr_slow = make_trace(1, T, ebar1=0.5 * np.exp(-0.1 * T), o1=o)
    assert check_bound_cont(tr_slow, 2.0, 0.0) < 0.1


def test_fit_decay_rate():
    assert fit_decay_rate(T, 3.0 * np.exp(-2.0 * T)) == pytest.approx(2.0, rel=1e-9)
    assert fit_decay_rate(T, np.full(T.size, 0.7)) == pytest.approx(0.0, abs=1e-12)
    v = np.exp(-0.5 * T)
    v[300:] = 0.0
    assert fit_decay_rate(T, v) == pytest.approx(0.5, rel=1e-9)
    with pytest.raises(ValueError):
        fit_decay_rate(T, np.zeros(T.size))
    with pytest.raises(ValueError):
        fit_decay_rate(T, np.ones(3))


def test_steady_slice():
    tr = make_trace(1, np.arange(10.0))
    assert steady_slice(tr, 0.2) == slice(8, 10)
    assert steady_slice(tr, 1.0) == slice(0, 10)
    assert steady_slice(make_trace(1, [0.0]), 0.01) == slice(0, 1)


def test_report_on_clean_run(bundled_run):
    cfg, trace, _ = bundled_run("clean")
    rep = analyze_config(trace, cfg)
    assert rep.verdict == "completed"
    assert rep.rho_ob == 1.6 and rep.rho_cont == 2.0 and rep.rho_all == 1.6
    assert rep.ell_ob == 0.0
    assert rep.bound_ob_ok == 1.0
    assert rep.connector_residual <= 1e-12
    # matching errors decay at lambda / 2 once the adaptation states are negligible
    assert rep.fitted_decay == pytest.approx(250.0, rel=1e-3)
    assert rep.radius_all == pytest.approx(math.sqrt(2 * rep.ell_all / rep.rho_all))
    text = rep.to_text()
    assert "rho_ob = 1.6\n" in text
    assert text.splitlines()[-1].startswith("violations = ")
    assert len(StabilityReport.csv_header()) == len(rep.csv_row())


def test_report_flags_incomplete_trace(bundled_run):
    cfg, trace, _ = bundled_run("clean")
    cut = Trace(n=trace.n, data=trace.data[:100])
    rep = analyze_config(cut, cfg)
    assert rep.verdict == "incomplete"
    assert rep.violations[0] == "run ended with incomplete"


def test_analyze_empty_trace():
    tr = Trace(n=2, data=np.empty((0, len(make_trace(2, [0.0]).columns))))
    rep = analyze(tr, HAE, HAC)
    assert rep.bound_ob_ok == 1.0 and rep.rate_all_ok == 1.0
    assert rep.fitted_decay == 0.0
