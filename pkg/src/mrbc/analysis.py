"""Offline Lyapunov monitors over a simulated trace.

Everything here is read-only over a :class:`~mrbc.simulation.Trace`. The
monitors check the decay inequalities numerically along the recorded
trajectory; they use the ground-truth uncertainty columns (``dstar``,
``gamma``) that the controller itself never sees.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .hacblf import EnvelopeViolation, HacBlfConfig
from .hae import HaeConfig
from .simulation import Trace

ABS_TOL = 1e-6
REL_TOL = 1e-3
DECAY_FLOOR = 1e-12


class PositivityError(ValueError):
    """Gains violate a precondition needed for a positive decay rate."""


def _tol(rhs):
    return ABS_TOL + REL_TOL * np.abs(rhs)


# -- Lyapunov functions ------------------------------------------------------

def v_ob(e, psi):
    """Estimator energy ``sum(0.5 * (e_i^2 + psi_i^2))`` over the last axis."""
    e = np.asarray(e, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return 0.5 * np.sum(e * e + psi * psi, axis=-1)


def _log_barrier(e_bar, o):
    # vectorized hacblf.log_barrier: log(o^2/Q) per channel, +inf outside the envelope
    e_bar = np.asarray(e_bar, dtype=float)
    o = np.asarray(o, dtype=float)
    q = o * o - e_bar * e_bar
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(e_bar * e_bar / q)
    return np.where(q > 0, out, np.inf)


def v_cont(e_bar, o, theta):
    """Barrier energy ``sum(0.5 * log(o_i^2 / Q_i) + 0.5 * theta_i^2)``.

    Raises :class:`EnvelopeViolation` if any ``|e_bar_i| >= o_i``.
    """
    e_bar = np.asarray(e_bar, dtype=float)
    o = np.asarray(o, dtype=float)
    theta = np.asarray(theta, dtype=float)
    bad = np.abs(e_bar) >= o
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        ch = int(idx[-1])
        raise EnvelopeViolation(ch + 1, math.nan, float(e_bar[tuple(idx)]), float(o[tuple(idx)]))
    return np.sum(0.5 * _log_barrier(e_bar, o) + 0.5 * theta * theta, axis=-1)


def v_all(e, psi, e_bar, o, theta):
    return v_ob(e, psi) + v_cont(e_bar, o, theta)


def connectors(e):
    """Estimator connectors ``s_i = e_i * e_{i+1}``, length ``n - 1``."""
    e = np.asarray(e, dtype=float)
    return e[..., :-1] * e[..., 1:]


def connectors_bar(e_bar, Q):
    """Controller connectors ``(e_bar_i / Q_i) * e_bar_{i+1}``, length ``n - 1``."""
    e_bar = np.asarray(e_bar, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return (e_bar[..., :-1] / Q[..., :-1]) * e_bar[..., 1:]


def connector_residuals(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample sum of connector terms over the subsystem-wise rate decomposition.

    Subsystem ``i`` picks up ``+e_i e_{i+1}`` from its own dynamics and
    ``-e_i e_{i-1}`` from the coupling term of its modeling law; the
    controller side is built the same way from ``e_bar`` and ``Q``, with the
    lower-coupling term written as it appears in the compensation law
    (``(e_bar_i/Q_i) * (Q_i/Q_{i-1}) * e_bar_{i-1}``). Both sums vanish for a
    correct decomposition.
    """
    e = trace.block("e")
    eb = trace.block("ebar")
    q = trace.block("Q")
    n = trace.n
    ob = np.zeros(len(trace))
    cont = np.zeros(len(trace))
    r = eb / q
    for k in range(n):
        c_ob = np.zeros(len(trace))
        c_cont = np.zeros(len(trace))
        if k < n - 1:
            c_ob += e[:, k] * e[:, k + 1]
            c_cont += r[:, k] * eb[:, k + 1]
        if k > 0:
            c_ob -= e[:, k] * e[:, k - 1]
            c_cont -= r[:, k] * (q[:, k] / q[:, k - 1]) * eb[:, k - 1]
        ob += c_ob
        cont += c_cont
    return ob, cont


# -- decay parameters --------------------------------------------------------

def _vec(values, n, name):
    if values is None:
        return None
    v = tuple(float(a) for a in np.broadcast_to(np.asarray(values, dtype=float), (n,)))
    if any(not a > 0 for a in v):
        raise PositivityError(f"{name} must be positive")
    return v


def ell_ob_series(trace: Trace, delta: Sequence[float], zeta: Sequence[float]) -> np.ndarray:
    """Instantaneous ``sum(d*_i^2/(2 delta_i) + Gamma_i^2/(2 zeta_i))``."""
    d = trace.block("dstar")
    g = trace.block("gamma")
    return np.sum(d * d / (2.0 * np.asarray(delta)) + g * g / (2.0 * np.asarray(zeta)), axis=1)


def ell_cont_series(trace: Trace, v_n: float) -> np.ndarray:
    """Instantaneous saturation term ``delta_u^2 / (2 v_n Q_n)``."""
    du = trace["delta_u"]
    return du * du / (2.0 * v_n * trace[f"Q{trace.n}"])


def decay_params_ob(cfg: HaeConfig, trace: Trace, delta: Sequence[float] | None = None,
                    zeta: Sequence[float] | None = None) -> tuple[float, float]:
    """Decay rate and uncertainty level of the estimator energy.

    ``delta`` and ``zeta`` default to ``lambda / 4`` per channel. Raises
    :class:`PositivityError` if ``lambda_i <= delta_i + zeta_i``.
    """
    n = cfg.n
    lam = cfg.lam
    delta = _vec(delta, n, "delta") or tuple(l / 4.0 for l in lam)
    zeta = _vec(zeta, n, "zeta") or tuple(l / 4.0 for l in lam)
    for k in range(n):
        if not lam[k] > delta[k] + zeta[k]:
            raise PositivityError(f"lambda_{k + 1} = {lam[k]} must exceed delta + zeta = {delta[k] + zeta[k]}")
    rho = min(min(lam[k] - delta[k] - zeta[k], 2.0 * cfg.beta[k]) for k in range(n))
    if len(trace) == 0:
        return rho, 0.0
    d = trace.block("dstar")
    g = trace.block("gamma")
    per = np.max(d * d / (2.0 * np.asarray(delta)) + g * g / (2.0 * np.asarray(zeta)), axis=0)
    return rho, float(np.sum(per))


def decay_params_cont(cfg: HacBlfConfig, trace: Trace, v_n: float | None = None) -> tuple[float, float]:
    """Decay rate and saturation level of the barrier energy.

    ``v_n`` defaults to ``gamma_n / 2``. Raises :class:`PositivityError`
    unless ``0 < v_n < gamma_n``.
    """
    n = cfg.n
    v = cfg.gamma[-1] / 2.0 if v_n is None else float(v_n)
    if not 0.0 < v < cfg.gamma[-1]:
        raise PositivityError(f"need 0 < v_n < gamma_n = {cfg.gamma[-1]}, got {v}")
    rho = min(min(cfg.gamma[k] - (v if k == n - 1 else 0.0), 2.0 * cfg.kappa[k]) for k in range(n))
    if len(trace) == 0:
        return rho, 0.0
    return rho, float(np.max(ell_cont_series(trace, v)))


# -- trace-level energies ----------------------------------------------------

def trace_energies(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """``(V_ob, V_cont)`` at every sample (``V_cont`` is inf past an envelope)."""
    vo = v_ob(trace.block("e"), trace.block("psi"))
    th = trace.block("theta")
    vc = np.sum(0.5 * _log_barrier(trace.block("ebar"), trace.block("o")) + 0.5 * th * th, axis=1)
    return vo, vc


def _fraction(ok: np.ndarray) -> float:
    return float(np.mean(ok)) if ok.size else 1.0


def check_bound_ob(trace: Trace, rho_ob: float, ell_ob) -> float:
    """Fraction of samples with ``|e| <= sqrt(2 V0) exp(-rho t/2) + sqrt(2 ell/rho) + tol``."""
    if len(trace) == 0:
        return 1.0
    vo, _ = trace_energies(trace)
    t = trace.t - trace.t[0]
    lhs = np.linalg.norm(trace.block("e"), axis=1)
    rhs = math.sqrt(2.0 * vo[0]) * np.exp(-0.5 * rho_ob * t) + np.sqrt(2.0 * np.asarray(ell_ob) / rho_ob)
    return _fraction(lhs <= rhs + _tol(rhs))


def check_bound_cont(trace: Trace, rho_cont: float, ell_cont) -> float:
    """Fraction of samples with ``sum log(o^2/Q) <= 2 V0 exp(-rho t) + 2 ell/rho + tol``."""
    if len(trace) == 0:
        return 1.0
    _, vc = trace_energies(trace)
    t = trace.t - trace.t[0]
    lhs = np.sum(_log_barrier(trace.block("ebar"), trace.block("o")), axis=1)
    rhs = 2.0 * vc[0] * np.exp(-rho_cont * t) + 2.0 * np.asarray(ell_cont) / rho_cont
    return _fraction(lhs <= rhs + _tol(rhs))


def check_bound_all(trace: Trace, rho_all: float, ell_all) -> float:
    """Fraction of samples with ``sum(e^2 + log(o^2/Q)) <= 2 V0 exp(-rho t) + 2 ell/rho + tol``."""
    if len(trace) == 0:
        return 1.0
    vo, vc = trace_energies(trace)
    t = trace.t - trace.t[0]
    e = trace.block("e")
    lhs = np.sum(e * e + _log_barrier(trace.block("ebar"), trace.block("o")), axis=1)
    rhs = 2.0 * (vo[0] + vc[0]) * np.exp(-rho_all * t) + 2.0 * np.asarray(ell_all) / rho_all
    return _fraction(lhs <= rhs + _tol(rhs))


def rate_residuals(trace: Trace, rho: float, ell, which: str = "ob") -> tuple[np.ndarray, np.ndarray]:
    """Central-difference ``dV/dt`` and the bound ``-rho V + ell`` on interior samples."""
    if which not in ("ob", "cont", "all"):
        raise ValueError(f"which must be ob, cont or all, got {which!r}")
    vo, vc = trace_energies(trace)
    v = {"ob": vo, "cont": vc, "all": vo + vc}[which]
    t = trace.t
    if len(t) < 3:
        return np.empty(0), np.empty(0)
    vdot = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    ell = np.broadcast_to(np.asarray(ell, dtype=float), v.shape)
    rhs = -rho * v[1:-1] + ell[1:-1]
    return vdot, rhs


def check_lyapunov_rate(trace: Trace, rho: float, ell, which: str = "ob") -> float:
    """Fraction of interior samples where ``dV/dt <= -rho V + ell(t) + tol``.

    ``ell`` may be a scalar or a per-sample array (instantaneous level).
    """
    vdot, rhs = rate_residuals(trace, rho, ell, which)
    return _fraction(vdot <= rhs + _tol(rhs))


def fit_decay_rate(t, values, floor: float = DECAY_FLOOR) -> float:
    """Least-squares exponential rate of a decaying series.

    Fits ``log(value)`` against ``t`` over the initial run of samples that
    stay above ``floor`` and returns the negated slope.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("t and values must be 1-D and of equal length")
    below = np.flatnonzero(~(v > floor))
    end = below[0] if below.size else v.size
    if end < 2:
        raise ValueError("need at least two samples above the floor")
    slope = np.polyfit(t[:end], np.log(v[:end]), 1)[0]
    return float(-slope) + 0.0


# -- report ------------------------------------------------------------------

@dataclass
class StabilityReport:
    rho_ob: float
    ell_ob: float
    rho_cont: float
    ell_cont: float
    rho_all: float
    ell_all: float
    bound_ob_ok: float
    bound_cont_ok: float
    bound_all_ok: float
    rate_ob_ok: float
    rate_cont_ok: float
    rate_all_ok: float
    fitted_decay: float
    # sqrt(2 ell_all / rho_all), the rooted radius reported next to the un-rooted check
    radius_all: float
    connector_residual: float
    steady_e_norm: float
    steady_ebar_abs: float
    steady_log_barrier: float
    sup_abs_fstar_n: float
    sup_abs_e_n: float
    sup_abs_u: float
    sup_abs_delta_u: float
    verdict: str = "completed"
    violations: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if k == "violations":
                v = "; ".join(v) if v else "none"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f for f in cls.__dataclass_fields__ if f != "violations"] + ["violations"]

    def csv_row(self) -> list[str]:
        d = self.as_dict()
        out = [repr(d[k]) if isinstance(d[k], float) else str(d[k]) for k in self.csv_header()[:-1]]
        out.append("; ".join(self.violations))
        return out


def steady_slice(trace: Trace, fraction: float) -> slice:
    """Trailing ``fraction`` of the samples (at least one)."""
    n = len(trace)
    return slice(min(n - 1, int(math.floor(n * (1.0 - fraction)))) if n else 0, n)


def _sup(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def analyze(trace: Trace, hae: HaeConfig, hac: HacBlfConfig, *, delta=None, zeta=None,
            v_n: float | None = None, steady_fraction: float = 0.2, verdict: str | None = None) -> StabilityReport:
    """Run every monitor on ``trace`` and collect a :class:`StabilityReport`."""
    n = trace.n
    delta = _vec(delta, n, "delta") or tuple(l / 4.0 for l in hae.lam)
    zeta = _vec(zeta, n, "zeta") or tuple(l / 4.0 for l in hae.lam)
    v = hac.gamma[-1] / 2.0 if v_n is None else float(v_n)
    rho_ob, ell_ob = decay_params_ob(hae, trace, delta, zeta)
    rho_c, ell_c = decay_params_cont(hac, trace, v)
    rho_all = min(rho_ob, rho_c)
    ell_all = ell_ob + ell_c

    empty = len(trace) == 0
    inst_ob = ell_ob_series(trace, delta, zeta) if not empty else 0.0
    inst_c = ell_cont_series(trace, v) if not empty else 0.0
    checks = {
        "bound_ob": check_bound_ob(trace, rho_ob, ell_ob),
        "bound_cont": check_bound_cont(trace, rho_c, ell_c),
        "bound_all": check_bound_all(trace, rho_all, ell_all),
        "rate_ob": check_lyapunov_rate(trace, rho_ob, inst_ob, "ob") if not empty else 1.0,
        "rate_cont": check_lyapunov_rate(trace, rho_c, inst_c, "cont") if not empty else 1.0,
        "rate_all": check_lyapunov_rate(trace, rho_all, inst_ob + inst_c, "all") if not empty else 1.0,
    }
    violations = [f"{k}: {1.0 - f:.3%} of samples fail" for k, f in checks.items() if f < 1.0]
    status = verdict if verdict is not None else trace.meta.get("verdict", "completed")
    if status != "completed":
        violations.insert(0, f"run ended with {status}")

    if empty:
        fitted = 0.0
        res = 0.0
        steady = {k: math.nan for k in ("e", "eb", "log")}
    else:
        e_norm = np.linalg.norm(trace.block("e"), axis=1)
        try:
            fitted = fit_decay_rate(trace.t, e_norm)
        except ValueError:
            fitted = 0.0
        r_ob, r_c = connector_residuals(trace)
        res = max(_sup(r_ob), _sup(r_c))
        ss = steady_slice(trace, steady_fraction)
        steady = {
            "e": _sup(e_norm[ss]),
            "eb": _sup(trace.block("ebar")[ss]),
            "log": float(np.max(np.sum(_log_barrier(trace.block("ebar")[ss], trace.block("o")[ss]), axis=1))),
        }

    return StabilityReport(
        rho_ob=rho_ob, ell_ob=ell_ob, rho_cont=rho_c, ell_cont=ell_c,
        rho_all=rho_all, ell_all=ell_all,
        bound_ob_ok=checks["bound_ob"], bound_cont_ok=checks["bound_cont"], bound_all_ok=checks["bound_all"],
        rate_ob_ok=checks["rate_ob"], rate_cont_ok=checks["rate_cont"], rate_all_ok=checks["rate_all"],
        fitted_decay=fitted,
        radius_all=math.sqrt(2.0 * ell_all / rho_all),
        connector_residual=res,
        steady_e_norm=steady["e"], steady_ebar_abs=steady["eb"], steady_log_barrier=steady["log"],
        sup_abs_fstar_n=_sup(trace[f"fstar{n}"]) if not empty else 0.0,
        sup_abs_e_n=_sup(trace[f"e{n}"]) if not empty else 0.0,
        sup_abs_u=_sup(trace["u_sat"]) if not empty else 0.0,
        sup_abs_delta_u=_sup(trace["delta_u"]) if not empty else 0.0,
        verdict=status,
        violations=violations,
    )


def analyze_config(trace: Trace, cfg) -> StabilityReport:
    """:func:`analyze` with gains and free constants taken from a scenario config.

    A trace without a recorded verdict (e.g. read back from CSV) counts as
    ``incomplete`` when it stops short of ``t_end``.
    """
    verdict = trace.meta.get("verdict")
    if verdict is None:
        reached = len(trace) > 0 and abs(trace.t[-1] - cfg.t_end) <= 0.5 * cfg.dt
        verdict = "completed" if reached else "incomplete"
    return analyze(trace, cfg.hae, cfg.hacblf, delta=cfg.deltas(), zeta=cfg.zetas(), v_n=cfg.v_n(),
                   steady_fraction=cfg.analysis.steady_fraction, verdict=verdict)
