"""Fixed-step closed-loop integration of plant, estimators and controllers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hacblf import Q_GUARD, EnvelopeViolation, HacBlfConfig, HacBlfState, envelope
from .hae import HaeConfig, HaeState
from .plant import NumericFailure, PlantModel, effective_uncertainty
from .scenario import ScenarioConfig, build_plant

Trajectory = Callable[[float], tuple[float, float]]


class InadmissibleStart(ValueError):
    pass


def trace_columns(n: int) -> list[str]:
    """CSV column order of a trace for an order-``n`` plant."""
    r = range(1, n + 1)
    cols = ["t"]
    for prefix in ("x", "xhat", "e", "ebar", "xd"):
        cols += [f"{prefix}{i}" for i in r]
    cols += ["u_raw", "u_sat", "delta_u", "F_L"]
    for prefix in ("o", "Q", "psi", "theta", "fstar", "fbar", "dstar", "gamma", "xdfilt"):
        cols += [f"{prefix}{i}" for i in r]
    return cols


@dataclass
class SimState:
    t: float
    x: list[float]
    hae: HaeState
    hacblf: HacBlfState


@dataclass
class Verdict:
    status: str = "completed"  # completed | envelope_violation | numeric_failure
    index: int | None = None
    t: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "completed"


@dataclass
class Trace:
    """Column-oriented run record; ``data[k]`` is the row logged at ``t_k``."""

    n: int
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = trace_columns(self.n)
        self._index = {c: k for k, c in enumerate(self.columns)}
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError(f"trace data must have {len(self.columns)} columns")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self._index[name]]

    def block(self, prefix: str) -> np.ndarray:
        """``(len, n)`` array of the per-subsystem columns ``prefix1..n``."""
        start = self._index[f"{prefix}1"]
        return self.data[:, start:start + self.n]

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    def row(self, k: int) -> dict[str, float]:
        return dict(zip(self.columns, self.data[k].tolist()))


class ClosedLoop:
    """One evaluation of the full MRBC loop at a given state.

    The packed state is ``[x (n), x_hat (n), psi (n), theta (n)]``; the
    derivative-filter memory ``z`` is passed separately because it only moves
    once per outer step.
    """

    def __init__(self, model: PlantModel, hae: HaeConfig, hac: HacBlfConfig,
                 trajectory: Trajectory, tau_f: float):
        if not (model.n == hae.n == hac.n):
            raise ValueError("plant, estimator and controller orders differ")
        self.model = model
        self.hae = hae
        self.hac = hac
        self.trajectory = trajectory
        self.tau_f = tau_f
        self.n = model.n
        self._cache: dict[float, tuple] = {}
        self._xi = hae.xi
        self._half_lam = tuple(0.5 * v for v in hae.lam)
        self._beta = hae.beta
        self._half_gamma = tuple(0.5 * v for v in hac.gamma)
        self._eps = hac.epsilon
        self._kappa = hac.kappa
        self._g = model.uncertainty.g
        self._d = model.uncertainty.d

    def _time_terms(self, t: float):
        """Reference, envelopes and disturbances at ``t``; RK4 revisits each stage time."""
        hit = self._cache.get(t)
        if hit is None:
            if len(self._cache) > 4:
                self._cache.clear()
            xd1, xd1_dot = self.trajectory(t)
            o = [envelope(t, p) for p in self.hac.envelopes]
            gam = [g(t) for g in self.model.uncertainty.gamma]
            hit = self._cache[t] = (xd1, xd1_dot, o, gam)
        return hit

    def _controller(self, t: float, x, xh, psi, theta, z, init_filter: bool = False):
        # Inlined composition of hae.modeling_term, hacblf.ff_compensation,
        # reference_chain and control_law; tests pin it to those functions.
        n = self.n
        xi, half_lam = self._xi, self._half_lam
        half_gamma, eps = self._half_gamma, self._eps
        known = self.model.known_terms
        inv_tau = 1.0 / self.tau_f
        xd1, xd1_dot, o, _ = self._time_terms(t)

        e = [0.0] * n
        f_star = [0.0] * n
        xd = [0.0] * n
        ebar = [0.0] * n
        Q = [0.0] * n
        fbar = [0.0] * n
        fk = [0.0] * n
        xd[0] = xd1
        xd_dot = xd1_dot
        e_prev = eb_prev = q_prev = 0.0
        u = 0.0
        for k in range(n):
            ek = x[k] - xh[k]
            fk[k] = known[k](x, t)
            fs = fk[k] + xi[k] * psi[k] * ek + half_lam[k] * ek + e_prev
            eb = xh[k] - xd[k]
            ok = o[k]
            q = ok * ok - eb * eb
            if not q >= Q_GUARD or abs(eb) >= ok:
                raise EnvelopeViolation(k + 1, t, eb, ok)
            fb = -half_gamma[k] * eb - eps[k] * theta[k] * eb / q
            if k:
                fb -= q / q_prev * eb_prev
            e[k], f_star[k], ebar[k], Q[k], fbar[k] = ek, fs, eb, q, fb
            if k < n - 1:
                nxt = xd_dot + fb - fs
                xd[k + 1] = nxt
                if init_filter:
                    z[k + 1] = nxt
                xd_dot = (nxt - z[k + 1]) * inv_tau
            else:
                u = xd_dot + fb - fs
            e_prev, eb_prev, q_prev = ek, eb, q
        if not math.isfinite(u):
            raise NumericFailure(n, t, "control input")
        return e, f_star, xd, ebar, o, Q, fbar, u, fk

    def derivative(self, t: float, y: Sequence[float], z: Sequence[float], full: bool = False):
        n = self.n
        x = y[:n]
        xh = y[n:2 * n]
        psi = y[2 * n:3 * n]
        theta = y[3 * n:]
        e, f_star, xd, ebar, o, Q, fbar, u, fk = self._controller(t, x, xh, psi, theta, z)
        u_min, u_max = self.hac.u_min, self.hac.u_max
        u_sat = u_max if u > u_max else (u_min if u < u_min else u)

        g, d = self._g, self._d
        gam = self._time_terms(t)[3]
        xi, beta, kappa, eps = self._xi, self._beta, self._kappa, self._eps
        dx = [0.0] * n
        dxh = [0.0] * n
        dpsi = [0.0] * n
        dth = [0.0] * n
        last = n - 1
        for k in range(n):
            nxt = u_sat if k == last else x[k + 1]
            v = g[k](x, t) * nxt + fk[k] + d[k](x, t) + gam[k]
            if not math.isfinite(v):
                raise NumericFailure(k + 1, t, "plant derivative")
            dx[k] = v
            dxh[k] = (u_sat if k == last else xh[k + 1]) + f_star[k]
            ek = e[k]
            dpsi[k] = -beta[k] * psi[k] + xi[k] * ek * ek
            r = ebar[k] / Q[k]
            dth[k] = -kappa[k] * theta[k] + eps[k] * r * r
        dy = dx + dxh + dpsi + dth
        if not full:
            return dy
        model = self.model
        dstar = [effective_uncertainty(x, u_sat if k == last else x[k + 1], t, model, k + 1) for k in range(n)]
        row = [t, *x, *xh, *e, *ebar, *xd, u, u_sat, u_sat - u, model.load_force(t),
               *o, *Q, *psi, *theta, *f_star, *fbar, *dstar, *gam, *z]
        return dy, row, xd

    def init_filter(self, t: float, y: Sequence[float]) -> list[float]:
        """Filter memory that makes every initial desired-state derivative zero."""
        n = self.n
        z = [0.0] * n
        self._controller(t, y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:], z, init_filter=True)
        return z


def closed_loop_derivative(s: SimState, loop: ClosedLoop) -> dict[str, list[float]]:
    """Derivatives of ``x``, ``x_hat``, ``psi`` and ``theta`` at ``s``.

    The same single controller evaluation also yields the logged signals,
    returned under ``"signals"`` keyed by trace column name.
    """
    y = [*s.x, *s.hae.x_hat, *s.hae.psi, *s.hacblf.theta]
    dy, row, _ = loop.derivative(s.t, y, s.hacblf.xd_dot_filtered, full=True)
    n = loop.n
    return {
        "x": dy[:n],
        "x_hat": dy[n:2 * n],
        "psi": dy[2 * n:3 * n],
        "theta": dy[3 * n:],
        "signals": dict(zip(trace_columns(n), row)),
    }


def rk4_step(fun: Callable[[float, list[float]], Sequence[float]], t: float, y: Sequence[float], dt: float,
             k1: Sequence[float] | None = None) -> list[float]:
    """One classical Runge-Kutta step; ``k1`` may be supplied when already known."""
    h2 = 0.5 * dt
    if k1 is None:
        k1 = fun(t, list(y))
    k2 = fun(t + h2, [a + h2 * b for a, b in zip(y, k1)])
    k3 = fun(t + h2, [a + h2 * b for a, b in zip(y, k2)])
    k4 = fun(t + dt, [a + dt * b for a, b in zip(y, k3)])
    h6 = dt / 6.0
    return [a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _advance(loop: ClosedLoop, t: float, y: list[float], z: list[float], dt: float):
    """RK4 step plus one filter update; returns ``(y_next, z_next, row_at_t)``."""
    k1, row, xd = loop.derivative(t, y, z, full=True)

    def f(tt, yy):
        return loop.derivative(tt, yy, z)

    y_next = rk4_step(f, t, y, dt, k1=k1)
    a = dt / loop.tau_f
    z_next = [z[0]] + [zi + a * (xdi - zi) for zi, xdi in zip(z[1:], xd[1:])]
    return y_next, z_next, row


def step(s: SimState, dt: float, loop: ClosedLoop) -> SimState:
    """Advance a SimState by one RK4 step and one derivative-filter update."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = loop.n
    y = [*s.x, *s.hae.x_hat, *s.hae.psi, *s.hacblf.theta]
    z = list(s.hacblf.xd_dot_filtered)
    y_next, z_next, row = _advance(loop, s.t, y, z, dt)
    xd = row[1 + 4 * n:1 + 5 * n]
    return SimState(
        t=s.t + dt,
        x=y_next[:n],
        hae=HaeState(x_hat=y_next[n:2 * n], psi=y_next[2 * n:3 * n]),
        hacblf=HacBlfState(theta=y_next[3 * n:], xd=list(xd), xd_dot_filtered=z_next),
    )


def build_loop(cfg: ScenarioConfig, model: PlantModel | None = None) -> ClosedLoop:
    return ClosedLoop(model or build_plant(cfg), cfg.hae, cfg.hacblf, cfg.trajectory, cfg.filter_tau)


def initial_state(cfg: ScenarioConfig, loop: ClosedLoop | None = None) -> SimState:
    """Initial SimState; raises :class:`InadmissibleStart` if any ``|e_bar_i(t0)| >= o_i(t0)``."""
    loop = loop or build_loop(cfg)
    n = cfg.n
    init = cfg.init
    x = list(init.x0)
    xh = list(init.xhat0) if init.xhat0 is not None else list(x)
    psi = list(init.psi0) if init.psi0 is not None else [0.0] * n
    theta = list(init.theta0) if init.theta0 is not None else [0.0] * n
    y = x + xh + psi + theta
    try:
        z = loop.init_filter(cfg.t0, y)
    except EnvelopeViolation as exc:
        raise InadmissibleStart(
            f"inadmissible start at subsystem {exc.index}: |e_bar_{exc.index}(t0)| = {abs(exc.e_bar):.6g} "
            f">= o_{exc.index}(t0) = {exc.o:.6g}"
        ) from None
    xd = loop._controller(cfg.t0, x, xh, psi, theta, z)[2]
    return SimState(t=cfg.t0, x=x, hae=HaeState(x_hat=xh, psi=psi),
                    hacblf=HacBlfState(theta=theta, xd=list(xd), xd_dot_filtered=z))


def _prepare_time_signals(model: PlantModel, t0: float, dt: float, steps: int) -> None:
    prepared = [g for g in model.uncertainty.gamma if hasattr(g, "prepare")]
    if not prepared:
        return
    # exactly the stage times rk4_step produces
    base = [t0 + k * dt for k in range(steps + 1)]
    h2 = 0.5 * dt
    times = np.array(base + [t + h2 for t in base] + [t + dt for t in base])
    for g in prepared:
        g.prepare(times)


def run(cfg: ScenarioConfig, model: PlantModel | None = None) -> tuple[Trace, Verdict]:
    """Integrate a scenario from ``t0`` to ``t_end``.

    Returns the trace up to the last admissible sample and a verdict; envelope
    violations and numeric failures end the run early instead of raising.
    """
    loop = build_loop(cfg, model)
    n = cfg.n
    dt = cfg.dt
    steps = int(round((cfg.t_end - cfg.t0) / dt))
    _prepare_time_signals(loop.model, cfg.t0, dt, steps)
    meta = {"name": cfg.name, "dt": dt, "seed": cfg.seed}
    try:
        s0 = initial_state(cfg, loop)
    except NumericFailure as exc:
        meta["verdict"] = "numeric_failure"
        empty = np.empty((0, len(trace_columns(n))))
        return Trace(n=n, data=empty, meta=meta), Verdict("numeric_failure", exc.index, exc.t, str(exc))
    data = np.empty((steps + 1, len(trace_columns(n))))
    y = [*s0.x, *s0.hae.x_hat, *s0.hae.psi, *s0.hacblf.theta]
    z = list(s0.hacblf.xd_dot_filtered)
    verdict = Verdict()
    k = 0
    try:
        for k in range(steps):
            t = cfg.t0 + k * dt
            y, z, row = _advance(loop, t, y, z, dt)
            data[k] = row
            if not all(map(math.isfinite, y)):
                raise NumericFailure(0, t + dt, "state")
        k = steps
        data[k] = loop.derivative(cfg.t0 + steps * dt, y, z, full=True)[1]
    except EnvelopeViolation as exc:
        verdict = Verdict("envelope_violation", exc.index, exc.t, str(exc))
    except NumericFailure as exc:
        verdict = Verdict("numeric_failure", exc.index, exc.t, str(exc))
    except (OverflowError, ZeroDivisionError) as exc:
        verdict = Verdict("numeric_failure", None, cfg.t0 + k * dt, str(exc))
    if verdict.ok:
        data = data[: steps + 1]
    else:
        data = data[:k]
    meta["verdict"] = verdict.status
    return Trace(n=n, data=data, meta=meta), verdict
