"""Scenario configuration, reference trajectories and load schedules.

Config files are INI-style text read with :mod:`configparser`; see
``docs/config.md`` in the repository for the full grammar. Vector-valued keys
take comma-separated numbers; a single number is broadcast to every
subsystem.
"""
from __future__ import annotations

import bisect
import configparser
import io
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence

from .hacblf import EnvelopeParams, HacBlfConfig
from .hae import HaeConfig
from .plant import EmlaParams, NumericFailure, PlantModel, band_limited_noise, chain_model, emla_model


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str] | str):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# trajectories


def quintic_trajectory(t: float, x0: float, xf: float, T: float) -> tuple[float, float]:
    """Rest-to-rest quintic blend from ``x0`` to ``xf`` over ``T`` seconds.

    Returns position and velocity; ``t`` outside ``[0, T]`` is clamped.
    """
    if not T > 0:
        raise ValueError(f"quintic duration must be positive, got {T}")
    s = min(max(t / T, 0.0), 1.0)
    h = xf - x0
    s2 = s * s
    s3 = s2 * s
    pos = x0 + h * s3 * (10.0 - 15.0 * s + 6.0 * s2)
    vel = h * 30.0 * s2 * (1.0 - 2.0 * s + s2) / T
    return pos, vel


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "setpoint"
    value: float = 0.0
    start: float = 0.0
    waypoints: tuple[float, ...] = ()
    durations: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("setpoint", "quintic"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "quintic":
            if len(self.waypoints) < 2 or len(self.durations) != len(self.waypoints) - 1:
                raise ValueError("quintic trajectory needs k+1 waypoints for k durations")
            if any(not d > 0 for d in self.durations):
                raise ValueError("quintic segment durations must be positive")

    def __call__(self, t: float) -> tuple[float, float]:
        if self.kind == "setpoint":
            return self.value, 0.0
        tau = t - self.start
        if tau <= 0.0:
            return self.waypoints[0], 0.0
        for k, dur in enumerate(self.durations):
            if tau <= dur:
                return quintic_trajectory(tau, self.waypoints[k], self.waypoints[k + 1], dur)
            tau -= dur
        return self.waypoints[-1], 0.0

    def bound(self) -> float:
        if self.kind == "setpoint":
            return abs(self.value)
        # quintic blends never leave the segment's endpoint interval
        return max(abs(w) for w in self.waypoints)


# ---------------------------------------------------------------------------
# load schedules (fractions of actuator capacity)


@dataclass(frozen=True)
class LoadSpec:
    kind: str = "none"
    # piecewise
    times: tuple[float, ...] = ()
    fractions: tuple[float, ...] = ()
    interp: str = "linear"
    # pulses
    level: float = 0.0
    start: float = 0.0
    dwell: float = 1.0
    period: float = 2.0
    count: int = 1
    rise: float = 0.0
    # sine
    mean: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "piecewise", "pulses", "sine"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if self.kind == "piecewise":
            if len(self.times) != len(self.fractions) or not self.times:
                raise ValueError("piecewise load needs matching non-empty times and fractions")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ValueError("piecewise load times must be strictly increasing")
            if self.interp not in ("linear", "step"):
                raise ValueError("load interp must be 'linear' or 'step'")
        if self.kind == "pulses":
            if not (self.dwell > 0 and self.period >= self.dwell and self.count >= 1 and self.rise >= 0):
                raise ValueError("pulses need dwell > 0, period >= dwell, count >= 1, rise >= 0")
            if 2 * self.rise > self.dwell:
                raise ValueError("pulse rise time must fit twice inside the dwell")

    def fraction(self, t: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "sine":
            return self.mean + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t)
        if self.kind == "piecewise":
            ts, fs = self.times, self.fractions
            if t < ts[0]:
                return fs[0]
            # right limit at breakpoints
            k = bisect.bisect_right(ts, t) - 1
            if k >= len(ts) - 1:
                return fs[-1]
            if self.interp == "step":
                return fs[k]
            w = (t - ts[k]) / (ts[k + 1] - ts[k])
            return fs[k] + w * (fs[k + 1] - fs[k])
        # pulses: trapezoids of height `level`, one every `period`
        tau = t - self.start
        if tau < 0.0:
            return 0.0
        k = int(tau // self.period)
        if k >= self.count:
            return 0.0
        s = tau - k * self.period
        if s >= self.dwell:
            return 0.0
        if self.rise > 0.0:
            if s < self.rise:
                return self.level * s / self.rise
            if s > self.dwell - self.rise:
                return self.level * (self.dwell - s) / self.rise
        return self.level


def load_profile(t: float, spec: LoadSpec, capacity: float) -> float:
    """Load force ``F_L(t)``: the scheduled capacity fraction times ``capacity``."""
    return spec.fraction(t) * capacity


# ---------------------------------------------------------------------------
# config dataclasses


@dataclass(frozen=True)
class PlantSpec:
    kind: str = "emla"
    emla: EmlaParams | None = None
    order: int = 2
    gains: tuple[float, ...] = ()
    known_coeffs: tuple[float, ...] = ()
    hidden_damping: tuple[float, ...] = ()
    disturbance: tuple[float, ...] = ()
    capacity: float = 1.0

    @property
    def n(self) -> int:
        return 2 if self.kind == "emla" else self.order

    @property
    def capacity_value(self) -> float:
        return self.emla.torque_capacity if self.kind == "emla" else self.capacity


@dataclass(frozen=True)
class NoiseSpec:
    gain_ripple: float = 0.0
    ripple_freq: float = 0.0
    std: float = 0.0
    bandwidth: float = 0.0
    components: int = 16


@dataclass(frozen=True)
class InitSpec:
    x0: tuple[float, ...]
    xhat0: tuple[float, ...] | None = None
    psi0: tuple[float, ...] | None = None
    theta0: tuple[float, ...] | None = None


@dataclass(frozen=True)
class AnalysisSpec:
    delta: tuple[float, ...] | None = None
    zeta: tuple[float, ...] | None = None
    v_n: float | None = None
    steady_fraction: float = 0.2


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: PlantSpec
    hae: HaeConfig
    hacblf: HacBlfConfig
    trajectory: TrajectorySpec
    load: LoadSpec
    init: InitSpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    t0: float = 0.0
    t_end: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    eta: tuple[float, ...] | None = None
    tau_f: float | None = None

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def filter_tau(self) -> float:
        return self.tau_f if self.tau_f is not None else 10.0 * self.dt

    def deltas(self) -> tuple[float, ...]:
        return self.analysis.delta or tuple(l / 4.0 for l in self.hae.lam)

    def zetas(self) -> tuple[float, ...]:
        return self.analysis.zeta or tuple(l / 4.0 for l in self.hae.lam)

    def v_n(self) -> float:
        return self.analysis.v_n if self.analysis.v_n is not None else self.hacblf.gamma[-1] / 2.0

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


def build_plant(cfg: ScenarioConfig) -> PlantModel:
    """Instantiate the simulator-side plant (including hidden uncertainty)."""
    spec = cfg.plant
    if spec.kind == "emla":
        cap = spec.emla.torque_capacity
        load = cfg.load

        def load_force(t):
            return load.fraction(t) * cap

        noise = cfg.noise
        sensor = band_limited_noise(noise.std, noise.bandwidth, cfg.seed, noise.components)
        return emla_model(
            spec.emla,
            load_force=load_force,
            gain_ripple=noise.gain_ripple,
            ripple_freq=noise.ripple_freq,
            sensor_noise=sensor,
            noise_seed=cfg.seed,
        )
    return chain_model(
        spec.order,
        gains=spec.gains or None,
        known_coeffs=spec.known_coeffs or None,
        hidden_damping=spec.hidden_damping or None,
        disturbance=spec.disturbance or None,
        capacity=spec.capacity,
    )


# ---------------------------------------------------------------------------
# parsing / serialization

_SCENARIO_KEYS = {"name", "t0", "t_end", "dt", "seed", "eta", "tau_f"}
_EMLA_KEYS = {"kind", "I_eq", "B_eq", "K_eq", "f_eq", "torque_capacity"}
_CHAIN_KEYS = {"kind", "order", "gains", "known_coeffs", "hidden_damping", "disturbance", "capacity"}
_NOISE_KEYS = {"gain_ripple", "ripple_freq", "std", "bandwidth", "components"}
_HAE_KEYS = {"xi", "lambda", "beta"}
_HAC_KEYS = {"gamma", "epsilon", "kappa", "u_min", "u_max"}
_ENV_KEYS = {"o_shoot", "o_bound", "o_rate"}
_TRAJ_KEYS = {
    "setpoint": {"kind", "value"},
    "quintic": {"kind", "start", "waypoints", "durations"},
}
_LOAD_KEYS = {
    "none": {"kind"},
    "piecewise": {"kind", "times", "fractions", "interp"},
    "pulses": {"kind", "level", "start", "dwell", "period", "count", "rise"},
    "sine": {"kind", "mean", "amplitude", "frequency"},
}
_INIT_KEYS = {"x0", "xhat0", "psi0", "theta0"}
_ANALYSIS_KEYS = {"delta", "zeta", "v_n", "steady_fraction"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _vec(text: str, n: int, key: str) -> tuple[float, ...]:
    vals = _floats(text)
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} values, got {len(vals)}")
    return vals


def _check_keys(section: str, got, allowed) -> list[str]:
    return [f"unknown key {section}.{k}" for k in got if k not in allowed]


def _new_parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), default_section="__none__")
    p.optionxform = str
    return p


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    p = _new_parser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {s: dict(p[s]) for s in p.sections()}


def from_sections(sec: dict[str, dict[str, str]]) -> ScenarioConfig:
    """Build a config from ``{section: {key: text}}``; raises :class:`ConfigError`."""
    errors: list[str] = []
    required = ("scenario", "plant", "hae", "hacblf", "trajectory", "init")
    for name in required:
        if name not in sec:
            errors.append(f"missing section [{name}]")
    known_sections = set(required) | {"noise", "load", "analysis"}
    env_sections = sorted(s for s in sec if s.startswith("envelope."))
    for s in sec:
        if s not in known_sections and s not in env_sections:
            errors.append(f"unknown section [{s}]")
    if errors:
        raise ConfigError(errors)

    try:
        return _build(sec, env_sections)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build(sec, env_sections) -> ScenarioConfig:
    errors: list[str] = []
    s = sec["scenario"]
    errors += _check_keys("scenario", s, _SCENARIO_KEYS)

    pl = sec["plant"]
    kind = pl.get("kind", "emla")
    if kind == "emla":
        errors += _check_keys("plant", pl, _EMLA_KEYS)
        emla = EmlaParams(**{k: float(pl[k]) for k in _EMLA_KEYS - {"kind"} if k in pl})
        plant = PlantSpec(kind="emla", emla=emla)
    elif kind == "chain":
        errors += _check_keys("plant", pl, _CHAIN_KEYS)
        order = int(pl.get("order", "1"))
        plant = PlantSpec(
            kind="chain",
            order=order,
            gains=_vec(pl["gains"], order, "plant.gains") if "gains" in pl else (),
            known_coeffs=_vec(pl["known_coeffs"], order, "plant.known_coeffs") if "known_coeffs" in pl else (),
            hidden_damping=_vec(pl["hidden_damping"], order, "plant.hidden_damping") if "hidden_damping" in pl else (),
            disturbance=_vec(pl["disturbance"], order, "plant.disturbance") if "disturbance" in pl else (),
            capacity=float(pl.get("capacity", "1.0")),
        )
    else:
        raise ConfigError(f"unknown plant kind {kind!r}")
    n = plant.n

    h = sec["hae"]
    errors += _check_keys("hae", h, _HAE_KEYS)
    hae = HaeConfig(xi=_vec(h["xi"], n, "hae.xi"), lam=_vec(h["lambda"], n, "hae.lambda"), beta=_vec(h["beta"], n, "hae.beta"))

    c = sec["hacblf"]
    errors += _check_keys("hacblf", c, _HAC_KEYS)
    expected_env = [f"envelope.{i}" for i in range(1, n + 1)]
    if env_sections != sorted(expected_env):
        raise ConfigError(f"expected envelope sections {expected_env}, got {env_sections}")
    envs = []
    for name in expected_env:
        e = sec[name]
        errors += _check_keys(name, e, _ENV_KEYS)
        envs.append(EnvelopeParams(float(e["o_shoot"]), float(e["o_bound"]), float(e["o_rate"])))
    hac = HacBlfConfig(
        gamma=_vec(c["gamma"], n, "hacblf.gamma"),
        epsilon=_vec(c["epsilon"], n, "hacblf.epsilon"),
        kappa=_vec(c["kappa"], n, "hacblf.kappa"),
        envelopes=tuple(envs),
        u_min=float(c["u_min"]),
        u_max=float(c["u_max"]),
    )

    tr = sec["trajectory"]
    tkind = tr.get("kind", "setpoint")
    if tkind not in _TRAJ_KEYS:
        raise ConfigError(f"unknown trajectory kind {tkind!r}")
    errors += _check_keys("trajectory", tr, _TRAJ_KEYS[tkind])
    if tkind == "setpoint":
        traj = TrajectorySpec(kind="setpoint", value=float(tr["value"]))
    else:
        traj = TrajectorySpec(
            kind="quintic",
            start=float(tr.get("start", "0")),
            waypoints=_floats(tr["waypoints"]),
            durations=_floats(tr["durations"]),
        )

    ld = sec.get("load", {"kind": "none"})
    lkind = ld.get("kind", "none")
    if lkind not in _LOAD_KEYS:
        raise ConfigError(f"unknown load kind {lkind!r}")
    errors += _check_keys("load", ld, _LOAD_KEYS[lkind])
    lkw: dict = {"kind": lkind}
    for k, v in ld.items():
        if k == "kind":
            continue
        if k in ("times", "fractions"):
            lkw[k] = _floats(v)
        elif k == "interp":
            lkw[k] = v.strip()
        elif k == "count":
            lkw[k] = int(v)
        else:
            lkw[k] = float(v)
    load = LoadSpec(**lkw)

    nz = sec.get("noise", {})
    errors += _check_keys("noise", nz, _NOISE_KEYS)
    noise = NoiseSpec(**{k: (int(v) if k == "components" else float(v)) for k, v in nz.items() if k in _NOISE_KEYS})

    it = sec["init"]
    errors += _check_keys("init", it, _INIT_KEYS)
    init = InitSpec(
        x0=_vec(it["x0"], n, "init.x0"),
        xhat0=_vec(it["xhat0"], n, "init.xhat0") if "xhat0" in it else None,
        psi0=_vec(it["psi0"], n, "init.psi0") if "psi0" in it else None,
        theta0=_vec(it["theta0"], n, "init.theta0") if "theta0" in it else None,
    )

    an = sec.get("analysis", {})
    errors += _check_keys("analysis", an, _ANALYSIS_KEYS)
    analysis = AnalysisSpec(
        delta=_vec(an["delta"], n, "analysis.delta") if "delta" in an else None,
        zeta=_vec(an["zeta"], n, "analysis.zeta") if "zeta" in an else None,
        v_n=float(an["v_n"]) if "v_n" in an else None,
        steady_fraction=float(an.get("steady_fraction", "0.2")),
    )
    if errors:
        raise ConfigError(errors)

    return ScenarioConfig(
        name=s.get("name", "scenario").strip(),
        plant=plant,
        hae=hae,
        hacblf=hac,
        trajectory=traj,
        load=load,
        init=init,
        noise=noise,
        analysis=analysis,
        t0=float(s.get("t0", "0")),
        t_end=float(s["t_end"]),
        dt=float(s.get("dt", "0.001")),
        seed=int(s.get("seed", "0")),
        eta=_vec(s["eta"], n, "scenario.eta") if "eta" in s else None,
        tau_f=float(s["tau_f"]) if "tau_f" in s else None,
    )


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario; raises :class:`ConfigError` listing every problem."""
    cfg = from_sections(parse_sections(text))
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def bundled_config_names() -> list[str]:
    root = resources.files("mrbc") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_config_text(name: str) -> str:
    return (resources.files("mrbc") / "configs" / f"{name}.cfg").read_text(encoding="utf-8")


def bundled_config(name: str) -> ScenarioConfig:
    return parse_config(bundled_config_text(name))


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_sections(cfg: ScenarioConfig) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    s = {"name": cfg.name, "t0": cfg.t0, "t_end": cfg.t_end, "dt": cfg.dt, "seed": cfg.seed}
    if cfg.eta is not None:
        s["eta"] = cfg.eta
    if cfg.tau_f is not None:
        s["tau_f"] = cfg.tau_f
    out["scenario"] = s

    p = cfg.plant
    if p.kind == "emla":
        e = p.emla
        out["plant"] = {"kind": "emla", "I_eq": e.I_eq, "B_eq": e.B_eq, "K_eq": e.K_eq, "f_eq": e.f_eq,
                        "torque_capacity": e.torque_capacity}
    else:
        d = {"kind": "chain", "order": p.order, "capacity": p.capacity}
        for k in ("gains", "known_coeffs", "hidden_damping", "disturbance"):
            if getattr(p, k):
                d[k] = getattr(p, k)
        out["plant"] = d

    nz = cfg.noise
    out["noise"] = {"gain_ripple": nz.gain_ripple, "ripple_freq": nz.ripple_freq, "std": nz.std,
                    "bandwidth": nz.bandwidth, "components": nz.components}
    out["hae"] = {"xi": cfg.hae.xi, "lambda": cfg.hae.lam, "beta": cfg.hae.beta}
    h = cfg.hacblf
    out["hacblf"] = {"gamma": h.gamma, "epsilon": h.epsilon, "kappa": h.kappa, "u_min": h.u_min, "u_max": h.u_max}
    for i, env in enumerate(h.envelopes, start=1):
        out[f"envelope.{i}"] = {"o_shoot": env.o_shoot, "o_bound": env.o_bound, "o_rate": env.o_rate}

    tr = cfg.trajectory
    if tr.kind == "setpoint":
        out["trajectory"] = {"kind": "setpoint", "value": tr.value}
    else:
        out["trajectory"] = {"kind": "quintic", "start": tr.start, "waypoints": tr.waypoints, "durations": tr.durations}

    ld = cfg.load
    keys = sorted(_LOAD_KEYS[ld.kind] - {"kind"})
    out["load"] = {"kind": ld.kind, **{k: getattr(ld, k) for k in keys}}

    it = cfg.init
    d = {"x0": it.x0}
    for k in ("xhat0", "psi0", "theta0"):
        if getattr(it, k) is not None:
            d[k] = getattr(it, k)
    out["init"] = d

    an = cfg.analysis
    d = {"steady_fraction": an.steady_fraction}
    if an.delta is not None:
        d["delta"] = an.delta
    if an.zeta is not None:
        d["zeta"] = an.zeta
    if an.v_n is not None:
        d["v_n"] = an.v_n
    out["analysis"] = d
    return {sec: {k: _fmt(v) for k, v in body.items()} for sec, body in out.items()}


def serialize_config(cfg: ScenarioConfig) -> str:
    p = _new_parser()
    p.read_dict(to_sections(cfg))
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# validation


def validate(cfg: ScenarioConfig, admissibility: bool = True) -> list[str]:
    """Every violated scenario invariant, as human-readable messages (empty when ok).

    ``admissibility=False`` skips the check of the initial tracking errors
    against their envelopes, which needs a controller evaluation.
    """
    errors: list[str] = []
    n = cfg.n
    if not cfg.dt > 0:
        errors.append(f"dt must be positive, got {cfg.dt}")
    if not cfg.t_end >= cfg.t0:
        errors.append(f"t_end ({cfg.t_end}) must not precede t0 ({cfg.t0})")
    if cfg.tau_f is not None and not cfg.tau_f > 0:
        errors.append("tau_f must be positive")
    if cfg.hae.n != n or cfg.hacblf.n != n:
        errors.append(f"gain vectors must have length {n}")
    if len(cfg.init.x0) != n:
        errors.append(f"init.x0 must have {n} entries")
    if cfg.plant.kind == "emla" and cfg.plant.emla is None:
        errors.append("emla plant without parameters")
    if cfg.plant.kind == "chain" and cfg.plant.order < 1:
        errors.append("chain order must be >= 1")
    if not 0 < cfg.analysis.steady_fraction <= 1:
        errors.append("analysis.steady_fraction must lie in (0, 1]")
    for name, seq in (("analysis.delta", cfg.analysis.delta), ("analysis.zeta", cfg.analysis.zeta)):
        if seq is not None and any(not v > 0 for v in seq):
            errors.append(f"{name} entries must be positive")
    if cfg.analysis.v_n is not None and not cfg.analysis.v_n > 0:
        errors.append("analysis.v_n must be positive")
    if cfg.eta is not None:
        if any(not v > 0 for v in cfg.eta):
            errors.append("eta entries must be positive")
        elif cfg.trajectory.bound() > cfg.eta[0]:
            errors.append(f"reference leaves its declared bound: |x_1d| reaches {cfg.trajectory.bound()} > eta_1 = {cfg.eta[0]}")
    if errors or not admissibility:
        return errors

    # admissibility of the initial tracking errors
    from .simulation import InadmissibleStart, initial_state

    try:
        initial_state(cfg)
    except InadmissibleStart as exc:
        errors.append(str(exc))
    except NumericFailure:
        # not a config error; run() reports it as a numeric failure
        pass
    return errors


def envelope_warnings(cfg: ScenarioConfig) -> list[str]:
    """Soft check that each envelope floor exceeds the declared reference bound."""
    if cfg.eta is None:
        return []
    return [
        f"envelope.{i} floor o_bound={env.o_bound} is below reference bound eta_{i}={eta}"
        for i, (env, eta) in enumerate(zip(cfg.hacblf.envelopes, cfg.eta), start=1)
        if env.o_bound <= eta
    ]
