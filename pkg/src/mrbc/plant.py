"""Uncertain strict-feedback plants.

A plant of order ``n`` evolves as

    x_i' = g_i x_{i+1} + f_i + d_i + Gamma_i      (i < n)
    x_n' = g_n u       + f_n + d_n + Gamma_n

where ``f_i`` are the known modeling terms handed to the controller and
``(g_i, d_i, Gamma_i)`` form the ground-truth uncertainty profile that only
the simulator and the offline monitors may look at.

Term callables use the signature ``term(x, t)``; ``x`` is the full state
sequence but a well-formed term reads only ``x[:i+1]`` (triangular structure).
Disturbances use ``gamma(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

StateTerm = Callable[[Sequence[float], float], float]
TimeTerm = Callable[[float], float]


class NumericFailure(ArithmeticError):
    """A plant or controller term evaluated to a non-finite number."""

    def __init__(self, index: int, t: float, what: str = "term"):
        self.index = index
        self.t = t
        self.what = what
        super().__init__(f"non-finite {what} at subsystem {index} (t={t:.6g})")


class InvalidParameter(ValueError):
    pass


def _zero_state(x, t):
    return 0.0


def _one_state(x, t):
    return 1.0


def _zero_time(t):
    return 0.0


@dataclass(frozen=True)
class UncertaintyProfile:
    d: tuple[StateTerm, ...]
    g: tuple[StateTerm, ...]
    gamma: tuple[TimeTerm, ...]
    noise_seed: int = 0

    @classmethod
    def clean(cls, n: int) -> "UncertaintyProfile":
        """No modeling error, unit gains, no disturbance."""
        return cls(d=(_zero_state,) * n, g=(_one_state,) * n, gamma=(_zero_time,) * n)


@dataclass(frozen=True)
class PlantModel:
    n: int
    known_terms: tuple[StateTerm, ...]
    uncertainty: UncertaintyProfile
    capacity: float = 1.0
    # logging only: external load force F_L(t), never read by the controller
    load_force: TimeTerm = field(default=_zero_time)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameter("plant order must be >= 1")
        if not self.capacity > 0:
            raise InvalidParameter("capacity must be positive")
        u = self.uncertainty
        for name, seq in (("known_terms", self.known_terms), ("d", u.d), ("g", u.g), ("gamma", u.gamma)):
            if len(seq) != self.n:
                raise InvalidParameter(f"{name} has {len(seq)} entries, expected {self.n}")


@dataclass(frozen=True)
class EmlaParams:
    """Rigid-body parameters of an electromechanical linear actuator."""

    I_eq: float
    B_eq: float = 0.0
    K_eq: float = 0.0
    f_eq: float = 0.0
    torque_capacity: float = 44.5

    def __post_init__(self):
        if not self.I_eq > 0:
            raise InvalidParameter(f"I_eq must be positive, got {self.I_eq}")
        for name in ("B_eq", "K_eq", "f_eq"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be non-negative")
        if not self.torque_capacity > 0:
            raise InvalidParameter("torque_capacity must be positive")


def sff_derivative(x: Sequence[float], u_applied: float, t: float, model: PlantModel) -> list[float]:
    """Right-hand side of the uncertain plant for an already saturated input."""
    n = model.n
    unc = model.uncertainty
    dx = [0.0] * n
    for i in range(n):
        nxt = x[i + 1] if i < n - 1 else u_applied
        val = unc.g[i](x, t) * nxt + model.known_terms[i](x, t) + unc.d[i](x, t) + unc.gamma[i](t)
        if not math.isfinite(val):
            raise NumericFailure(i + 1, t, "plant derivative")
        dx[i] = val
    return dx


def effective_uncertainty(x: Sequence[float], next_input: float, t: float, model: PlantModel, index: int) -> float:
    """Lumped uncertainty ``d_i + (g_i - 1) * next_input`` seen by estimator ``index`` (1-based)."""
    if not 1 <= index <= model.n:
        raise IndexError(f"subsystem index {index} outside 1..{model.n}")
    unc = model.uncertainty
    i = index - 1
    return unc.d[i](x, t) + (unc.g[i](x, t) - 1.0) * next_input


class BandLimitedNoise:
    """Smooth zero-mean Gaussian signal with power spread over ``[0, bandwidth]`` Hz.

    Realized as a random-phase sum of sinusoids so it can be evaluated at any
    RK4 substep time and is reproducible from ``seed``.
    """

    def __init__(self, std: float, bandwidth: float, seed: int, components: int = 16):
        rng = np.random.default_rng(seed)
        self.freqs = 2.0 * math.pi * rng.uniform(0.0, bandwidth, components)
        self.amps = rng.standard_normal(components) * std * math.sqrt(2.0 / components)
        self.phases = rng.uniform(0.0, 2.0 * math.pi, components)
        self._table: dict[float, float] = {}

    def __call__(self, t: float) -> float:
        v = self._table.get(t)
        if v is None:
            v = float(np.dot(self.amps, np.sin(self.freqs * t + self.phases)))
        return v

    def prepare(self, times: np.ndarray) -> None:
        """Tabulate the signal at ``times`` in one vectorized pass."""
        vals = np.sin(np.multiply.outer(times, self.freqs) + self.phases) @ self.amps
        self._table = dict(zip(times.tolist(), vals.tolist()))


def band_limited_noise(std: float, bandwidth: float, seed: int, components: int = 16) -> TimeTerm:
    if std == 0.0:
        return _zero_time
    return BandLimitedNoise(std, bandwidth, seed, components)


def emla_model(
    params: EmlaParams,
    load_force: TimeTerm | None = None,
    gain_ripple: float = 0.0,
    ripple_freq: float = 0.0,
    sensor_noise: TimeTerm | None = None,
    noise_seed: int = 0,
) -> PlantModel:
    """Second-order actuator plant: position ``x1``, velocity ``x2``, torque input.

    Only ``f_2 = -K_eq x_1 / I_eq`` is exposed as a known term. The torque gain,
    viscous damping and load disturbance go into the hidden profile. The
    optional sensor effects on the position channel perturb ``g_1`` by
    ``gain_ripple * sin(ripple_freq * t)`` and add ``sensor_noise(t)`` to ``Gamma_1``.
    """
    inv_i = 1.0 / params.I_eq
    spring = params.K_eq * inv_i
    damping = params.B_eq * inv_i
    load_gain = params.f_eq * inv_i
    load = load_force or _zero_time

    def f2(x, t):
        return -spring * x[0]

    def d2(x, t):
        return -damping * x[1]

    def g2(x, t):
        return inv_i

    def gamma2(t):
        return -load_gain * load(t)

    if gain_ripple:
        def g1(x, t):
            return 1.0 + gain_ripple * math.sin(ripple_freq * t)
    else:
        g1 = _one_state

    unc = UncertaintyProfile(
        d=(_zero_state, d2),
        g=(g1, g2),
        gamma=(sensor_noise or _zero_time, gamma2),
        noise_seed=noise_seed,
    )
    return PlantModel(
        n=2,
        known_terms=(_zero_state, f2),
        uncertainty=unc,
        capacity=params.torque_capacity,
        load_force=load,
    )


def chain_model(
    n: int,
    gains: Sequence[float] | None = None,
    known_coeffs: Sequence[float] | None = None,
    hidden_damping: Sequence[float] | None = None,
    disturbance: Sequence[float] | None = None,
    capacity: float = 1.0,
) -> PlantModel:
    """Generic n-th order chain with constant gains and diagonal linear terms.

    ``f_i = -known_coeffs[i] * x_i`` is known; ``d_i = -hidden_damping[i] * x_i``,
    ``g_i = gains[i]`` and the constant ``Gamma_i = disturbance[i]`` are hidden.
    With every optional argument omitted the plant is a clean integrator chain.
    """
    gains = tuple(gains) if gains is not None else (1.0,) * n
    known = tuple(known_coeffs) if known_coeffs is not None else (0.0,) * n
    damp = tuple(hidden_damping) if hidden_damping is not None else (0.0,) * n
    dist = tuple(disturbance) if disturbance is not None else (0.0,) * n
    for name, seq in (("gains", gains), ("known_coeffs", known), ("hidden_damping", damp), ("disturbance", dist)):
        if len(seq) != n:
            raise InvalidParameter(f"{name} needs {n} entries")
    if any(g == 0.0 for g in gains):
        raise InvalidParameter("zero control gain makes the plant uncontrollable")

    def linear(i, c):
        if c == 0.0:
            return _zero_state
        return lambda x, t: -c * x[i]

    def const_state(v):
        return _one_state if v == 1.0 else (lambda x, t: v)

    def const_time(v):
        return _zero_time if v == 0.0 else (lambda t: v)

    unc = UncertaintyProfile(
        d=tuple(linear(i, c) for i, c in enumerate(damp)),
        g=tuple(const_state(g) for g in gains),
        gamma=tuple(const_time(v) for v in dist),
    )
    return PlantModel(
        n=n,
        known_terms=tuple(linear(i, c) for i, c in enumerate(known)),
        uncertainty=unc,
        capacity=capacity,
    )
