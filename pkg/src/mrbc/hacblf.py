"""Barrier-Lyapunov adaptive controllers acting on the reference chain.

The controller never sees the plant. It drives the certain reference states
``x_hat`` along the desired chain ``x_d`` while keeping every tracking error
``e_bar_i = x_hat_i - x_id`` strictly inside a shrinking envelope ``o_i(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Below this the barrier term is treated as already violated.
Q_GUARD = 1e-9


class EnvelopeViolation(ArithmeticError):
    def __init__(self, index: int, t: float, e_bar: float, o: float):
        self.index = index
        self.t = t
        self.e_bar = e_bar
        self.o = o
        super().__init__(f"|e_bar_{index}| = {abs(e_bar):.6g} reached envelope o_{index} = {o:.6g} at t={t:.6g}")


@dataclass(frozen=True)
class EnvelopeParams:
    o_shoot: float
    o_bound: float
    o_rate: float

    def __post_init__(self):
        if not self.o_shoot > self.o_bound > 0:
            raise ValueError(f"need o_shoot > o_bound > 0, got {self.o_shoot}, {self.o_bound}")
        if not self.o_rate > 0:
            raise ValueError("o_rate must be positive")


@dataclass(frozen=True)
class HacBlfConfig:
    gamma: tuple[float, ...]
    epsilon: tuple[float, ...]
    kappa: tuple[float, ...]
    envelopes: tuple[EnvelopeParams, ...]
    u_min: float
    u_max: float

    def __post_init__(self):
        n = len(self.gamma)
        if n == 0 or not (len(self.epsilon) == len(self.kappa) == len(self.envelopes) == n):
            raise ValueError("gamma, epsilon, kappa and envelopes must be non-empty and of equal length")
        for name in ("gamma", "epsilon", "kappa"):
            if any(not v > 0 for v in getattr(self, name)):
                raise ValueError(f"all {name} gains must be strictly positive")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")

    @property
    def n(self) -> int:
        return len(self.gamma)


@dataclass
class HacBlfState:
    theta: list[float]
    xd: list[float]
    # dirty-derivative memory for x_id, i >= 2 (slot 0 unused)
    xd_dot_filtered: list[float]


def envelope(t: float, p: EnvelopeParams) -> float:
    return (p.o_shoot - p.o_bound) * math.exp(-p.o_rate * t) + p.o_bound


def envelope_rate(t: float, p: EnvelopeParams) -> float:
    return -p.o_rate * (p.o_shoot - p.o_bound) * math.exp(-p.o_rate * t)


def envelope_gap(e_bar: float, o: float, index: int = 0, t: float = math.nan) -> float:
    """``Q = o^2 - e_bar^2``; raises :class:`EnvelopeViolation` at or near the boundary."""
    q = o * o - e_bar * e_bar
    if not q >= Q_GUARD or abs(e_bar) >= o:
        raise EnvelopeViolation(index, t, e_bar, o)
    return q


def log_barrier(e_bar: float, o: float) -> float:
    """``log(o^2 / Q)`` written as ``log1p(e_bar^2 / Q)``; ``inf`` outside the envelope."""
    q = o * o - e_bar * e_bar
    if not q > 0:
        return math.inf
    return math.log1p(e_bar * e_bar / q)


def ff_compensation(i: int, e_bar: Sequence[float], Q: Sequence[float], theta_i: float, cfg: HacBlfConfig) -> float:
    """Feedforward compensation ``f_bar_i`` (1-based ``i``); ``e_bar_0 = 0``."""
    k = i - 1
    eb = e_bar[k]
    q = Q[k]
    out = -0.5 * cfg.gamma[k] * eb - cfg.epsilon[k] * theta_i * eb / q
    if k > 0:
        out -= q / Q[k - 1] * e_bar[k - 1]
    return out


def theta_rate(i: int, e_bar_i: float, Q_i: float, theta_i: float, cfg: HacBlfConfig) -> float:
    k = i - 1
    r = e_bar_i / Q_i
    return -cfg.kappa[k] * theta_i + cfg.epsilon[k] * r * r


def reference_chain(xd_i: float, xd_i_dot: float, ff_i: float, f_star_i: float) -> float:
    """Next desired state ``x_(i+1)d`` from inverse dynamics of the reference chain.

    ``xd_i`` is accepted for signature symmetry; only its derivative enters.
    """
    return xd_i_dot + ff_i - f_star_i


def control_law(xd_n_dot: float, ff_n: float, f_star_n: float) -> float:
    return xd_n_dot + ff_n - f_star_n


def saturate(u: float, u_min: float, u_max: float) -> tuple[float, float, float, float]:
    """Amplitude saturation written as ``alpha1 * u + alpha2``.

    Returns ``(u_applied, alpha1, alpha2, delta_u)``. ``u_applied`` is the exact
    clamp; the affine pair reproduces it up to floating-point rounding.
    """
    if u_min <= u <= u_max:
        return u, 1, 0, u - u
    # integer literals keep Fraction inputs exact
    alpha1 = 1 / (abs(u) + 1)
    bound = u_max if u > u_max else u_min
    alpha2 = bound - u / (abs(u) + 1)
    return bound, alpha1, alpha2, bound - u
