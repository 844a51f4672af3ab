"""Homogeneous adaptive estimators.

Each subsystem runs a certain reference state ``x_hat_i`` whose modeling
term ``f_i*`` is adapted so that ``x_hat`` shadows the uncertain plant state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class HaeConfig:
    xi: tuple[float, ...]
    lam: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        n = len(self.xi)
        if n == 0 or len(self.lam) != n or len(self.beta) != n:
            raise ValueError("xi, lam and beta must be non-empty and of equal length")
        for name in ("xi", "lam", "beta"):
            if any(not v > 0 for v in getattr(self, name)):
                raise ValueError(f"all {name} gains must be strictly positive")

    @property
    def n(self) -> int:
        return len(self.xi)


@dataclass
class HaeState:
    x_hat: list[float]
    psi: list[float]


def estimation_errors(x: Sequence[float], state: HaeState) -> list[float]:
    if len(x) != len(state.x_hat):
        raise ValueError("state length mismatch")
    return [xi - xh for xi, xh in zip(x, state.x_hat)]


def modeling_term(i: int, f_known: float, e: Sequence[float], psi_i: float, cfg: HaeConfig) -> float:
    """Adapted modeling term ``f_i*`` for subsystem ``i`` (1-based); ``e_0 = 0``."""
    k = i - 1
    e_i = e[k]
    e_prev = e[k - 1] if k > 0 else 0.0
    return f_known + cfg.xi[k] * psi_i * e_i + 0.5 * cfg.lam[k] * e_i + e_prev


def psi_rate(i: int, e_i: float, psi_i: float, cfg: HaeConfig) -> float:
    k = i - 1
    return -cfg.beta[k] * psi_i + cfg.xi[k] * e_i * e_i


def reference_derivative(state: HaeState, f_star: Sequence[float], u_sat: float) -> list[float]:
    """Derivative of the certain reference chain driven by the saturated input."""
    xh = state.x_hat
    n = len(xh)
    out = [0.0] * n
    for k in range(n - 1):
        out[k] = xh[k + 1] + f_star[k]
    out[n - 1] = u_sat + f_star[n - 1]
    return out
