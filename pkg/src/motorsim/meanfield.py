"""Closed moment system for the bound fraction N(t) and filament velocity v(t).

With the linear returning force the transport equation closes on its zeroth
and first moments::

    dN/dt = c_b (1 - N) - c_u N
    dv/dt = -kappa (v N + c_b (1 - N) m1) + c_u (F - v)

This module integrates that system, evaluates its stationary point and the
analysis of how the stationary velocity depends on the unbinding rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateRate, RegimeError, StepFailure
from .model import ModelParams

RTOL = 1e-9
ATOL = 1e-12
OPTIMIZER_AGREEMENT = 1e-6

NO_FORCE = "no_force"
WEAK_FORCE = "weak_force"
STRONG_FORCE = "strong_force"


@dataclass(frozen=True)
class MeanFieldState:
    N: float
    v: float


@dataclass
class Trajectory:
    t: np.ndarray
    N: np.ndarray
    v: np.ndarray

    def rows(self):
        return zip(self.t, self.N, self.v)


@dataclass(frozen=True)
class OptimalRate:
    c_u_opt: float
    v_opt: float
    c_u_numeric: float
    v_numeric: float


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    c_u_opt: float | None = None
    v_opt: float | None = None
    c_u_zero: float | None = None

    def as_dict(self):
        return {
            "regime": self.regime,
            "c_u_opt": self.c_u_opt,
            "v_opt": self.v_opt,
            "c_u_zero": self.c_u_zero,
        }


def rhs(s: MeanFieldState, p: ModelParams):
    dN = p.c_b * (1.0 - s.N) - p.c_u * s.N
    dv = -p.kappa * (s.v * s.N + p.c_b * (1.0 - s.N) * p.m1) + p.c_u * (p.F - s.v)
    return dN, dv


def telegraph_solution(t, N0, c_b, c_u):
    """Exact solution of the bound-fraction equation."""
    N_bar = c_b / (c_b + c_u)
    return N_bar + (N0 - N_bar) * np.exp(-(c_b + c_u) * np.asarray(t, dtype=float))


def integrate(p: ModelParams, init: MeanFieldState, t_grid) -> Trajectory:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-d array")
    if t_grid.size == 1:
        return Trajectory(t_grid, np.array([init.N]), np.array([init.v]))

    def f(_t, y):
        return rhs(MeanFieldState(y[0], y[1]), p)

    sol = solve_ivp(
        f,
        (t_grid[0], t_grid[-1]),
        [init.N, init.v],
        method="DOP853",
        t_eval=t_grid,
        rtol=RTOL,
        atol=ATOL,
    )
    if sol.status != 0:
        raise StepFailure(sol.message)
    return Trajectory(sol.t, sol.y[0], sol.y[1])


def stationary_velocity(c_b, c_u, kappa, m1, F):
    """Stationary filament velocity; numpy-broadcasting in every argument."""
    c_u = np.asarray(c_u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -(kappa * c_b * m1 - F * (c_b + c_u)) / (c_b + c_u + kappa * c_b / c_u)
    v = np.where(c_u == 0, 0.0, v)
    return v if v.ndim else float(v)


def stationary(p: ModelParams):
    """Stationary (N, v). The c_u -> 0 limit of v is 0; callers opt into it."""
    if p.c_u == 0:
        raise DegenerateRate("stationary velocity divides by c_u = 0; its limit is 0")
    N_bar = p.c_b / (p.c_b + p.c_u)
    v_bar = -(p.kappa * p.c_b * p.m1 - p.F * (p.c_b + p.c_u)) / (
        p.c_b + p.c_u + p.kappa * p.c_b / p.c_u
    )
    return N_bar, v_bar


def stationary_or_limit(p: ModelParams):
    try:
        return stationary(p)
    except DegenerateRate:
        return 1.0, 0.0


def golden_section_minimize(f, lo, hi, xtol=1e-12, maxiter=500):
    """Minimize a unimodal scalar function on [lo, hi] without derivatives."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= xtol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def optimal_unbind_rate_closed_form(p: ModelParams) -> float:
    m1, F = p.m1, p.F
    return math.sqrt(F * F / (m1 * m1) + p.c_b * (p.kappa * m1 - F) / m1) - F / m1


def optimal_unbind_rate(p: ModelParams, check=True) -> OptimalRate:
    """Unbinding rate at which the stationary velocity is most negative.

    The closed form is cross-checked by golden-section search of the
    stationary velocity over (0, 10 c_u_opt]; disagreement beyond 1e-6
    relative raises AssertionError.
    """
    if p.F >= p.kappa * p.m1:
        raise RegimeError(
            f"no negative velocity optimum for F={p.F} >= kappa*m1={p.kappa * p.m1}"
        )
    c_opt = optimal_unbind_rate_closed_form(p)
    v_opt = abs(stationary(p.replace(c_u=c_opt))[1])

    def signed_v(c):
        return stationary_velocity(p.c_b, c, p.kappa, p.m1, p.F)

    c_num, v_num = golden_section_minimize(signed_v, 0.0, 10.0 * c_opt)
    v_num = abs(v_num)
    if check:
        rel = abs(c_num - c_opt) / c_opt
        if rel > OPTIMIZER_AGREEMENT:
            raise AssertionError(
                f"closed-form c_u_opt={c_opt!r} disagrees with search {c_num!r} (rel {rel:.2e})"
            )
    return OptimalRate(c_opt, v_opt, c_num, v_num)


def maxi_speed(p: ModelParams) -> float:
    """Published closed form of the extremal speed at F = 0.

    It differs from the stationary velocity evaluated at sqrt(c_b kappa)
    by a factor of kappa; ``speed_discrepancy`` reports both.
    """
    return math.sqrt(p.c_b) * p.m1 / (2.0 * math.sqrt(p.kappa) + math.sqrt(p.c_b))


def speed_discrepancy(p: ModelParams) -> dict:
    q = p.replace(F=0.0)
    c_opt = math.sqrt(q.c_b * q.kappa)
    from_stationary = abs(stationary(q.replace(c_u=c_opt))[1])
    published = maxi_speed(q)
    return {
        "kappa": q.kappa,
        "c_u_opt": c_opt,
        "v_opt_stationary": from_stationary,
        "v_opt_published": published,
        "ratio": from_stationary / published,
    }


def zero_velocity_threshold(p: ModelParams) -> float:
    """Unbinding rate above which the stationary velocity turns positive."""
    if not 0 < p.F < p.kappa * p.m1:
        raise RegimeError("zero-velocity threshold exists only for 0 < F < kappa*m1")
    c_zero = p.c_b * (p.kappa * p.m1 - p.F) / p.F
    v = stationary(p.replace(c_u=c_zero))[1]
    if abs(v) > 1e-9:
        raise AssertionError(f"stationary velocity at threshold is {v!r}, expected 0")
    return c_zero


def classify_regime(p: ModelParams) -> RegimeReport:
    km1 = p.kappa * p.m1
    if p.F >= km1:
        grid = np.logspace(-3, 3, 61)
        v = stationary_velocity(p.c_b, grid, p.kappa, p.m1, p.F)
        if not np.all(v > 0):
            raise AssertionError("strong-force regime produced a non-positive stationary velocity")
        return RegimeReport(STRONG_FORCE)
    opt = optimal_unbind_rate(p)
    if p.F == 0:
        return RegimeReport(NO_FORCE, c_u_opt=opt.c_u_opt, v_opt=opt.v_opt)
    if p.F < 0:
        # a pulling force keeps the velocity negative; no zero crossing
        return RegimeReport(WEAK_FORCE, c_u_opt=opt.c_u_opt, v_opt=opt.v_opt)
    return RegimeReport(
        WEAK_FORCE,
        c_u_opt=opt.c_u_opt,
        v_opt=opt.v_opt,
        c_u_zero=zero_velocity_threshold(p),
    )
