"""Transport equation for the first correlation function n(x, t).

    dn/dt + v dn/dx = c_b b(x) (1 - N(t)) - c_u n,   N = int n dx,
    v = -kappa int x n dx + F

solved with first-order upwind differences on a uniform node-centred grid
and explicit two-stage SSP Runge-Kutta in time, with v recomputed from the
field at every stage. Also hosts the closed-form stationary profile and the
single-motor density equation, whose advection velocity is -kappa x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DomainOverflow, ValidationError, ZeroVelocity
from .meanfield import MeanFieldState
from .meanfield import integrate as integrate_ode
from .meanfield import stationary
from .model import BindingDensity, ModelParams

EPS_V = 1e-12
OVERFLOW_MASS = 1e-6
TAIL = 1e-8


@dataclass
class DensityField:
    x: np.ndarray
    n: np.ndarray
    t: float = 0.0

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def mass(self):
        return float(np.trapezoid(self.n, self.x))

    @property
    def first_moment(self):
        return float(np.trapezoid(self.x * self.n, self.x))

    def integrate(self, g):
        """Trapezoid rule for int g(x) n(x) dx."""
        return float(np.trapezoid(g(self.x) * self.n, self.x))

    def copy(self):
        return DensityField(self.x.copy(), self.n.copy(), self.t)


@dataclass(frozen=True)
class PdeConfig:
    x_min: float
    x_max: float
    J: int = 4000
    cfl: float = 0.5
    t_end: float = 10.0
    snapshots: tuple = ()
    dt_max: float | None = None

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValidationError("need x_min < x_max", key="pde.x_max")
        if self.J < 4:
            raise ValidationError("J must be >= 4", key="pde.J")
        if not 0 < self.cfl <= 1:
            raise ValidationError("cfl must lie in (0, 1]", key="pde.cfl")
        if not self.t_end > 0:
            raise ValidationError("t_end must be > 0", key="pde.t_end")

    def grid(self):
        return np.linspace(self.x_min, self.x_max, self.J + 1)


@dataclass
class EvolveResult:
    snapshots: list
    t: np.ndarray
    N: np.ndarray
    v: np.ndarray
    extras: dict = field(default_factory=dict)
    final: DensityField | None = None


def empty_field(cfg: PdeConfig) -> DensityField:
    x = cfg.grid()
    return DensityField(x, np.zeros_like(x), 0.0)


def velocity_of(fld: DensityField, p: ModelParams) -> float:
    return -p.kappa * fld.first_moment + p.F


def l1_distance(a: DensityField, b: DensityField) -> float:
    return float(np.trapezoid(np.abs(a.n - b.n), a.x))


def headroom(v_lo, v_hi, c_u, t_end):
    """Distances (left, right) the drift can carry non-negligible mass.

    A motor bound for time a has drifted at most v_max * a and survives with
    probability exp(-c_u a), so mass further than v_max * ln(1/TAIL) / c_u
    is below TAIL; the run length caps the distance as well.
    """
    horizon = t_end if c_u <= 0 else min(t_end, math.log(1.0 / TAIL) / c_u)
    return max(-v_lo, 0.0) * horizon, max(v_hi, 0.0) * horizon


def domain_for(p: ModelParams, t_end, v_range=None, margin=0.25):
    """Grid extent holding the binding support plus drift headroom.

    ``v_range`` bounds the velocity over the run; by default it is taken
    from the moment ODE started from the empty filament.
    """
    lo, hi = p.binding_density.support(1e-12)
    if v_range is None:
        ts = np.linspace(0.0, t_end, 401)
        traj = integrate_ode(p, MeanFieldState(0.0, p.F), ts)
        v_range = (float(traj.v.min()), float(traj.v.max()))
        if p.c_u > 0:
            v_bar = stationary(p)[1]
            v_range = (min(v_range[0], v_bar), max(v_range[1], v_bar))
    left, right = headroom(v_range[0], v_range[1], p.c_u, t_end)
    pad = margin * max(hi - lo, 1.0)
    return lo - left - pad, hi + right + pad


def _upwind(n, v, dx):
    d = np.zeros_like(n)
    if v < 0:
        d[:-1] = (n[1:] - n[:-1]) / dx
    else:
        d[1:] = (n[1:] - n[:-1]) / dx
    return d


def _check_outflow(n, v, dx, t):
    edge = n[:3] if v < 0 else n[-3:]
    if v != 0 and float(edge.sum()) * dx > OVERFLOW_MASS:
        side = "left" if v < 0 else "right"
        raise DomainOverflow(f"mass reached the {side} boundary at t={t:.4g}; enlarge the grid")


def evolve(fld: DensityField, p: ModelParams, cfg: PdeConfig, velocity=None, extras=None,
           check_positivity=False) -> EvolveResult:
    """Integrate the transport equation to ``cfg.t_end``.

    ``velocity`` maps a field to the filament velocity (default: the linear
    force). ``extras`` maps names to functionals recorded alongside N and v.
    """
    if velocity is None:
        def velocity(f):
            return velocity_of(f, p)
    extras = extras or {}
    x = fld.x
    dx = fld.dx
    b = p.binding_density.cell_averages(x, dx)
    c_b, c_u = p.c_b, p.c_u
    work = DensityField(x, fld.n.astype(float).copy(), fld.t)
    wanted = {float(s) for s in cfg.snapshots if 0 <= s <= cfg.t_end}
    stops = sorted(wanted | {cfg.t_end})

    def stage(n):
        work.n = n
        v = velocity(work)
        N = float(np.trapezoid(n, x))
        out = n + dt * (-v * _upwind(n, v, dx) + c_b * b * (1.0 - N) - c_u * n)
        # inflow boundary carries nothing in
        if v < 0:
            out[-1] = 0.0
        elif v > 0:
            out[0] = 0.0
        return out

    ts, Ns, vs = [], [], []
    ex = {k: [] for k in extras}
    snaps = []

    def record(n, t):
        work.n = n
        ts.append(t)
        Ns.append(float(np.trapezoid(n, x)))
        vs.append(velocity(work))
        for k, g in extras.items():
            ex[k].append(g(work))

    n = work.n
    t = fld.t
    record(n, t)
    if 0.0 in cfg.snapshots and t == 0.0:
        snaps.append(DensityField(x, n.copy(), t))
    i_stop = 0
    while i_stop < len(stops):
        target = stops[i_stop]
        if t >= target - 1e-14:
            i_stop += 1
            continue
        work.n = n
        v = velocity(work)
        speed = max(abs(v), EPS_V)
        dt = min(cfg.cfl * dx / speed, 0.5 / (c_u + c_b), 1.0 / (speed / dx + c_u), target - t)
        if cfg.dt_max is not None:
            dt = min(dt, cfg.dt_max)
        while True:
            n1 = stage(n)
            work.n = n1
            speed1 = abs(velocity(work))
            # the second stage sees the updated velocity; keep it within the CFL bound too
            if speed1 * dt / dx <= cfg.cfl * (1 + 1e-9) or dt <= 1e-14:
                break
            dt = cfg.cfl * dx / speed1
        n2 = stage(n1)
        n = 0.5 * (n + n2)
        t = target if target - (t + dt) < 1e-12 else t + dt
        if check_positivity and n.min() < 0:
            raise AssertionError(f"negative density {n.min():.3g} at t={t:.4g}")
        _check_outflow(n, v, dx, t)
        record(n, t)
        if t >= target - 1e-14:
            if target in wanted:
                snaps.append(DensityField(x, n.copy(), t))
            i_stop += 1
    final = DensityField(x, n.copy(), t)
    return EvolveResult(
        snapshots=snaps,
        t=np.array(ts),
        N=np.array(Ns),
        v=np.array(vs),
        extras={k: np.array(vals) for k, vals in ex.items()},
        final=final,
    )


# ---------------------------------------------------------------- stationary

def _upstream_kernel(b: BindingDensity, lam, x):
    """int_x^inf exp(-lam (y - x)) b(y) dy for every x."""
    x = np.asarray(x, dtype=float)
    p = b.params
    if b.family == "gaussian":
        mu, sigma = p["mu"], p["sigma"]
        if sigma == 0.0:
            return np.where(x <= mu, np.exp(-lam * np.maximum(mu - x, 0.0)), 0.0)
        d = x - mu
        z = (d + lam * sigma * sigma) / (sigma * math.sqrt(2.0))
        expo = lam * d + 0.5 * (lam * sigma) ** 2
        pos = 0.5 * special.erfcx(np.maximum(z, 0.0)) * np.exp(-0.5 * (d / sigma) ** 2)
        neg = 0.5 * np.exp(np.minimum(expo, 0.0)) * special.erfc(np.minimum(z, 0.0))
        return np.where(z > 0, pos, neg)
    if b.family == "uniform":
        a, h = p["a"], p["b_hi"]
        start = np.maximum(x, a)
        val = (np.exp(-lam * (start - x)) - np.exp(-lam * np.maximum(h - x, 0.0))) / (lam * (h - a))
        return np.where(x < h, val, 0.0)
    ell, x0 = p["lam"], p["x0"]
    above = ell / (lam + ell) * np.exp(-ell * np.maximum(x - x0, 0.0))
    below = ell / (lam + ell) * np.exp(-lam * np.maximum(x0 - x, 0.0))
    return np.where(x >= x0, above, below)


def _downstream_kernel(b: BindingDensity, lam, x):
    """int_-inf^x exp(-lam (x - y)) b(y) dy for every x."""
    x = np.asarray(x, dtype=float)
    p = b.params
    if b.family == "gaussian":
        return _upstream_kernel(BindingDensity.gaussian(-p["mu"], p["sigma"]), lam, -x)
    if b.family == "uniform":
        return _upstream_kernel(BindingDensity.uniform(-p["b_hi"], -p["a"]), lam, -x)
    ell, x0 = p["lam"], p["x0"]
    s = np.maximum(x - x0, 0.0)
    if abs(lam - ell) < 1e-12 * ell:
        val = ell * s * np.exp(-ell * s)
    else:
        val = ell * (np.exp(-ell * s) - np.exp(-lam * s)) / (lam - ell)
    return np.where(x > x0, val, 0.0)


def stationary_profile_fn(p: ModelParams):
    """Stationary density as a vectorised callable of x.

    For a stationary velocity exactly zero the balance c_u n = c_b (1-N) b
    holds pointwise and the profile is N_bar * b.
    """
    N_bar, v_bar = stationary(p)
    K = p.c_b * (1.0 - N_bar)
    b = p.binding_density
    if v_bar == 0.0:
        if b.is_point_mass:
            raise ZeroVelocity("zero-velocity stationary profile of a point mass is singular")
        return lambda x: N_bar * b.pdf(x)
    lam = p.c_u / abs(v_bar)
    kernel = _upstream_kernel if v_bar < 0 else _downstream_kernel
    return lambda x: K / abs(v_bar) * kernel(b, lam, x)


def stationary_profile(p: ModelParams, x) -> DensityField:
    x = np.asarray(x, dtype=float)
    return DensityField(x, stationary_profile_fn(p)(x), math.inf)


def stationary_profile_quadrature(p: ModelParams, x):
    """Same profile by direct adaptive quadrature of the integrating factor."""
    N_bar, v_bar = stationary(p)
    K = p.c_b * (1.0 - N_bar)
    b = p.binding_density
    lam = p.c_u / abs(v_bar)
    lo, hi = b.support(1e-16)
    out = []
    for xi in np.atleast_1d(x):
        if v_bar < 0:
            a, c = max(xi, lo), hi
            g = lambda y: math.exp(-lam * (y - xi)) * float(b.pdf(y))
        else:
            a, c = lo, min(xi, hi)
            g = lambda y: math.exp(-lam * (xi - y)) * float(b.pdf(y))
        val = integrate.quad(g, a, c, epsabs=1e-14, epsrel=1e-12, limit=200)[0] if c > a else 0.0
        out.append(K / abs(v_bar) * val)
    return np.array(out)


# -------------------------------------------------------------- single motor

def single_motor_domain(p: ModelParams, margin=0.25):
    lo, hi = p.binding_density.support(1e-12)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    pad = margin * max(hi - lo, 1.0)
    return lo - pad, hi + pad


def single_motor_evolve(fld: DensityField, p: ModelParams, cfg: PdeConfig,
                        check_positivity=False) -> EvolveResult:
    """Density of one bound motor: dp/dt = c_b b P + kappa d/dx[x p] - c_u p.

    P = 1 - int p is the unbound probability. Flux form with face velocity
    -kappa x, upwinded per face; the series records (t, bound mass, 0).
    """
    x = fld.x
    dx = fld.dx
    b = p.binding_density.cell_averages(x, dx)
    faces = -p.kappa * (x[:-1] + 0.5 * dx)
    c_b, c_u = p.c_b, p.c_u
    amax = max(float(np.abs(faces).max()), EPS_V)
    wanted = {float(s) for s in cfg.snapshots if 0 <= s <= cfg.t_end}
    stops = sorted(wanted | {cfg.t_end})

    def stage(n, dt):
        flux = np.where(faces > 0, faces * n[:-1], faces * n[1:])
        div = np.zeros_like(n)
        div[:-1] += flux
        div[1:] -= flux
        P = 1.0 - float(np.trapezoid(n, x))
        return n + dt * (-div / dx + c_b * b * P - c_u * n)

    n = fld.n.astype(float).copy()
    t = fld.t
    ts, Ns, snaps = [t], [float(np.trapezoid(n, x))], []
    i_stop = 0
    while i_stop < len(stops):
        target = stops[i_stop]
        if t >= target - 1e-14:
            i_stop += 1
            continue
        dt = min(cfg.cfl * dx / amax, 0.5 / (c_u + c_b), target - t)
        if cfg.dt_max is not None:
            dt = min(dt, cfg.dt_max)
        n1 = stage(n, dt)
        n = 0.5 * (n + stage(n1, dt))
        t = target if target - (t + dt) < 1e-12 else t + dt
        if check_positivity and n.min() < 0:
            raise AssertionError(f"negative density {n.min():.3g} at t={t:.4g}")
        ts.append(t)
        Ns.append(float(np.trapezoid(n, x)))
        if t >= target - 1e-14:
            if target in wanted:
                snaps.append(DensityField(x, n.copy(), t))
            i_stop += 1
    ts = np.array(ts)
    return EvolveResult(snaps, ts, np.array(Ns), np.zeros_like(ts), {}, DensityField(x, n, t))


def unbound_probability(t, c_b, c_u, P0=1.0):
    """Exact solution of dP/dt = -c_b P + c_u (1 - P)."""
    P_bar = c_u / (c_b + c_u)
    return P_bar + (P0 - P_bar) * np.exp(-(c_b + c_u) * np.asarray(t, dtype=float))


def single_motor_stationary(p: ModelParams, x):
    """Stationary single-motor density by quadrature along characteristics.

    Balance kappa (x p)' = c_u p - c_b P b with P = c_u/(c_b+c_u). Mass bound
    at y decays toward 0 along x(t) = y exp(-kappa t), so
    p(x) = c_b P / (kappa |x|) * int b(y) (|x|/|y|)^(c_u/kappa) dy over y
    beyond x on the same side of 0.
    """
    P = p.c_u / (p.c_b + p.c_u)
    b = p.binding_density
    lo, hi = b.support(1e-14)
    r = p.c_u / p.kappa
    out = []
    for xi in np.atleast_1d(x):
        if xi == 0.0:
            out.append(math.nan)
            continue
        if xi > 0:
            a, c = xi, max(hi, xi)
        else:
            a, c = min(lo, xi), xi
        g = lambda y: float(b.pdf(y)) * (abs(xi) / abs(y)) ** r
        val = integrate.quad(g, a, c, limit=200)[0] if c > a else 0.0
        out.append(p.c_b * P / (p.kappa * abs(xi)) * val)
    return np.array(out)
