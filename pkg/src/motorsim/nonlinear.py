"""Nonlinear returning force and its exact moment closure.

With v = int phi(x) n dx + F and phi = -kappa sin(alpha x) the transport
equation closes on (N, v, w), w = int cos(alpha x) n dx:

    dN/dt = c_b (1 - N) - c_u N
    dv/dt = -kappa alpha v w - kappa c_b (1 - N) m_s + c_u (F - v)
    dw/dt = alpha v (v - F) / kappa + c_b (1 - N) m_c - c_u w

For phi = -kappa sinh(alpha x) the same holds with cosh/sinh moments and the
sign of the alpha v (v - F) / kappa term flipped. The linear force is the
degenerate member with w = N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import OverflowRisk, StepFailure, ValidationError
from .meanfield import ATOL, RTOL, MeanFieldState
from .meanfield import rhs as linear_rhs
from .model import DensityMoments, ModelParams, hyperbolic_moments, moments
from .pde import DensityField, PdeConfig, domain_for, evolve

LINEAR, SINE, SINH = "linear", "sine", "sinh"

ROOT_TOL = 1e-10
DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class ForceSpec:
    family: str
    kappa: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in (LINEAR, SINE, SINH):
            raise ValidationError(f"unknown force family {self.family!r}", key="nl.family")
        if not self.kappa > 0:
            raise ValidationError("force kappa must be > 0", key="kappa")
        if self.family != LINEAR and not self.alpha > 0:
            raise ValidationError("alpha must be > 0", key="nl.alpha")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == LINEAR:
            return -self.kappa * x
        if self.family == SINE:
            return -self.kappa * np.sin(self.alpha * x)
        return -self.kappa * np.sinh(self.alpha * x)

    def closure_weight(self, x):
        """Weight whose integral against n is the closure moment w."""
        x = np.asarray(x, dtype=float)
        if self.family == LINEAR:
            return np.ones_like(x)
        if self.family == SINE:
            return np.cos(self.alpha * x)
        return np.cosh(self.alpha * x)

    @property
    def sign(self):
        return -1.0 if self.family == SINH else 1.0


@dataclass(frozen=True)
class ClosureState:
    N: float
    v: float
    w: float

    def as_array(self):
        return np.array([self.N, self.v, self.w])


@dataclass(frozen=True)
class StationaryPoint:
    N: float
    v: float
    w: float
    residual: float
    stability: str
    eigenvalues: tuple = ()


@dataclass
class ClosureTrajectory:
    t: np.ndarray
    N: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def states(self):
        return np.column_stack([self.N, self.v, self.w])


@dataclass
class CycleReport:
    status: str  # "converged", "cycle" or "inconclusive"
    period: float | None = None
    amplitude: float | None = None
    n_periods: int = 0
    final_state: tuple = ()
    stationary_point: StationaryPoint | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        sp = self.stationary_point
        return {
            "status": self.status,
            "period": self.period,
            "amplitude": self.amplitude,
            "n_periods": self.n_periods,
            "final_state": list(self.final_state),
            "stationary_point": None if sp is None else [sp.N, sp.v, sp.w],
            **self.diagnostics,
        }


def _check_kappa(p: ModelParams, spec: ForceSpec):
    if p.kappa != spec.kappa:
        raise ValidationError(
            f"force kappa {spec.kappa} differs from model kappa {p.kappa}", key="kappa"
        )


def closure_moments(p: ModelParams, spec: ForceSpec) -> DensityMoments:
    if spec.family == SINH:
        return hyperbolic_moments(p.binding_density, spec.alpha)
    if spec.family == SINE:
        return moments(p.binding_density, spec.alpha)
    return moments(p.binding_density, 0.0)


def velocity_functional(fld: DensityField, spec: ForceSpec, F: float) -> float:
    if spec.family == SINH:
        reach = spec.alpha * float(np.abs(fld.x).max())
        if reach > 700:
            raise OverflowRisk(f"sinh force overflows on this grid (alpha*|x| = {reach:.0f})")
    if spec.family == LINEAR:
        return -spec.kappa * fld.first_moment + F
    return fld.integrate(spec.phi) + F


def closure_moment(fld: DensityField, spec: ForceSpec) -> float:
    return fld.integrate(spec.closure_weight)


def state_from_field(fld: DensityField, spec: ForceSpec, F: float) -> ClosureState:
    return ClosureState(fld.mass, velocity_functional(fld, spec, F), closure_moment(fld, spec))


def _rhs(N, v, w, c_b, c_u, kappa, alpha, m_c, m_s, F, sign):
    K = c_b * (1.0 - N)
    dN = K - c_u * N
    dv = -kappa * alpha * v * w - kappa * K * m_s + c_u * (F - v)
    dw = sign * alpha * v * (v - F) / kappa + K * m_c - c_u * w
    return dN, dv, dw


def sine_rhs(s: ClosureState, p: ModelParams, alpha, mom: DensityMoments):
    return _rhs(s.N, s.v, s.w, p.c_b, p.c_u, p.kappa, alpha, mom.m_c, mom.m_s, p.F, 1.0)


def sinh_rhs(s: ClosureState, p: ModelParams, alpha, mom: DensityMoments):
    """As ``sine_rhs`` with hyperbolic moments and the quadratic term negated."""
    return _rhs(s.N, s.v, s.w, p.c_b, p.c_u, p.kappa, alpha, mom.m_c, mom.m_s, p.F, -1.0)


def closure_rhs(s: ClosureState, p: ModelParams, spec: ForceSpec, mom=None):
    if mom is None:
        mom = closure_moments(p, spec)
    if spec.family == LINEAR:
        dN, dv = linear_rhs(MeanFieldState(s.N, s.v), p)
        return dN, dv, dN
    if spec.family == SINE:
        return sine_rhs(s, p, spec.alpha, mom)
    return sinh_rhs(s, p, spec.alpha, mom)


def jacobian(s: ClosureState, p: ModelParams, spec: ForceSpec, mom=None):
    """Analytic Jacobian of the closure right-hand side in (N, v, w)."""
    if mom is None:
        mom = closure_moments(p, spec)
    c_b, c_u, kappa = p.c_b, p.c_u, p.kappa
    if spec.family == LINEAR:
        dvdN = -kappa * (s.v - c_b * p.m1)
        return np.array([
            [-(c_b + c_u), 0.0, 0.0],
            [dvdN, -kappa * s.N - c_u, 0.0],
            [-(c_b + c_u), 0.0, 0.0],
        ])
    a = spec.alpha
    return np.array([
        [-(c_b + c_u), 0.0, 0.0],
        [kappa * c_b * mom.m_s, -kappa * a * s.w - c_u, -kappa * a * s.v],
        [-c_b * mom.m_c, spec.sign * a * (2.0 * s.v - p.F) / kappa, -c_u],
    ])


def closure_integrate(p: ModelParams, spec: ForceSpec, init: ClosureState, t_grid,
                      dense=False):
    _check_kappa(p, spec)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    mom = closure_moments(p, spec)

    def f(_t, y):
        return closure_rhs(ClosureState(*y), p, spec, mom)

    if t_grid.size == 1:
        return ClosureTrajectory(t_grid, np.array([init.N]), np.array([init.v]), np.array([init.w]))
    sol = solve_ivp(f, (t_grid[0], t_grid[-1]), init.as_array(), method="DOP853",
                    t_eval=t_grid, rtol=RTOL, atol=ATOL, dense_output=dense)
    if sol.status != 0:
        raise StepFailure(sol.message)
    traj = ClosureTrajectory(sol.t, sol.y[0], sol.y[1], sol.y[2])
    if dense:
        traj.sol = sol
    return traj


# ------------------------------------------------------- stationary points

def stationary_cubic(p: ModelParams, spec: ForceSpec, mom=None):
    """Coefficients (highest first) of the cubic in v left after eliminating w.

    Setting dw/dt = 0 gives w = (s alpha v (v - F)/kappa + K m_c) / c_u with
    K = c_b (1 - N_bar); substituting into dv/dt = 0 and multiplying by c_u.
    """
    if mom is None:
        mom = closure_moments(p, spec)
    if p.c_u <= 0:
        raise ValidationError("stationary points need c_u > 0", key="c_u")
    N_bar = p.c_b / (p.c_b + p.c_u)
    K = p.c_b * (1.0 - N_bar)
    a, kappa, F, c_u, s = spec.alpha, p.kappa, p.F, p.c_u, spec.sign
    return np.array([
        -s * a * a,
        s * a * a * F,
        -(kappa * a * K * mom.m_c + c_u * c_u),
        c_u * c_u * F - kappa * K * mom.m_s * c_u,
    ])


def cubic_real_roots(coeffs, imag_tol=1e-9):
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.abs(roots).max()))
    real = np.sort(roots[np.abs(roots.imag) <= imag_tol * scale].real)
    # merge a numerically split double root
    out = []
    for r in real:
        if not out or abs(r - out[-1]) > 1e-6 * max(1.0, abs(r)):
            out.append(r)
    return np.array(out)


def _newton(G, DG, z0, tol=1e-13, maxiter=100):
    z = np.array(z0, dtype=float)
    g = G(z)
    norm = np.linalg.norm(g)
    for _ in range(maxiter):
        if norm <= tol * max(1.0, np.abs(z).max()):
            return z, norm, True
        try:
            step = np.linalg.solve(DG(z), -g)
        except np.linalg.LinAlgError:
            return z, norm, False
        lam = 1.0
        while lam > 1e-8:
            z_new = z + lam * step
            g_new = G(z_new)
            n_new = np.linalg.norm(g_new)
            if n_new < (1 - 1e-4 * lam) * norm or n_new == 0.0:
                break
            lam *= 0.5
        else:
            return z, norm, False
        z, g, norm = z_new, g_new, n_new
    return z, norm, norm <= tol * max(1.0, np.abs(z).max())


def classify(J):
    """Stability label from the full Jacobian.

    The N-direction always contracts at rate c_b + c_u, so the label is
    decided by the two eigenvalues of the (v, w) block.
    """
    eig = np.linalg.eigvals(J)
    block = np.linalg.eigvals(J[1:, 1:])
    re = block.real
    if np.all(re < 0):
        label = "stable_focus" if np.any(np.abs(block.imag) > 0) else "stable_node"
    elif np.all(re > 0):
        label = "unstable"
    elif np.any(re > 0) and np.any(re < 0):
        label = "saddle"
    else:
        label = "nonhyperbolic"
    return label, tuple(complex(e) for e in eig)


def default_box(p: ModelParams, spec: ForceSpec, mom=None):
    if mom is None:
        mom = closure_moments(p, spec)
    N_bar = p.c_b / (p.c_b + p.c_u)
    wscale = 2.0 * N_bar * max(1.0, abs(mom.m_c))
    vhalf = 2.0 * p.kappa
    if spec.family == SINH:
        # no a-priori bound on v; size from the balance alpha^2 v^2 ~ kappa alpha K m_c + c_u^2
        K = p.c_b * (1.0 - N_bar)
        a = spec.alpha
        reach = abs(p.F) + math.sqrt(p.kappa * a * K * abs(mom.m_c) + p.c_u**2) / a
        vhalf = max(vhalf, 2.0 * reach)
        wscale = max(wscale, 2.0 * (a * vhalf * (vhalf + abs(p.F)) / p.kappa + K * abs(mom.m_c)) / p.c_u)
    return (p.F - vhalf, p.F + vhalf, -wscale, wscale)


def find_stationary_points(p: ModelParams, spec: ForceSpec, box=None, n_starts=12,
                           max_widen=6, diagnostics=None):
    """All stationary points reachable by damped Newton from a start grid.

    N is fixed to c_b / (c_b + c_u) and Newton solves dv/dt = dw/dt = 0. The
    box doubles while roots are found on or beyond its boundary.
    """
    _check_kappa(p, spec)
    if p.c_u <= 0:
        raise ValidationError("stationary points need c_u > 0", key="c_u")
    mom = closure_moments(p, spec)
    N_bar = p.c_b / (p.c_b + p.c_u)

    def G(z):
        _, dv, dw = closure_rhs(ClosureState(N_bar, z[0], z[1]), p, spec, mom)
        return np.array([dv, dw])

    def DG(z):
        return jacobian(ClosureState(N_bar, z[0], z[1]), p, spec, mom)[1:, 1:]

    if box is None:
        box = default_box(p, spec, mom)
    roots = []
    failures = 0
    for _ in range(max_widen + 1):
        v_lo, v_hi, w_lo, w_hi = box
        found_edge = False
        for v0 in np.linspace(v_lo, v_hi, n_starts):
            for w0 in np.linspace(w_lo, w_hi, n_starts):
                z, res, ok = _newton(G, DG, (v0, w0))
                if not ok:
                    failures += 1
                    continue
                if not any(np.linalg.norm(z - r) <= DEDUP_TOL * max(1.0, np.abs(r).max()) for r in roots):
                    roots.append(z)
        for r in roots:
            dv_ = 0.05 * (v_hi - v_lo)
            dw_ = 0.05 * (w_hi - w_lo)
            if not (v_lo + dv_ < r[0] < v_hi - dv_ and w_lo + dw_ < r[1] < w_hi - dw_):
                found_edge = True
        if not found_edge:
            break
        vc, wc = 0.5 * (v_lo + v_hi), 0.5 * (w_lo + w_hi)
        vh, wh = v_hi - vc, w_hi - wc
        box = (vc - 2 * vh, vc + 2 * vh, wc - 2 * wh, wc + 2 * wh)
    if diagnostics is not None:
        diagnostics["newton_failures"] = failures
        diagnostics["box"] = box
    points = []
    for v, w in sorted(roots, key=lambda r: r[0]):
        s = ClosureState(N_bar, v, w)
        res = float(np.linalg.norm(G(np.array([v, w]))))
        label, eig = classify(jacobian(s, p, spec, mom))
        points.append(StationaryPoint(N_bar, float(v), float(w), res, label, eig))
    return points


# ------------------------------------------------------------ limit cycles

def _polish(p, spec, state, mom):
    """Newton from a nearby state; returns a StationaryPoint or None."""
    N_bar = p.c_b / (p.c_b + p.c_u)

    def G(z):
        _, dv, dw = closure_rhs(ClosureState(N_bar, z[0], z[1]), p, spec, mom)
        return np.array([dv, dw])

    def DG(z):
        return jacobian(ClosureState(N_bar, z[0], z[1]), p, spec, mom)[1:, 1:]

    z, res, ok = _newton(G, DG, (state[1], state[2]))
    if not ok:
        return None
    label, eig = classify(jacobian(ClosureState(N_bar, *z), p, spec, mom))
    return StationaryPoint(N_bar, float(z[0]), float(z[1]), float(res), label, eig)


def _nearest(points, state):
    best, dist = None, math.inf
    for sp in points:
        d = float(np.linalg.norm(np.array([sp.N, sp.v, sp.w]) - state))
        if d < dist:
            best, dist = sp, d
    return best, dist


def peak_cycle_stats(sol, t_max, cycle_rtol=1e-4, min_periods=5, component=1):
    """Period and amplitude from the v-maximum events in the second half of a run.

    ``sol`` is a dense solve_ivp result whose first event marks maxima of
    ``component``. Returns (period, amplitude, n_periods, stable, spreads) or
    None when fewer than min_periods full periods were seen.
    """
    t_peaks = np.asarray(sol.t_events[0])
    t_peaks = t_peaks[t_peaks >= 0.5 * t_max]
    if t_peaks.size < min_periods + 1:
        return None
    periods = np.diff(t_peaks)[-min_periods:]
    amps = []
    for t0, t1 in zip(t_peaks[-min_periods - 1:-1], t_peaks[-min_periods:]):
        vs = sol.sol(np.linspace(t0, t1, 400))[component]
        amps.append(0.5 * (vs.max() - vs.min()))
    amps = np.array(amps)
    P, A = float(periods.mean()), float(amps.mean())
    stable = bool(np.abs(periods - P).max() <= cycle_rtol * P
                  and np.abs(amps - A).max() <= cycle_rtol * max(A, 1e-300))
    spreads = {"period_spread": float(np.ptp(periods)), "amplitude_spread": float(np.ptp(amps))}
    return P, A, int(periods.size), stable, spreads


def detect_limit_cycle(p: ModelParams, spec: ForceSpec, init: ClosureState, t_max,
                       conv_tol=1e-8, cycle_rtol=1e-4, min_periods=5, points=None):
    """Classify the long-time behaviour of a closure trajectory.

    Returns a CycleReport with status ``converged`` (ends within conv_tol of
    a stationary point), ``cycle`` (maxima of v recur with period and
    amplitude stable to cycle_rtol over min_periods periods) or
    ``inconclusive``.
    """
    mom = closure_moments(p, spec)
    if points is None:
        points = find_stationary_points(p, spec)
    start = init.as_array()
    sp, dist = _nearest(points, start)
    if sp is not None and dist <= conv_tol:
        return CycleReport("converged", final_state=tuple(start), stationary_point=sp,
                           diagnostics={"distance": dist, "t_final": 0.0})

    def f(_t, y):
        return closure_rhs(ClosureState(*y), p, spec, mom)

    def v_peak(_t, y):
        return f(_t, y)[1]

    v_peak.direction = -1
    sol = solve_ivp(f, (0.0, t_max), start, method="DOP853", rtol=RTOL, atol=ATOL,
                    events=v_peak, dense_output=True)
    if sol.status == -1:
        raise StepFailure(sol.message)
    final = sol.y[:, -1]
    polished = _polish(p, spec, final, mom)
    candidates = list(points) + ([polished] if polished is not None else [])
    sp, dist = _nearest(candidates, final)
    diag = {"distance": dist, "t_final": float(sol.t[-1])}
    if sp is not None and dist <= conv_tol:
        return CycleReport("converged", final_state=tuple(final), stationary_point=sp,
                           diagnostics=diag)

    stats = peak_cycle_stats(sol, t_max, cycle_rtol, min_periods)
    if stats is not None:
        P, A, n_per, stable, spread = stats
        diag.update(spread)
        if stable and P > 0 and A > 1e-6:
            return CycleReport("cycle", period=P, amplitude=A, n_periods=n_per,
                               final_state=tuple(final), diagnostics=diag)
    return CycleReport("inconclusive", final_state=tuple(final), stationary_point=sp,
                       diagnostics=diag)


# ------------------------------------------------------ PDE cross-check

def closure_domain(p: ModelParams, spec: ForceSpec, t_end, init=None):
    """PDE grid extent, with velocity bounds from the exact closure ODE."""
    init = init or ClosureState(0.0, p.F, 0.0)
    ts = np.linspace(0.0, t_end, 401)
    traj = closure_integrate(p, spec, init, ts)
    v_range = (float(traj.v.min()), float(traj.v.max()))
    if p.c_u > 0:
        try:
            for sp in find_stationary_points(p, spec, n_starts=6):
                if sp.stability.startswith("stable"):
                    v_range = (min(v_range[0], sp.v), max(v_range[1], sp.v))
        except ValidationError:
            pass
    return domain_for(p, t_end, v_range=v_range)


def evolve_nonlinear(fld: DensityField, p: ModelParams, spec: ForceSpec, cfg: PdeConfig, **kw):
    """Transport equation driven by the nonlinear velocity; records w too."""
    _check_kappa(p, spec)
    return evolve(
        fld, p, cfg,
        velocity=lambda f: velocity_functional(f, spec, p.F),
        extras={"w": lambda f: closure_moment(f, spec)},
        **kw,
    )


def closure_residuals(result, p: ModelParams, spec: ForceSpec):
    """Per-step mismatch between the PDE moment series and the closure ODE.

    Uses the trapezoidal consistency defect
    (X_{k+1} - X_k)/dt - (f(X_k) + f(X_{k+1}))/2 for X = (N, v, w).
    """
    mom = closure_moments(p, spec)
    X = np.column_stack([result.N, result.v, result.extras["w"]])
    f = np.array([closure_rhs(ClosureState(*row), p, spec, mom) for row in X])
    dt = np.diff(result.t)[:, None]
    return (X[1:] - X[:-1]) / dt - 0.5 * (f[1:] + f[:-1])
