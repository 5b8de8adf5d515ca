"""Cross-layer consistency suite behind ``motorsim validate``.

Every check returns a CheckResult; the command exits non-zero iff one fails.
Randomized checks draw their parameter sets from fixed seeds so the report
is reproducible. ``flip_F`` runs the stochastic layer with the sign of F
reversed, a mutation the velocity checks must catch.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meanfield, nonlinear, pde, stochastic
from .config import DEFAULT_CONFIG, parse_config
from .model import BindingDensity, ModelParams

DEFAULT_PARAMS = ModelParams(1.0, 1.0, 1.0, 0.0, BindingDensity.gaussian(1.0, 0.5))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Context:
    params: ModelParams = DEFAULT_PARAMS
    seed: int = 7
    jobs: int = 1
    flip_F: bool = False
    workdir: Path | None = None


def _sim_params(ctx, p):
    return p.replace(F=-p.F) if ctx.flip_F else p


def _mc_point(args):
    p, M, cfg = args
    rec = stochastic.simulate(p, M, cfg)
    return stochastic.stationary_stats(rec)


def _map(ctx, fn, tasks):
    if ctx.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=ctx.jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def random_gaussian_params(rng, F_range=(-1.0, 1.0)):
    return ModelParams(
        c_b=rng.uniform(0.2, 3.0),
        c_u=rng.uniform(0.1, 3.0),
        kappa=rng.uniform(0.3, 3.0),
        F=rng.uniform(*F_range),
        binding_density=BindingDensity.gaussian(rng.uniform(0.2, 2.0), rng.uniform(0.05, 1.0)),
    )


def weak_force_params(rng, positive=False):
    """Random set with F < kappa m1 (and F > 0 when ``positive``)."""
    p = random_gaussian_params(rng, (0.0, 1.0))
    km1 = p.kappa * p.m1
    lo = 0.05 * km1 if positive else -km1
    return p.replace(F=rng.uniform(lo, 0.95 * km1))


# ------------------------------------------------------------------- checks

def check_telegraph(ctx: Context, n_sets=20, motors=1001):
    rng = np.random.default_rng([ctx.seed, 1])
    tasks, exact_err = [], 0.0
    for k in range(n_sets):
        c_b, c_u = rng.uniform(0.2, 5.0, size=2)
        p = DEFAULT_PARAMS.replace(c_b=c_b, c_u=c_u)
        N_bar, _ = meanfield.stationary(p)
        exact_err = max(exact_err, abs(N_bar - c_b / (c_b + c_u)))
        scale = 1.0 / (c_b + c_u)
        cfg = stochastic.SimConfig(seed=ctx.seed + k, t_end=200 * scale, burn_in=10 * scale,
                                   sample_interval=0.1 * scale)
        tasks.append((_sim_params(ctx, p), motors, cfg))
    stats = _map(ctx, _mc_point, tasks)
    z = [abs(s.N_hat - t[0].c_b / (t[0].c_b + t[0].c_u)) / s.se_N for s, t in zip(stats, tasks)]
    hits = sum(zi <= 3.0 for zi in z)
    ok = exact_err <= 1e-12 and hits >= 18
    return CheckResult("1 telegraph steady state", ok,
                       f"ODE error {exact_err:.1e}, MC within 3 SE in {hits}/{n_sets}",
                       {"max_ode_error": exact_err, "mc_hits": hits, "z": z})


def check_mc_velocity(ctx: Context, t_end=5000.0, sizes=(101, 401, 1601)):
    p = DEFAULT_PARAMS
    v_bar = meanfield.stationary(p)[1]
    tasks = [(_sim_params(ctx, p), M,
              stochastic.SimConfig(seed=ctx.seed, t_end=t_end, burn_in=20.0, sample_interval=0.5))
             for M in sizes]
    stats = _map(ctx, _mc_point, tasks)
    d = [abs(s.v_hat - v_bar) for s in stats]
    se = [s.se_v for s in stats]
    # consecutive sizes may tie within noise; the ends must be strictly ordered
    monotone = all(d[i + 1] <= d[i] + 2 * math.hypot(se[i], se[i + 1]) for i in range(len(d) - 1))
    ok = monotone and d[-1] < d[0] and d[-1] <= 3 * se[-1] and abs(v_bar + 1 / 3) <= 1e-12
    parts = ", ".join(f"M={M}: |dv|={di:.2e} (SE {si:.1e})" for M, di, si in zip(sizes, d, se))
    return CheckResult("2 stationary velocity", ok, f"v_bar={v_bar:.6f}; {parts}",
                       {"v_bar": v_bar, "errors": d, "se": se})


def check_mc_velocity_force(ctx: Context, F=0.25, motors=401, t_end=1000.0):
    """MC velocity under a load; the sign-flip mutation must fail here."""
    p = DEFAULT_PARAMS.replace(F=F)
    v_bar = meanfield.stationary(p)[1]
    cfg = stochastic.SimConfig(seed=ctx.seed, t_end=t_end, burn_in=20.0, sample_interval=0.5)
    s = _mc_point((_sim_params(ctx, p), motors, cfg))
    z = abs(s.v_hat - v_bar) / s.se_v
    # finite-M bias is O(1/M), well inside 4 SE at this size
    ok = z <= 4.0
    return CheckResult("velocity under load (MC vs ODE)", ok,
                       f"F={F}: v_hat={s.v_hat:.5f}, v_bar={v_bar:.5f}, {z:.1f} SE", {"z": z})


def check_optimal_rate(ctx: Context, n_sets=20):
    rng = np.random.default_rng([ctx.seed, 3])
    worst = 0.0
    for _ in range(n_sets):
        p = weak_force_params(rng)
        r = meanfield.optimal_unbind_rate(p, check=False)
        worst = max(worst, abs(r.c_u_numeric - r.c_u_opt) / r.c_u_opt)
    ok = worst <= meanfield.OPTIMIZER_AGREEMENT
    return CheckResult("3 optimal unbinding rate", ok,
                       f"closed form vs golden section, worst rel error {worst:.1e} over {n_sets} sets",
                       {"worst_rel": worst})


def check_speed_discrepancy(ctx: Context):
    rows = []
    kappas = [1.0, 4.0]
    if ctx.params.kappa not in kappas:
        kappas.append(ctx.params.kappa)
    for kappa in kappas:
        rows.append(meanfield.speed_discrepancy(DEFAULT_PARAMS.replace(kappa=kappa)))
    k1, k4 = rows[0], rows[1]
    ok = (abs(k1["v_opt_stationary"] - 1 / 3) <= 1e-12
          and abs(k1["v_opt_published"] - 1 / 3) <= 1e-12
          and abs(k4["ratio"] - 4.0) <= 1e-12)
    parts = "; ".join(
        f"kappa={r['kappa']:g}: stationary-formula speed {r['v_opt_stationary']:.6f}, "
        f"published extremal speed {r['v_opt_published']:.6f}, ratio {r['ratio']:.6f}"
        for r in rows)
    note = " (they differ by a factor kappa; the stationary formula is used)"
    return CheckResult("4 extremal speed discrepancy", ok, parts + note, {"rows": rows})


def check_zero_threshold(ctx: Context, n_sets=10):
    rng = np.random.default_rng([ctx.seed, 5])
    worst, flips = 0.0, 0
    for _ in range(n_sets):
        p = weak_force_params(rng, positive=True)
        c0 = p.c_b * (p.kappa * p.m1 - p.F) / p.F
        v0 = meanfield.stationary(p.replace(c_u=c0))[1]
        worst = max(worst, abs(v0))
        lo = meanfield.stationary(p.replace(c_u=0.9 * c0))[1]
        hi = meanfield.stationary(p.replace(c_u=1.1 * c0))[1]
        flips += lo < 0 < hi
    ok = worst <= 1e-9 and flips == n_sets
    return CheckResult("5 zero-velocity threshold", ok,
                       f"max |v(c_u*)| {worst:.1e}, sign change in {flips}/{n_sets}",
                       {"worst": worst, "flips": flips})


def check_ode_telegraph(ctx: Context):
    p = ctx.params
    ts = np.linspace(0.0, 10.0, 1001)
    worst = 0.0
    for N0 in (0.0, 0.3, 1.0):
        traj = meanfield.integrate(p, meanfield.MeanFieldState(N0, p.F), ts)
        exact = meanfield.telegraph_solution(ts, N0, p.c_b, p.c_u)
        worst = max(worst, float(np.abs(traj.N - exact).max()))
    return CheckResult("6 ODE vs analytic N(t)", worst <= 1e-8, f"max error {worst:.1e}",
                       {"worst": worst})


def check_pde_moments(ctx: Context, J=4000):
    p = ctx.params
    lo, hi = pde.domain_for(p, 10.0)
    cfg = pde.PdeConfig(lo, hi, J, 0.5, 10.0)
    res = pde.evolve(pde.empty_field(cfg), p, cfg)
    traj = meanfield.integrate(p, meanfield.MeanFieldState(0.0, p.F), res.t)
    err = max(float(np.abs(res.N - traj.N).max()), float(np.abs(res.v - traj.v).max()))
    return CheckResult("7 PDE moments vs ODE", err <= 1e-3, f"sup error {err:.1e} at J={J}",
                       {"sup": err})


def check_stationary_profile(ctx: Context, J=4000):
    p = ctx.params
    N_bar, v_bar = meanfield.stationary(p)
    fn = pde.stationary_profile_fn(p)
    lo, hi = p.binding_density.support(1e-14)
    span = abs(v_bar) * 40.0 / p.c_u
    a, b = lo - span - 1.0, hi + span + 1.0
    from scipy.integrate import quad

    pts = np.linspace(a, b, 41)
    mass = sum(quad(fn, x0, x1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
               for x0, x1 in zip(pts[:-1], pts[1:]))
    first = sum(quad(lambda x: x * fn(x), x0, x1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                for x0, x1 in zip(pts[:-1], pts[1:]))
    mass_err = abs(mass - N_bar)
    vel_err = abs(-p.kappa * first + p.F - v_bar)
    t_end = min(400.0, 40.0 / min(1.0, p.c_u))
    x_lo, x_hi = pde.domain_for(p, t_end)
    cfg = pde.PdeConfig(x_lo, x_hi, J, 0.5, t_end)
    res = pde.evolve(pde.empty_field(cfg), p, cfg)
    l1 = pde.l1_distance(res.final, pde.stationary_profile(p, res.final.x))
    ok = mass_err <= 1e-8 and vel_err <= 1e-6 and l1 <= 1e-2
    return CheckResult("8 stationary profile", ok,
                       f"mass error {mass_err:.1e}, velocity error {vel_err:.1e}, "
                       f"L1 to PDE at t={t_end:g} {l1:.1e}",
                       {"mass_err": mass_err, "vel_err": vel_err, "l1": l1})


def check_closure_exactness(ctx: Context, Js=(1000, 2000, 4000), t_end=5.0):
    p = DEFAULT_PARAMS
    spec = nonlinear.ForceSpec(nonlinear.SINE, p.kappa, 1.0)
    lo, hi = nonlinear.closure_domain(p, spec, t_end)
    errs = []
    for J in Js:
        cfg = pde.PdeConfig(lo, hi, J, 0.5, t_end, dt_max=2 * (hi - lo) / J)
        res = nonlinear.evolve_nonlinear(pde.empty_field(cfg), p, spec, cfg)
        errs.append(float(np.abs(nonlinear.closure_residuals(res, p, spec)).max()))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    ok = all(o >= 0.8 for o in orders)
    return CheckResult("9 sine closure exactness", ok,
                       "max residuals " + ", ".join(f"J={J}: {e:.2e}" for J, e in zip(Js, errs))
                       + "; orders " + ", ".join(f"{o:.2f}" for o in orders),
                       {"errors": errs, "orders": orders})


def rich_sine_params(rng):
    """Sine sets near the resonance mu ~ pi/alpha, where three roots are common."""
    alpha = rng.uniform(0.5, 3.0)
    p = ModelParams(
        c_b=rng.uniform(0.2, 3.0),
        c_u=rng.uniform(0.1, 1.0),
        kappa=rng.uniform(0.5, 3.0),
        F=rng.uniform(-0.5, 0.5),
        binding_density=BindingDensity.gaussian(rng.uniform(0.5, 1.5) * math.pi / alpha,
                                                rng.uniform(0.02, 0.2)),
    )
    return p, alpha


def check_root_count(ctx: Context, n_sets=50):
    rng = np.random.default_rng([ctx.seed, 10])
    mismatches, worst_res, counts = 0, 0.0, {}
    for k in range(n_sets):
        if k % 2 == 0:
            p = random_gaussian_params(rng)
            alpha = rng.uniform(0.3, 3.0)
        else:
            p, alpha = rich_sine_params(rng)
        spec = nonlinear.ForceSpec(nonlinear.SINE, p.kappa, alpha)
        pts = nonlinear.find_stationary_points(p, spec)
        roots = nonlinear.cubic_real_roots(nonlinear.stationary_cubic(p, spec))
        mismatches += len(pts) != len(roots)
        counts[len(roots)] = counts.get(len(roots), 0) + 1
        if pts:
            worst_res = max(worst_res, max(sp.residual for sp in pts))
    ok = mismatches == 0 and worst_res <= nonlinear.ROOT_TOL
    dist = ", ".join(f"{n} roots: {c}" for n, c in sorted(counts.items()))
    return CheckResult("10 stationary point count", ok,
                       f"{mismatches} mismatches over {n_sets} sets ({dist}), worst residual {worst_res:.1e}",
                       {"mismatches": mismatches, "worst_residual": worst_res, "counts": counts})


def check_jacobian(ctx: Context, n_states=100, h=1e-6):
    rng = np.random.default_rng([ctx.seed, 11])
    worst = 0.0
    for _ in range(n_states):
        p = random_gaussian_params(rng)
        spec = nonlinear.ForceSpec(nonlinear.SINE, p.kappa, rng.uniform(0.3, 3.0))
        mom = nonlinear.closure_moments(p, spec)
        z = np.array([rng.uniform(0, 1), rng.uniform(-2, 2), rng.uniform(-1, 1)])
        J = nonlinear.jacobian(nonlinear.ClosureState(*z), p, spec, mom)
        fd = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fp = nonlinear.closure_rhs(nonlinear.ClosureState(*(z + e)), p, spec, mom)
            fm = nonlinear.closure_rhs(nonlinear.ClosureState(*(z - e)), p, spec, mom)
            fd[:, j] = (np.asarray(fp) - np.asarray(fm)) / (2 * h)
        worst = max(worst, float(np.abs(J - fd).max() / max(1.0, np.abs(J).max())))
    return CheckResult("11 Jacobian vs finite differences", worst <= 1e-6,
                       f"worst relative error {worst:.1e} over {n_states} states", {"worst": worst})


def check_determinism(ctx: Context):
    from . import runs

    base = dict(DEFAULT_CONFIG, seed=ctx.seed)
    sim_cfg = parse_config({**base, "sim": {"motors": 101, "t_end": 50.0, "burn_in": 5.0,
                                            "record_events": True}}, mode="sim")
    sweep_cfg = parse_config({**base, "sweep": {"param": "c_u", "mode": "simulate", "lo": 0.5,
                                                "hi": 2.0, "count": 4, "scale": "log",
                                                "sim": {"motors": 51, "t_end": 40.0,
                                                        "burn_in": 5.0}}}, mode="sweep")
    with tempfile.TemporaryDirectory(dir=ctx.workdir) as tmp:
        tmp = Path(tmp)
        dirs = [tmp / name for name in ("sim_a", "sim_b", "sweep_a", "sweep_b")]
        for d in dirs:
            d.mkdir()
        runs.run_simulate(sim_cfg, dirs[0])
        runs.run_simulate(sim_cfg, dirs[1])
        runs.run_sweep(sweep_cfg, dirs[2], jobs=1)
        runs.run_sweep(sweep_cfg, dirs[3], jobs=max(2, ctx.jobs))
        same = {
            "events.csv": filecmp.cmp(dirs[0] / "events.csv", dirs[1] / "events.csv", shallow=False),
            "trajectory.csv": filecmp.cmp(dirs[0] / "trajectory.csv", dirs[1] / "trajectory.csv",
                                          shallow=False),
            "sweep.csv": filecmp.cmp(dirs[2] / "sweep.csv", dirs[3] / "sweep.csv", shallow=False),
        }
    ok = all(same.values())
    return CheckResult("12 determinism", ok,
                       ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()),
                       same)


CHECKS = (
    check_telegraph,
    check_mc_velocity,
    check_mc_velocity_force,
    check_optimal_rate,
    check_speed_discrepancy,
    check_zero_threshold,
    check_ode_telegraph,
    check_pde_moments,
    check_stationary_profile,
    check_closure_exactness,
    check_root_count,
    check_jacobian,
    check_determinism,
)


def run_all(ctx: Context, checks=CHECKS, report=None):
    results = []
    for check in checks:
        try:
            r = check(ctx)
        except Exception as e:  # a crashing check is a failed check
            r = CheckResult(check.__name__, False, f"{type(e).__name__}: {e}")
        results.append(r)
        if report is not None:
            report(r)
    return results
