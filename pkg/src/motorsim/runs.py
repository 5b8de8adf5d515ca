"""Mode runners shared by the command line, sweeps and the validation suite.

Each ``run_*`` takes a parsed RunConfig and an output directory, writes its
CSV/JSON files there and returns the summary dict it wrote.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import meanfield, nonlinear, pde, stochastic
from .config import RunConfig
from .errors import DegenerateRate, MotorSimError, RegimeError
from .io import provenance, write_csv, write_json


def _prov(cfg: RunConfig):
    return provenance(cfg.raw, cfg.seed)


def predictions(p):
    try:
        N_bar, v_bar = meanfield.stationary(p)
    except DegenerateRate:
        N_bar, v_bar = 1.0, 0.0
    return {"N_bar_pred": N_bar, "v_bar_pred": v_bar}


def run_simulate(cfg: RunConfig, out: Path, jobs=1, flip_F=False):
    blk = cfg.block("sim")
    p = cfg.params
    sim_p = p.replace(F=-p.F) if flip_F else p
    sc = stochastic.SimConfig(
        seed=cfg.seed,
        t_end=blk["t_end"],
        burn_in=blk["burn_in"],
        sample_interval=blk["sample_interval"],
        replicas=blk["replicas"],
        record_events=blk["record_events"],
    )
    records = stochastic.simulate_replicas(sim_p, blk["motors"], sc, jobs=jobs)
    prov = _prov(cfg)
    per_replica = []
    for rec in records:
        suffix = "" if rec.replica == 0 else f"_r{rec.replica}"
        write_csv(out / f"trajectory{suffix}.csv", ["t", "N", "v", "xbar"],
                  zip(rec.t, rec.N, rec.v, rec.xbar), prov)
        if rec.events is not None:
            write_csv(out / f"events{suffix}.csv", ["t", "kind", "motor", "x"],
                      stochastic.events_table(rec), prov)
        st = stochastic.stationary_stats(rec)
        per_replica.append({"replica": rec.replica, "n_events": rec.n_events, **st.as_dict()})
    pooled = stochastic.pooled_stats(records)
    pred = predictions(p)
    summary = {
        "mode": "simulate",
        "motors": blk["motors"],
        **pooled.as_dict(),
        **pred,
        "N_z": (pooled.N_hat - pred["N_bar_pred"]) / pooled.se_N if pooled.se_N > 0 else None,
        "v_z": (pooled.v_hat - pred["v_bar_pred"]) / pooled.se_v if pooled.se_v > 0 else None,
        "replicas": per_replica,
    }
    write_json(out / "summary.json", summary, prov)
    return summary


def _regime_block(p):
    rep = meanfield.classify_regime(p)
    out = rep.as_dict()
    if p.F == 0:
        out["speed_discrepancy"] = meanfield.speed_discrepancy(p)
    return out


def run_meanfield(cfg: RunConfig, out: Path, jobs=1):
    blk = cfg.block("ode")
    p = cfg.params
    v0 = p.F if blk["v0"] is None else blk["v0"]
    ts = np.linspace(0.0, blk["t_end"], blk["n_points"])
    traj = meanfield.integrate(p, meanfield.MeanFieldState(blk["N0"], v0), ts)
    prov = _prov(cfg)
    write_csv(out / "trajectory.csv", ["t", "N", "v"], traj.rows(), prov)
    summary = {"mode": "meanfield", **predictions(p), "final": {"N": traj.N[-1], "v": traj.v[-1]}}
    summary["regime"] = _regime_block(p) if p.c_u > 0 else {"regime": None}
    write_json(out / "summary.json", summary, prov)
    return summary


def _pde_cfg(p, blk, t_end, v_range=None):
    lo, hi = blk["x_min"], blk["x_max"]
    if lo is None or hi is None:
        auto_lo, auto_hi = pde.domain_for(p, t_end, v_range=v_range)
        lo = auto_lo if lo is None else lo
        hi = auto_hi if hi is None else hi
    return pde.PdeConfig(lo, hi, blk["J"], blk["cfl"], t_end, tuple(blk["snapshots"]))


def run_pde(cfg: RunConfig, out: Path, jobs=1):
    blk = cfg.block("pde")
    p = cfg.params
    prov = _prov(cfg)
    summary = {"mode": "pde", **predictions(p)}
    if blk["single_motor"]:
        lo, hi = pde.single_motor_domain(p)
        if blk["x_min"] is not None:
            lo = blk["x_min"]
        if blk["x_max"] is not None:
            hi = blk["x_max"]
        pc = pde.PdeConfig(lo, hi, blk["J"], blk["cfl"], blk["t_end"], tuple(blk["snapshots"]))
        res = pde.single_motor_evolve(pde.empty_field(pc), p, pc)
        exact = 1.0 - pde.unbound_probability(res.t, p.c_b, p.c_u)
        write_csv(out / "series.csv", ["t", "N"], zip(res.t, res.N), prov)
        summary.update({"single_motor": True, "max_mass_error": float(np.abs(res.N - exact).max()),
                        "final_mass": res.N[-1]})
    else:
        pc = _pde_cfg(p, blk, blk["t_end"])
        res = pde.evolve(pde.empty_field(pc), p, pc)
        write_csv(out / "series.csv", ["t", "N", "v"], zip(res.t, res.N, res.v), prov)
        traj = meanfield.integrate(p, meanfield.MeanFieldState(0.0, p.F), res.t)
        summary.update({
            "grid": {"x_min": pc.x_min, "x_max": pc.x_max, "J": pc.J, "cfl": pc.cfl},
            "final": {"N": res.N[-1], "v": res.v[-1]},
            "ode_sup_diff": {"N": float(np.abs(res.N - traj.N).max()),
                             "v": float(np.abs(res.v - traj.v).max())},
        })
        if blk["stationary_check"] and p.c_u > 0:
            st = pde.stationary_profile(p, res.final.x)
            write_csv(out / "stationary.csv", ["x", "n"], zip(st.x, st.n), prov)
            summary["stationary"] = {
                "l1_distance": pde.l1_distance(res.final, st),
                "mass": st.mass,
                "velocity": -p.kappa * st.first_moment + p.F,
            }
    for snap in res.snapshots:
        write_csv(out / f"snapshot_t{snap.t:g}.csv", ["x", "n"], zip(snap.x, snap.n), prov)
    write_json(out / "summary.json", summary, prov)
    return summary


def _nl_spec(p, blk):
    return nonlinear.ForceSpec(blk["family"], p.kappa, blk["alpha"])


def run_nonlinear(cfg: RunConfig, out: Path, jobs=1):
    blk = cfg.block("nl")
    p = cfg.params
    spec = _nl_spec(p, blk)
    prov = _prov(cfg)
    v0 = p.F if blk["v0"] is None else blk["v0"]
    init = nonlinear.ClosureState(blk["N0"], v0, blk["w0"])
    ts = np.linspace(0.0, blk["t_end"], blk["n_points"])
    traj = nonlinear.closure_integrate(p, spec, init, ts)
    write_csv(out / "trajectory.csv", ["t", "N", "v", "w"], zip(traj.t, traj.N, traj.v, traj.w), prov)
    summary = {"mode": "nonlinear", "family": spec.family, "alpha": spec.alpha, **predictions(p)}
    if p.c_u > 0 and spec.family != nonlinear.LINEAR:
        diag = {}
        points = nonlinear.find_stationary_points(p, spec, n_starts=blk["n_starts"], diagnostics=diag)
        write_csv(out / "stationary_points.csv", ["v", "w", "residual", "stability"],
                  ((sp.v, sp.w, sp.residual, sp.stability) for sp in points), prov)
        roots = nonlinear.cubic_real_roots(nonlinear.stationary_cubic(p, spec))
        cyc = nonlinear.detect_limit_cycle(p, spec, init, blk["cycle_t_max"], points=points)
        summary.update({
            "stationary_points": [
                {"N": sp.N, "v": sp.v, "w": sp.w, "residual": sp.residual, "stability": sp.stability}
                for sp in points
            ],
            "cubic_real_roots": list(roots),
            "newton_failures": diag.get("newton_failures"),
            "cycle": cyc.as_dict(),
        })
    if blk["pde_check"]:
        lo, hi = nonlinear.closure_domain(p, spec, blk["t_end"], init=None)
        pc = pde.PdeConfig(lo, hi, blk["J"], blk["cfl"], blk["t_end"], dt_max=2 * (hi - lo) / blk["J"])
        res = nonlinear.evolve_nonlinear(pde.empty_field(pc), p, spec, pc)
        ref = nonlinear.closure_integrate(p, spec, nonlinear.ClosureState(0.0, p.F, 0.0), res.t)
        summary["pde_check"] = {
            "sup_diff": max(float(np.abs(res.N - ref.N).max()), float(np.abs(res.v - ref.v).max()),
                            float(np.abs(res.extras["w"] - ref.w).max())),
            "max_residual": float(np.abs(nonlinear.closure_residuals(res, p, spec)).max()),
        }
    write_json(out / "summary.json", summary, prov)
    return summary


# ------------------------------------------------------------------ sweeps

def sweep_grid(blk):
    if blk["values"] is not None:
        return list(blk["values"])
    if blk["scale"] == "log":
        return list(np.geomspace(blk["lo"], blk["hi"], blk["count"]))
    return list(np.linspace(blk["lo"], blk["hi"], blk["count"]))


SWEEP_COLUMNS = {
    "meanfield": ["regime", "N_end", "v_end"],
    "simulate": ["N_hat", "v_hat", "se_N", "se_v"],
    "pde": ["N_end", "v_end", "l1_stationary"],
    "nonlinear": ["n_stationary", "n_stable", "cycle_status"],
}


def _sweep_point(args):
    """Run one grid point; never raises, failures go to the errors column."""
    index, value, base, name, mode, sub, seed = args
    row = {"index": index, "value": value, "N_bar": None, "v_bar": None, "errors": ""}
    try:
        from .model import validate_params

        alpha = sub.get("alpha") if mode == "nonlinear" else None
        if name == "alpha":
            if mode != "nonlinear":
                raise MotorSimError("alpha sweeps need mode 'nonlinear'")
            alpha = value
            p = base
        else:
            p = base.replace(**{name: value})
        validate_params(p)
        pred = predictions(p)
        row["N_bar"], row["v_bar"] = pred["N_bar_pred"], pred["v_bar_pred"]
        if p.c_u == 0:
            raise DegenerateRate("stationary velocity needs c_u > 0; reported limit 0")
        if mode == "meanfield":
            ts = np.linspace(0.0, sub["t_end"], sub["n_points"])
            v0 = p.F if sub["v0"] is None else sub["v0"]
            traj = meanfield.integrate(p, meanfield.MeanFieldState(sub["N0"], v0), ts)
            row["N_end"], row["v_end"] = traj.N[-1], traj.v[-1]
            try:
                row["regime"] = meanfield.classify_regime(p).regime
            except (RegimeError, AssertionError) as e:
                row["regime"] = ""
                row["errors"] = str(e)
        elif mode == "simulate":
            sc = stochastic.SimConfig(seed=seed, t_end=sub["t_end"], burn_in=sub["burn_in"],
                                      sample_interval=sub["sample_interval"], replicas=1)
            rec = stochastic.simulate(p, sub["motors"], sc, replica=index)
            st = stochastic.stationary_stats(rec)
            row.update(N_hat=st.N_hat, v_hat=st.v_hat, se_N=st.se_N, se_v=st.se_v)
        elif mode == "pde":
            pc = _pde_cfg(p, sub, sub["t_end"])
            res = pde.evolve(pde.empty_field(pc), p, pc)
            st = pde.stationary_profile(p, res.final.x)
            row.update(N_end=res.N[-1], v_end=res.v[-1], l1_stationary=pde.l1_distance(res.final, st))
        else:
            spec = nonlinear.ForceSpec(sub["family"], p.kappa, alpha)
            pts = nonlinear.find_stationary_points(p, spec, n_starts=sub["n_starts"])
            v0 = p.F if sub["v0"] is None else sub["v0"]
            cyc = nonlinear.detect_limit_cycle(
                p, spec, nonlinear.ClosureState(sub["N0"], v0, sub["w0"]), sub["cycle_t_max"], points=pts)
            row.update(n_stationary=len(pts),
                       n_stable=sum(sp.stability.startswith("stable") for sp in pts),
                       cycle_status=cyc.status)
    except (MotorSimError, ValueError, AssertionError, ArithmeticError) as e:
        row["errors"] = f"{type(e).__name__}: {e}".replace(",", ";").replace("\n", " ")
    return row


def run_sweep(cfg: RunConfig, out: Path, jobs=1):
    blk = cfg.block("sweep")
    mode = blk["mode"]
    from .config import SWEEP_MODES

    sub = blk[SWEEP_MODES[mode]]
    grid = sweep_grid(blk)
    tasks = [(i, float(v), cfg.params, blk["param"], mode, sub, cfg.seed) for i, v in enumerate(grid)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])
    extra = SWEEP_COLUMNS[mode]
    header = ["index", blk["param"], "N_bar", "v_bar", *extra, "errors"]
    prov = _prov(cfg)
    write_csv(out / "sweep.csv", header,
              ([r["index"], r["value"], r["N_bar"], r["v_bar"], *(r.get(c) for c in extra), r["errors"]]
               for r in rows), prov)
    n_ok = sum(1 for r in rows if not r["errors"])
    summary = {"mode": "sweep", "param": blk["param"], "sweep_mode": mode, "points": len(rows),
               "succeeded": n_ok}
    write_json(out / "summary.json", summary, prov)
    return summary, rows
