"""Exact event-driven simulation of a finite ensemble of motors.

M motors each carry a bound flag and a displacement. Between jumps every
bound displacement moves with the common drift ``dx/dt = -v_N`` where
``v_N = kappa * S / M - F`` and ``S`` is the sum of bound displacements; the
filament velocity reported everywhere is ``v = -v_N``. Jump rates depend only
on the bound flags, so they are constant between jumps and the drift has a
closed form, which makes the simulation exact (no time discretization).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, ValidationError
from .model import ModelParams, validate_params

BIND = "B"
UNBIND = "U"
NO_EVENT = None

REFRESH_EVERY = 10_000
_BLOCK = 4096


@dataclass
class EnsembleState:
    eps: np.ndarray
    x: np.ndarray
    t: float = 0.0
    bound_count: int = 0
    bound_sum: float = 0.0

    @classmethod
    def unbound(cls, n_motors):
        return cls(np.zeros(n_motors, dtype=np.int8), np.zeros(n_motors), 0.0, 0, 0.0)

    @classmethod
    def from_arrays(cls, eps, x, t=0.0):
        eps = np.asarray(eps, dtype=np.int8)
        x = np.where(eps == 1, np.asarray(x, dtype=float), 0.0)
        return cls(eps, x, t, int(eps.sum()), float(x.sum()))

    @property
    def n_motors(self):
        return self.eps.size

    def copy(self):
        return EnsembleState(self.eps.copy(), self.x.copy(), self.t, self.bound_count, self.bound_sum)

    def recompute(self):
        self.bound_count = int(self.eps.sum())
        self.bound_sum = float(np.sum(self.x * self.eps))
        return self


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: str
    motor: int
    x_new: float | None = None


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    t_end: float = 100.0
    burn_in: float = 10.0
    sample_interval: float = 0.1
    replicas: int = 1
    record_events: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.t_end:
            raise ValidationError("need 0 <= burn_in < t_end", key="sim.burn_in")
        if not self.sample_interval > 0:
            raise ValidationError("sample_interval must be > 0", key="sim.sample_interval")
        if self.replicas < 1:
            raise ValidationError("replicas must be >= 1", key="sim.replicas")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer", key="seed")


@dataclass
class RunRecord:
    t: np.ndarray
    N: np.ndarray
    v: np.ndarray
    xbar: np.ndarray
    params: ModelParams
    n_motors: int
    config: SimConfig
    replica: int = 0
    events: list | None = None
    n_events: int = 0


@dataclass(frozen=True)
class StationaryStats:
    N_hat: float
    v_hat: float
    xbar_hat: float
    se_N: float
    se_v: float
    se_xbar: float
    n_samples: int
    n_batches: int

    def as_dict(self):
        return {
            "N_hat": self.N_hat,
            "v_hat": self.v_hat,
            "xbar_hat": self.xbar_hat,
            "se_N": self.se_N,
            "se_v": self.se_v,
            "se_xbar": self.se_xbar,
            "n_samples": self.n_samples,
            "n_batches": self.n_batches,
        }


def _flow_sum(S, B, M, kappa, F, dt):
    if B == 0:
        return S
    s_star = F * M / kappa
    return s_star + (S - s_star) * math.exp(-kappa * B * dt / M)


def drift_flow(state: EnsembleState, dt: float, p: ModelParams) -> EnsembleState:
    """Advance all bound displacements over a jump-free interval of length dt."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    out = state.copy()
    out.t = state.t + dt
    B = state.bound_count
    if B == 0:
        return out
    M = state.n_motors
    S_new = _flow_sum(state.bound_sum, B, M, p.kappa, p.F, dt)
    shift = (S_new - state.bound_sum) / B
    bound = out.eps == 1
    out.x[bound] += shift
    out.bound_sum = S_new
    return out


def total_rate(state: EnsembleState, p: ModelParams) -> float:
    B = state.bound_count
    return p.c_b * (state.n_motors - B) + p.c_u * B


def next_event(state: EnsembleState, p: ModelParams, rng):
    """Draw the waiting time and the next jump.

    Returns ``(dt, kind, motor, x_new)``; with zero total rate the
    configuration is absorbing and ``(inf, None, -1, None)`` is returned.
    """
    M = state.n_motors
    B = state.bound_count
    r_bind = p.c_b * (M - B)
    r_unbind = p.c_u * B
    R = r_bind + r_unbind
    if R <= 0:
        return math.inf, NO_EVENT, -1, None
    dt = rng.exponential(1.0 / R)
    if rng.random() * R < r_bind:
        candidates = np.flatnonzero(state.eps == 0)
        k = int(candidates[rng.integers(candidates.size)])
        x_new = float(p.binding_density.sample(rng, 1)[0])
        return dt, BIND, k, x_new
    candidates = np.flatnonzero(state.eps == 1)
    k = int(candidates[rng.integers(candidates.size)])
    return dt, UNBIND, k, None


def apply_event(state: EnsembleState, kind, motor, x_new=None) -> EnsembleState:
    out = state.copy()
    if kind == BIND:
        out.eps[motor] = 1
        out.x[motor] = x_new
        out.bound_count += 1
        out.bound_sum += x_new
    elif kind == UNBIND:
        out.bound_sum -= out.x[motor]
        out.eps[motor] = 0
        out.x[motor] = 0.0
        out.bound_count -= 1
    return out


def replica_rng(seed, replica):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))


def simulate(p: ModelParams, n_motors: int, cfg: SimConfig, replica: int = 0) -> RunRecord:
    """Run one trajectory from the all-unbound configuration.

    The loop keeps bound displacements as offsets from a common shift so
    a drift costs O(1); the bound and unbound motors are kept in swap-remove
    lists so that picking a uniform motor of a class is O(1) too.
    """
    validate_params(p)
    M = int(n_motors)
    if M < 1 or M % 2 == 0:
        raise ValidationError(f"motor count must be odd and positive, got {M}", key="sim.motors")
    rng = replica_rng(cfg.seed, replica)
    c_b, c_u, kappa, F = p.c_b, p.c_u, p.kappa, p.F
    density = p.binding_density

    y = [0.0] * M
    bound = []
    unbound = list(range(M))
    where = list(range(M))
    B = 0
    S_y = 0.0
    shift = 0.0

    n_samples = int(math.floor(cfg.t_end / cfg.sample_interval + 1e-9)) + 1
    ts = np.arange(n_samples) * cfg.sample_interval
    out_N = np.empty(n_samples)
    out_S = np.empty(n_samples)
    events = [] if cfg.record_events else None

    exp_draws = unif_kind = unif_pick = x_draws = ()
    i_exp = i_kind = i_x = _BLOCK

    t = 0.0
    i_sample = 0
    n_events = 0
    s_star = F * M / kappa
    while True:
        R = c_b * (M - B) + c_u * B
        if R > 0:
            if i_exp == _BLOCK:
                exp_draws = rng.standard_exponential(_BLOCK).tolist()
                i_exp = 0
            t_next = t + exp_draws[i_exp] / R
            i_exp += 1
        else:
            t_next = math.inf
        # record samples falling before the next jump
        while i_sample < n_samples and ts[i_sample] < t_next:
            S = S_y + B * shift
            if B:
                S = s_star + (S - s_star) * math.exp(-kappa * B * (ts[i_sample] - t) / M)
            out_N[i_sample] = B
            out_S[i_sample] = S
            i_sample += 1
        if t_next > cfg.t_end:
            break
        if B:
            S = S_y + B * shift
            S_new = s_star + (S - s_star) * math.exp(-kappa * B * (t_next - t) / M)
            shift += (S_new - S) / B
        t = t_next

        if i_kind == _BLOCK:
            unif_kind = rng.random(_BLOCK).tolist()
            unif_pick = rng.random(_BLOCK).tolist()
            i_kind = 0
        r_bind = c_b * (M - B)
        u = unif_kind[i_kind] * R
        pick = unif_pick[i_kind]
        i_kind += 1
        if u < r_bind:
            j = int(pick * len(unbound))
            k = unbound[j]
            last = unbound.pop()
            if last != k:
                unbound[j] = last
                where[last] = j
            where[k] = len(bound)
            bound.append(k)
            if i_x == _BLOCK:
                x_draws = density.sample(rng, _BLOCK).tolist()
                i_x = 0
            x_new = x_draws[i_x]
            i_x += 1
            y[k] = x_new - shift
            S_y += y[k]
            B += 1
            if events is not None:
                events.append(EventRecord(t, BIND, k, x_new))
        else:
            j = int(pick * len(bound))
            k = bound[j]
            last = bound.pop()
            if last != k:
                bound[j] = last
                where[last] = j
            where[k] = len(unbound)
            unbound.append(k)
            S_y -= y[k]
            y[k] = 0.0
            B -= 1
            if events is not None:
                events.append(EventRecord(t, UNBIND, k, None))
        n_events += 1
        if n_events % REFRESH_EVERY == 0:
            # rebase offsets onto the shift and resum from scratch
            for k in bound:
                y[k] += shift
            shift = 0.0
            S_y = math.fsum(y[k] for k in bound)

    out_N /= M
    xbar = out_S / M
    return RunRecord(
        t=ts,
        N=out_N,
        v=F - kappa * xbar,
        xbar=xbar,
        params=p,
        n_motors=M,
        config=cfg,
        replica=replica,
        events=events,
        n_events=n_events,
    )


def _simulate_job(args):
    return simulate(*args)


def simulate_replicas(p: ModelParams, n_motors: int, cfg: SimConfig, jobs: int = 1):
    """Independent replicas on disjoint random streams, ordered by replica index."""
    tasks = [(p, n_motors, cfg, r) for r in range(cfg.replicas)]
    if jobs <= 1 or cfg.replicas == 1:
        return [_simulate_job(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_simulate_job, tasks))


def batch_means(series, n_batches=20):
    """Mean and batch-means standard error of a correlated series."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < n_batches:
        raise InsufficientData(f"{n} samples cannot fill {n_batches} batches")
    size = n // n_batches
    tail = series[n - size * n_batches:]
    means = tail.reshape(n_batches, size).mean(axis=1)
    return float(tail.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def stationary_stats(record: RunRecord, burn_in=None, n_batches=20) -> StationaryStats:
    if n_batches < 20:
        raise ValueError("batch-means estimates need at least 20 batches")
    if burn_in is None:
        burn_in = record.config.burn_in
    keep = record.t >= burn_in
    n = int(keep.sum())
    if n < n_batches:
        raise InsufficientData(f"only {n} samples after burn-in {burn_in}")
    N_hat, se_N = batch_means(record.N[keep], n_batches)
    v_hat, se_v = batch_means(record.v[keep], n_batches)
    x_hat, se_x = batch_means(record.xbar[keep], n_batches)
    return StationaryStats(N_hat, v_hat, x_hat, se_N, se_v, se_x, n, n_batches)


def pooled_stats(records, burn_in=None, n_batches=20) -> StationaryStats:
    """Combine replicas: mean of replica means, standard error of that mean."""
    stats = [stationary_stats(r, burn_in, n_batches) for r in records]
    if len(stats) == 1:
        return stats[0]
    k = len(stats)

    def comb(vals, ses):
        vals, ses = np.asarray(vals), np.asarray(ses)
        return float(vals.mean()), float(math.sqrt(np.sum(ses**2)) / k)

    N_hat, se_N = comb([s.N_hat for s in stats], [s.se_N for s in stats])
    v_hat, se_v = comb([s.v_hat for s in stats], [s.se_v for s in stats])
    x_hat, se_x = comb([s.xbar_hat for s in stats], [s.se_xbar for s in stats])
    return StationaryStats(
        N_hat, v_hat, x_hat, se_N, se_v, se_x, sum(s.n_samples for s in stats), n_batches
    )


def events_table(record: RunRecord):
    """Rows ``(t, kind, motor, x)`` with x empty for unbind events."""
    for e in record.events or ():
        yield (e.t, e.kind, e.motor, "" if e.x_new is None else e.x_new)
