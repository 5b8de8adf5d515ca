import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motorsim import stochastic as sto
from motorsim.errors import InsufficientData, ValidationError
from motorsim.meanfield import stationary
from motorsim.model import BindingDensity, ModelParams


def params(c_b=1.0, c_u=1.0, kappa=1.0, F=0.0):
    return ModelParams(c_b, c_u, kappa, F, BindingDensity.gaussian(1.0, 0.5))


def test_drift_flow_without_bound_motors():
    s = sto.EnsembleState.unbound(5)
    out = sto.drift_flow(s, 3.0, params())
    assert np.array_equal(out.x, s.x) and out.t == 3.0


def test_single_motor_relaxes_exponentially():
    s = sto.EnsembleState.from_arrays([1], [1.0])
    out = sto.drift_flow(s, 1.0, params())
    assert out.x[0] == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_drift_fixed_point():
    p = params(kappa=2.0, F=0.6)
    M = 5
    eps = [1, 1, 0, 1, 0]
    x = np.array([0.1, 0.7, 0.0, 0.0, 0.0])
    x[3] = p.F * M / p.kappa - x[0] - x[1]
    s = sto.EnsembleState.from_arrays(eps, x)
    out = sto.drift_flow(s, 4.0, p)
    assert np.allclose(out.x, s.x, rtol=0, atol=1e-14)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-1.0, 1.0))
@settings(max_examples=50, deadline=None)
def test_drift_semigroup(a, b, F):
    p = params(kappa=1.7, F=F)
    s = sto.EnsembleState.from_arrays([1, 0, 1, 1, 0], [0.3, 0.0, 1.2, -0.4, 0.0])
    one = sto.drift_flow(s, a + b, p)
    two = sto.drift_flow(sto.drift_flow(s, a, p), b, p)
    assert two.bound_sum == pytest.approx(one.bound_sum, rel=1e-12, abs=1e-12)
    assert np.all(two.x[two.eps == 0] == 0.0)


def test_absorbing_configuration():
    s = sto.EnsembleState.from_arrays([1, 1, 1], [0.5, 1.0, 1.5])
    dt, kind, k, _ = sto.next_event(s, params(c_u=0.0), np.random.default_rng(0))
    assert dt == math.inf and k == -1 and kind is None


def test_waiting_time_mean():
    s = sto.EnsembleState.unbound(10)
    rng = np.random.default_rng(3)
    dts = np.array([sto.next_event(s, params(c_b=2.0), rng)[0] for _ in range(100_000)])
    assert abs(dts.mean() - 1 / 20) <= 3 * dts.std() / math.sqrt(dts.size)


def test_symmetric_bind_probability():
    s = sto.EnsembleState.from_arrays([1, 1, 0, 0], [1.0, 2.0, 0, 0])
    rng = np.random.default_rng(4)
    kinds = [sto.next_event(s, params(), rng)[1] for _ in range(20_000)]
    frac = kinds.count(sto.BIND) / len(kinds)
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / len(kinds))


def test_unbinding_resets_displacement():
    s = sto.EnsembleState.from_arrays([1, 1], [0.5, 1.5])
    out = sto.apply_event(s, sto.UNBIND, 0)
    assert out.eps[0] == 0 and out.x[0] == 0.0
    assert out.bound_count == 1 and out.bound_sum == pytest.approx(1.5)


def test_even_motor_count_rejected():
    with pytest.raises(ValidationError):
        sto.simulate(params(), 100, sto.SimConfig(t_end=1.0, burn_in=0.0))


def test_pure_binding_saturates():
    rec = sto.simulate(params(c_u=0.0), 101, sto.SimConfig(seed=1, t_end=30.0, burn_in=0.0))
    assert rec.N[-1] == 1.0


def test_simulate_matches_reference_replay():
    """Fast loop vs drift_flow/apply_event replayed from the event log."""
    p = params(c_b=1.5, c_u=0.7, kappa=1.3, F=0.2)
    cfg = sto.SimConfig(seed=11, t_end=40.0, burn_in=1.0, sample_interval=0.5, record_events=True)
    rec = sto.simulate(p, 21, cfg)
    s = sto.EnsembleState.unbound(21)
    i = 0
    for ev in rec.events:
        while i < rec.t.size and rec.t[i] < ev.t:
            ref = sto.drift_flow(s, rec.t[i] - s.t, p)
            assert rec.N[i] == ref.bound_count / 21
            assert rec.xbar[i] * 21 == pytest.approx(ref.bound_sum, rel=1e-9, abs=1e-9)
            i += 1
        s = sto.apply_event(sto.drift_flow(s, ev.t - s.t, p), ev.kind, ev.motor, ev.x_new)
        assert np.all(s.x[s.eps == 0] == 0.0)
    assert i > 50


def test_events_are_well_formed():
    cfg = sto.SimConfig(seed=5, t_end=10.0, burn_in=0.0, record_events=True)
    rec = sto.simulate(params(), 11, cfg)
    rows = list(sto.events_table(rec))
    assert len(rows) == rec.n_events > 0
    for t, kind, k, x in rows:
        assert kind in ("B", "U") and 0 <= k < 11
        assert (x == "") == (kind == "U")
    assert all(a[0] <= b[0] for a, b in zip(rows, rows[1:]))


def test_reproducible_and_replica_streams_differ():
    cfg = sto.SimConfig(seed=9, t_end=20.0, burn_in=0.0, replicas=3, record_events=True)
    a = sto.simulate_replicas(params(), 11, cfg)
    b = sto.simulate_replicas(params(), 11, cfg, jobs=2)
    for ra, rb in zip(a, b):
        assert ra.events == rb.events
        assert np.array_equal(ra.v, rb.v)
    assert a[0].events != a[1].events


def test_batch_means_constant_and_iid():
    assert sto.batch_means(np.full(100, 2.5)) == (2.5, 0.0)
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(50):
        x = rng.normal(size=2000)
        ratios.append(sto.batch_means(x)[1] / (1 / math.sqrt(x.size)))
    assert 0.5 <= np.mean(ratios) <= 2.0
    with pytest.raises(InsufficientData):
        sto.batch_means(np.ones(5))


def test_stationary_bound_fraction_and_velocity():
    p = params()
    rec = sto.simulate(p, 1001, sto.SimConfig(seed=7, t_end=300.0, burn_in=20.0, sample_interval=0.5))
    st_ = sto.stationary_stats(rec)
    N_bar, v_bar = stationary(p)
    assert abs(st_.N_hat - N_bar) <= 3 * st_.se_N
    assert abs(st_.v_hat - v_bar) <= 3 * st_.se_v
    with pytest.raises(InsufficientData):
        sto.stationary_stats(rec, burn_in=299.9)


def test_occupancy_is_binomial():
    """The bound flags are independent telegraph processes."""
    p = params(c_b=1.0, c_u=3.0)
    M = 101
    rec = sto.simulate(p, M, sto.SimConfig(seed=2, t_end=4000.0, burn_in=10.0, sample_interval=2.0))
    keep = rec.t >= 10.0
    counts = rec.N[keep] * M
    q = p.c_b / (p.c_b + p.c_u)
    # samples 2 time units apart are nearly independent (relaxation rate 4)
    n = counts.size
    assert abs(counts.mean() - M * q) <= 3 * math.sqrt(M * q * (1 - q) / n)
    var = M * q * (1 - q)
    assert abs(counts.var() - var) <= 3 * var * math.sqrt(2 / n)


def test_pooled_stats_combines_replicas():
    cfg = sto.SimConfig(seed=1, t_end=60.0, burn_in=5.0, replicas=4)
    recs = sto.simulate_replicas(params(), 101, cfg)
    pooled = sto.pooled_stats(recs)
    singles = [sto.stationary_stats(r) for r in recs]
    assert pooled.N_hat == pytest.approx(np.mean([s.N_hat for s in singles]))
    assert pooled.se_N < max(s.se_N for s in singles)
