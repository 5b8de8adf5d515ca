import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motorsim import meanfield as mf
from motorsim import pde
from motorsim.errors import DomainOverflow, ValidationError, ZeroVelocity
from motorsim.model import BindingDensity, ModelParams


def params(c_b=1.0, c_u=1.0, kappa=1.0, F=0.0, b=None):
    return ModelParams(c_b, c_u, kappa, F, b or BindingDensity.gaussian(1.0, 0.5))


def gaussian_field(x, mu, sigma, mass):
    return mass * np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def test_velocity_of_examples():
    x = np.linspace(-3, 3, 6001)
    p = params(kappa=2.0, F=0.4)
    assert pde.velocity_of(pde.DensityField(x, np.zeros_like(x)), p) == 0.4
    sym = pde.DensityField(x, gaussian_field(x, 0.0, 0.3, 0.7))
    assert pde.velocity_of(sym, p) == pytest.approx(0.4, abs=1e-13)
    spike = pde.DensityField(x, gaussian_field(x, 1.0, 0.01, 0.5))
    assert pde.velocity_of(spike, p.replace(F=0.0)) == pytest.approx(-1.0, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValidationError):
        pde.PdeConfig(1.0, 0.0)
    with pytest.raises(ValidationError):
        pde.PdeConfig(0.0, 1.0, cfl=1.5)


def test_moments_match_ode():
    p = params()
    lo, hi = pde.domain_for(p, 10.0)
    cfg = pde.PdeConfig(lo, hi, 4000, 0.5, 10.0, snapshots=(2.0, 5.0))
    res = pde.evolve(pde.empty_field(cfg), p, cfg, check_positivity=True)
    telegraph = mf.telegraph_solution(res.t, 0.0, p.c_b, p.c_u)
    assert np.abs(res.N - telegraph).max() <= 1e-3
    traj = mf.integrate(p, mf.MeanFieldState(0.0, p.F), res.t)
    assert np.abs(res.v - traj.v).max() <= 1e-3
    assert [s.t for s in res.snapshots] == [2.0, 5.0]
    assert all(s.mass <= 1 + 1e-6 for s in res.snapshots)


def test_moment_consistency_at_snapshots():
    p = params(F=0.3, kappa=1.5)
    lo, hi = pde.domain_for(p, 4.0)
    cfg = pde.PdeConfig(lo, hi, 2000, 0.5, 4.0)
    res = pde.evolve(pde.empty_field(cfg), p, cfg)
    dN = np.diff(res.N) / np.diff(res.t)
    mid = 0.5 * (res.N[1:] + res.N[:-1])
    expected = p.c_b * (1 - mid) - p.c_u * mid
    assert np.abs(dN - expected).max() < 1e-2


@pytest.mark.parametrize("v", [0.5, -0.5])
def test_advection_decay_convergence(v):
    p = params(c_b=0.0, c_u=0.5)
    t_end = 2.0
    errors = []
    for J in (500, 1000, 2000):
        cfg = pde.PdeConfig(-4.0, 6.0, J, 0.5, t_end)
        x = cfg.grid()
        res = pde.evolve(pde.DensityField(x, gaussian_field(x, 1.0, 0.3, 0.5)), p, cfg,
                         velocity=lambda f: v, check_positivity=True)
        exact = math.exp(-p.c_u * t_end) * gaussian_field(x - v * t_end, 1.0, 0.3, 0.5)
        errors.append(float(np.trapezoid(np.abs(res.final.n - exact), x)))
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    assert all(r >= 1.7 for r in ratios)
    assert all(math.log2(r) >= 0.8 for r in ratios)


def test_domain_overflow():
    p = params(c_b=0.0, c_u=0.1)
    cfg = pde.PdeConfig(-1.0, 2.0, 300, 0.5, 5.0)
    x = cfg.grid()
    with pytest.raises(DomainOverflow):
        pde.evolve(pde.DensityField(x, gaussian_field(x, 1.0, 0.2, 0.5)), p, cfg, velocity=lambda f: 1.0)


def test_stationary_profile_examples():
    p = params()
    x = np.linspace(-8, 6, 14001)
    prof = pde.stationary_profile(p, x)
    N_bar, v_bar = mf.stationary(p)
    assert prof.mass == pytest.approx(N_bar, abs=1e-8)
    assert -p.kappa * prof.first_moment + p.F == pytest.approx(v_bar, abs=1e-6)
    assert np.all(prof.n >= 0)


densities = st.one_of(
    st.builds(BindingDensity.gaussian, st.floats(0.2, 2.0), st.floats(0.05, 1.0)),
    st.builds(lambda a, w: BindingDensity.uniform(a, a + w), st.floats(0.0, 1.0), st.floats(0.2, 2.0)),
    st.builds(BindingDensity.shifted_exponential, st.floats(0.0, 1.0), st.floats(0.5, 4.0)),
)


@given(densities, st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.3, 3.0), st.floats(-1.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_stationary_profile_identities(b, c_b, c_u, kappa, F):
    p = params(c_b, c_u, kappa, F, b)
    N_bar, v_bar = mf.stationary(p)
    if abs(v_bar) < 1e-3:
        return
    x = np.array([-1.0, 0.3, 1.2, 2.5, 4.0])
    closed = pde.stationary_profile_fn(p)(x)
    oracle = pde.stationary_profile_quadrature(p, x)
    assert np.allclose(closed, oracle, rtol=1e-8, atol=1e-12)


def test_stationary_profile_positive_velocity_mirror():
    p = params(F=3.0)
    assert mf.stationary(p)[1] > 0
    x = np.linspace(-3.0, 40.0, 43001)
    prof = pde.stationary_profile(p, x)
    assert prof.mass == pytest.approx(mf.stationary(p)[0], abs=1e-6)


def test_zero_velocity_profile():
    p = params(c_b=1.0, c_u=1.0, kappa=1.0)
    p = p.replace(F=p.kappa * p.c_b * p.m1 / (p.c_b + p.c_u))
    assert mf.stationary(p)[1] == 0.0
    x = np.linspace(-2, 4, 7)
    assert np.allclose(pde.stationary_profile_fn(p)(x), 0.5 * p.binding_density.pdf(x))
    q = params(b=BindingDensity.gaussian(1.0, 0.0))
    q = q.replace(F=q.kappa * q.c_b * q.m1 / (q.c_b + q.c_u))
    with pytest.raises(ZeroVelocity):
        pde.stationary_profile_fn(q)


def test_long_time_field_matches_stationary_profile():
    p = params()
    lo, hi = pde.domain_for(p, 40.0)
    cfg = pde.PdeConfig(lo, hi, 4000, 0.5, 40.0)
    res = pde.evolve(pde.empty_field(cfg), p, cfg)
    assert pde.l1_distance(res.final, pde.stationary_profile(p, res.final.x)) <= 1e-2


def test_single_motor_mass():
    p = params(c_b=1.0, c_u=0.5)
    lo, hi = pde.single_motor_domain(p)
    cfg = pde.PdeConfig(lo, hi, 400, 0.5, 12.0)
    res = pde.single_motor_evolve(pde.empty_field(cfg), p, cfg, check_positivity=True)
    exact = 1.0 - pde.unbound_probability(res.t, p.c_b, p.c_u)
    assert np.abs(res.N - exact).max() <= 1e-3
    assert res.N[-1] == pytest.approx(p.c_b / (p.c_b + p.c_u), abs=1e-3)


def test_single_motor_profile_matches_oracle():
    p = params()
    lo, hi = pde.single_motor_domain(p)
    cfg = pde.PdeConfig(lo, hi, 800, 0.5, 20.0)
    res = pde.single_motor_evolve(pde.empty_field(cfg), p, cfg)
    x = np.array([0.3, 0.6, 1.0, 1.5])
    oracle = pde.single_motor_stationary(p, x)
    assert np.allclose(np.interp(x, res.final.x, res.final.n), oracle, rtol=0.05)


def test_single_motor_concentrates_with_stiffness():
    fractions = []
    for kappa in (1.0, 10.0, 100.0):
        p = params(kappa=kappa)
        x = np.concatenate([np.linspace(1e-6, 0.1, 400), np.linspace(0.1, 4.0, 800)[1:]])
        dens = pde.single_motor_stationary(p, x)
        total = np.trapezoid(dens, x)
        outside = np.trapezoid(dens[x >= 0.1], x[x >= 0.1])
        fractions.append(outside / total)
    assert fractions[0] > fractions[1] > fractions[2]
