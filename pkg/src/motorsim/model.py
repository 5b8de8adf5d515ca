"""Model parameters, binding densities and their moments.

Every layer of the package (stochastic ensemble, mean-field ODE, transport
PDE, nonlinear closure) needs the binding density only through a handful of
moments, so the densities here are parametric families with closed-form
moments, CDFs and samplers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import (
    DivergentMoment,
    NegativeRate,
    NonPositiveFirstMoment,
    NonPositiveRate,
    QuadratureFailure,
    UnnormalizedDensity,
    ValidationError,
)

FAMILIES = {
    "gaussian": ("mu", "sigma"),
    "uniform": ("a", "b_hi"),
    "shifted_exponential": ("x0", "lam"),
}

QUAD_TOL = 1e-10


@dataclass(frozen=True)
class DensityMoments:
    m1: float
    m_c: float
    m_s: float


@dataclass(frozen=True)
class BindingDensity:
    """Probability density of the displacement a motor binds at.

    ``params`` holds the family parameters by name, see ``FAMILIES``.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(
                f"unknown binding density family {self.family!r}",
                key="binding_density.family",
            )
        expected = set(FAMILIES[self.family])
        got = set(self.params)
        if got != expected:
            raise ValidationError(
                f"{self.family} density needs parameters {sorted(expected)}, got {sorted(got)}",
                key="binding_density",
            )
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        p = self.params
        if self.family == "gaussian" and not p["sigma"] >= 0:
            raise UnnormalizedDensity("gaussian sigma must be >= 0", key="binding_density.sigma")
        if self.family == "uniform" and not p["b_hi"] > p["a"]:
            raise UnnormalizedDensity("uniform density needs a < b_hi", key="binding_density.b_hi")
        if self.family == "shifted_exponential" and not p["lam"] > 0:
            raise UnnormalizedDensity(
                "shifted exponential rate lam must be > 0", key="binding_density.lam"
            )

    # convenience constructors
    @classmethod
    def gaussian(cls, mu, sigma):
        return cls("gaussian", {"mu": mu, "sigma": sigma})

    @classmethod
    def uniform(cls, a, b_hi):
        return cls("uniform", {"a": a, "b_hi": b_hi})

    @classmethod
    def shifted_exponential(cls, x0, lam):
        return cls("shifted_exponential", {"x0": x0, "lam": lam})

    @property
    def is_point_mass(self):
        return self.family == "gaussian" and self.params["sigma"] == 0.0

    @property
    def mean(self):
        p = self.params
        if self.family == "gaussian":
            return p["mu"]
        if self.family == "uniform":
            return 0.5 * (p["a"] + p["b_hi"])
        return p["x0"] + 1.0 / p["lam"]

    @property
    def std(self):
        p = self.params
        if self.family == "gaussian":
            return p["sigma"]
        if self.family == "uniform":
            return (p["b_hi"] - p["a"]) / math.sqrt(12.0)
        return 1.0 / p["lam"]

    def support(self, tail=1e-12):
        """Interval outside of which the density carries mass below ``tail``."""
        p = self.params
        if self.family == "gaussian":
            half = p["sigma"] * math.sqrt(2.0) * special.erfcinv(tail)
            return p["mu"] - half, p["mu"] + half
        if self.family == "uniform":
            return p["a"], p["b_hi"]
        return p["x0"], p["x0"] - math.log(tail) / p["lam"]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "gaussian":
            if self.is_point_mass:
                raise ValidationError("point-mass density has no pdf; use cdf")
            z = (x - p["mu"]) / p["sigma"]
            return np.exp(-0.5 * z * z) / (p["sigma"] * math.sqrt(2.0 * math.pi))
        if self.family == "uniform":
            inside = (x >= p["a"]) & (x <= p["b_hi"])
            return np.where(inside, 1.0 / (p["b_hi"] - p["a"]), 0.0)
        lam = p["lam"]
        y = np.maximum(x - p["x0"], 0.0)
        return np.where(x >= p["x0"], lam * np.exp(-lam * y), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "gaussian":
            if self.is_point_mass:
                return np.where(x >= p["mu"], 1.0, 0.0)
            return special.ndtr((x - p["mu"]) / p["sigma"])
        if self.family == "uniform":
            return np.clip((x - p["a"]) / (p["b_hi"] - p["a"]), 0.0, 1.0)
        y = np.maximum(x - p["x0"], 0.0)
        return -np.expm1(-p["lam"] * y)

    def sample(self, rng, size):
        p = self.params
        if self.family == "gaussian":
            return p["mu"] + p["sigma"] * rng.standard_normal(size)
        if self.family == "uniform":
            return rng.uniform(p["a"], p["b_hi"], size)
        return p["x0"] + rng.exponential(1.0 / p["lam"], size)

    def cell_averages(self, x, dx):
        """Mass of each control volume [x - dx/2, x + dx/2] divided by dx."""
        x = np.asarray(x, dtype=float)
        return (self.cdf(x + 0.5 * dx) - self.cdf(x - 0.5 * dx)) / dx

    def quad(self, g):
        """Adaptive quadrature of g(x) b(x) over the support."""
        if self.is_point_mass:
            return float(g(self.params["mu"])), 0.0
        lo, hi = self._quad_interval()
        p = self.params
        points = None
        if self.family == "gaussian":
            points = [p["mu"]]
        val, err = integrate.quad(
            lambda s: g(s) * float(self.pdf(s)),
            lo,
            hi,
            points=points,
            epsabs=QUAD_TOL * 1e-2,
            epsrel=1e-13,
            limit=500,
        )
        return val, err

    def _quad_interval(self):
        p = self.params
        if self.family == "gaussian":
            return p["mu"] - 40 * p["sigma"], p["mu"] + 40 * p["sigma"]
        if self.family == "uniform":
            return p["a"], p["b_hi"]
        return p["x0"], p["x0"] + 200.0 / p["lam"]


@dataclass(frozen=True)
class ModelParams:
    c_b: float
    c_u: float
    kappa: float
    F: float
    binding_density: BindingDensity

    def replace(self, **changes):
        values = {
            "c_b": self.c_b,
            "c_u": self.c_u,
            "kappa": self.kappa,
            "F": self.F,
            "binding_density": self.binding_density,
        }
        values.update(changes)
        return ModelParams(**values)

    @property
    def m1(self):
        return self.binding_density.mean


def validate_params(p: ModelParams) -> ModelParams:
    """Return ``p`` unchanged if every model invariant holds, else raise."""
    if not p.c_b > 0:
        raise NonPositiveRate(f"c_b must be > 0, got {p.c_b}", key="c_b")
    if not p.kappa > 0:
        raise NonPositiveRate(f"kappa must be > 0, got {p.kappa}", key="kappa")
    if not p.c_u >= 0:
        raise NegativeRate(f"c_u must be >= 0, got {p.c_u}", key="c_u")
    if not math.isfinite(p.F):
        raise ValidationError("F must be finite", key="F")
    b = p.binding_density
    if not b.is_point_mass:
        mass, _ = b.quad(lambda s: 1.0)
        if abs(mass - 1.0) > QUAD_TOL:
            raise UnnormalizedDensity(
                f"binding density integrates to {mass!r}", key="binding_density"
            )
    if not b.mean > 0:
        raise NonPositiveFirstMoment(
            f"binding density first moment must be > 0, got {b.mean}",
            key="binding_density",
        )
    return p


def moments(b: BindingDensity, alpha: float = 0.0) -> DensityMoments:
    """First moment and trigonometric moments at frequency ``alpha``."""
    if alpha == 0.0:
        return DensityMoments(b.mean, 1.0, 0.0)
    p = b.params
    if b.family == "gaussian":
        damp = math.exp(-0.5 * (alpha * p["sigma"]) ** 2)
        m_c = damp * math.cos(alpha * p["mu"])
        m_s = damp * math.sin(alpha * p["mu"])
    elif b.family == "uniform":
        a, hi = p["a"], p["b_hi"]
        width = alpha * (hi - a)
        m_c = (math.sin(alpha * hi) - math.sin(alpha * a)) / width
        m_s = (math.cos(alpha * a) - math.cos(alpha * hi)) / width
    else:
        lam, x0 = p["lam"], p["x0"]
        den = lam * lam + alpha * alpha
        c, s = math.cos(alpha * x0), math.sin(alpha * x0)
        m_c = lam * (lam * c - alpha * s) / den
        m_s = lam * (lam * s + alpha * c) / den
    return DensityMoments(b.mean, m_c, m_s)


def hyperbolic_moments(b: BindingDensity, alpha: float) -> DensityMoments:
    """As ``moments`` with cos/sin replaced by cosh/sinh.

    Raises DivergentMoment for a shifted exponential with ``alpha >= lam``.
    """
    if alpha == 0.0:
        return DensityMoments(b.mean, 1.0, 0.0)
    p = b.params
    if b.family == "gaussian":
        grow = math.exp(0.5 * (alpha * p["sigma"]) ** 2)
        m_c = grow * math.cosh(alpha * p["mu"])
        m_s = grow * math.sinh(alpha * p["mu"])
    elif b.family == "uniform":
        a, hi = p["a"], p["b_hi"]
        width = alpha * (hi - a)
        m_c = (math.sinh(alpha * hi) - math.sinh(alpha * a)) / width
        m_s = (math.cosh(alpha * hi) - math.cosh(alpha * a)) / width
    else:
        lam, x0 = p["lam"], p["x0"]
        if alpha >= lam:
            raise DivergentMoment(
                f"exp({alpha} x) is not integrable against a shifted exponential with lam={lam}"
            )
        up = math.exp(alpha * x0) * lam / (lam - alpha)
        down = math.exp(-alpha * x0) * lam / (lam + alpha)
        m_c = 0.5 * (up + down)
        m_s = 0.5 * (up - down)
    if not (math.isfinite(m_c) and math.isfinite(m_s)):
        raise DivergentMoment(f"hyperbolic moments overflow at alpha={alpha}")
    return DensityMoments(b.mean, m_c, m_s)


def quadrature_moments(b: BindingDensity, alpha: float, hyperbolic=False) -> DensityMoments:
    """Moments by adaptive quadrature; independent of the closed forms."""
    if hyperbolic:
        even, odd = np.cosh, np.sinh
    else:
        even, odd = np.cos, np.sin
    out = []
    for g in (lambda s: s, lambda s: even(alpha * s), lambda s: odd(alpha * s)):
        val, err = b.quad(g)
        if err > QUAD_TOL * max(1.0, abs(val)):
            raise QuadratureFailure(f"quadrature error estimate {err:.3g} exceeds {QUAD_TOL}")
        out.append(val)
    return DensityMoments(*out)
