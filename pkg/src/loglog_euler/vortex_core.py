"""Radial loglog vortex: vorticity profile, velocity and their derivatives.

The singular vortex is

    w_s(r) = log log (1/r)        for 0 < r < e^-2
           = bridge(r)            for e^-2 <= r <= e^-1
           = 0                    for r > e^-1

with a quintic bridge that matches value, slope and curvature of the loglog
branch at e^-2 and vanishes to second order at e^-1.  The induced velocity is
tangential, u_s(x) = G(|x|) e_theta with G(rho) = (1/rho) int_0^rho r w_s(r) dr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.chebyshev import Chebyshev
from scipy.special import exp1

INNER_CUTOFF = math.exp(-2.0)
OUTER_CUTOFF = math.exp(-1.0)
CHEB_FLOOR = 1e-12
CHEB_DEGREE = 63  # 64 nodes


class DomainError(ValueError):
    """Evaluation requested outside the domain of a function."""


def _scaled_exp1(x):
    """e^x E1(x), stable for large x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 50.0
    out[small] = np.exp(x[small]) * exp1(x[small])
    xl = x[~small]
    if xl.size:
        # asymptotic series; truncation error ~ e^-x
        term = 1.0 / xl
        acc = term.copy()
        for k in range(1, 25):
            term = -term * k / xl
            acc += term
        out[~small] = acc
    return out


def _inner_g_over_rho(u):
    """G(rho)/rho on the loglog branch, as a function of u = log(1/rho)."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (np.log(u) + _scaled_exp1(2.0 * u))


def _bridge_polynomial(a: float, b: float) -> Polynomial:
    """Bridge in the local variable s = (r - a)/(b - a).

    p(s) = (1-s)^3 (c0 + c1 s + c2 s^2) vanishes to second order at s = 1;
    c0, c1, c2 match loglog(1/r) and its first two derivatives at r = a.
    """
    w = b - a
    la = math.log(1.0 / a)
    d1 = -1.0 / (a * la) * w
    d2 = (la - 1.0) / (a * a * la * la) * w * w
    c0 = math.log(la)
    c1 = d1 + 3.0 * c0
    c2 = 0.5 * (d2 - 6.0 * c0 + 6.0 * c1)
    return Polynomial([1.0, -1.0]) ** 3 * Polynomial([c0, c1, c2])


@dataclass(frozen=True)
class RadialVortexProfile:
    """Immutable description of w_s and its radial velocity kernel G."""

    inner_cutoff: float = INNER_CUTOFF
    outer_cutoff: float = OUTER_CUTOFF
    bridge: Polynomial = field(init=False, repr=False)
    g_interpolant: Chebyshev = field(init=False, repr=False)
    _bridge_moment: Polynomial = field(init=False, repr=False)
    inner_mass: float = field(init=False)
    total_mass: float = field(init=False)

    def __post_init__(self):
        a, b = self.inner_cutoff, self.outer_cutoff
        bridge = _bridge_polynomial(a, b)
        # int_0^a r loglog(1/r) dr = (a^2 log 2 + E1(4)) / 2 for a = e^-2
        la = math.log(1.0 / a)
        inner_mass = 0.5 * (a * a * math.log(la) + float(exp1(2.0 * la)))
        w = b - a
        # int_a^r r' w_s(r') dr' as a polynomial in s
        moment = (w * Polynomial([a, w]) * bridge).integ()
        u_lo, u_hi = la, math.log(1.0 / CHEB_FLOOR)
        cheb = Chebyshev.interpolate(_inner_g_over_rho, CHEB_DEGREE, domain=[u_lo, u_hi])
        object.__setattr__(self, "bridge", bridge)
        object.__setattr__(self, "_bridge_moment", moment)
        object.__setattr__(self, "inner_mass", inner_mass)
        object.__setattr__(self, "total_mass", inner_mass + float(moment(1.0)))
        object.__setattr__(self, "g_interpolant", cheb)

    @property
    def circulation(self) -> float:
        return 2.0 * math.pi * self.total_mass

    # ------------------------------------------------------------------ w_s
    def ws(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("w_s is defined for r > 0 only")
        out = np.zeros_like(r)
        inner = r < self.inner_cutoff
        mid = (~inner) & (r <= self.outer_cutoff)
        out[inner] = np.log(np.log(1.0 / r[inner]))
        out[mid] = self.bridge(self._local(r[mid]))
        return out

    def _local(self, r):
        return (r - self.inner_cutoff) / (self.outer_cutoff - self.inner_cutoff)

    def ws_derivative(self, r, order: int = 1):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("w_s is defined for r > 0 only")
        out = np.zeros_like(r)
        inner = r < self.inner_cutoff
        mid = (~inner) & (r <= self.outer_cutoff)
        ri = r[inner]
        li = np.log(1.0 / ri)
        if order == 1:
            out[inner] = -1.0 / (ri * li)
        elif order == 2:
            out[inner] = (li - 1.0) / (ri * ri * li * li)
        else:
            raise ValueError("order must be 1 or 2")
        w = self.outer_cutoff - self.inner_cutoff
        out[mid] = self.bridge.deriv(order)(self._local(r[mid])) / w**order
        return out

    # -------------------------------------------------------------------- G
    def G(self, rho):
        """Angular velocity profile: u_s = G(|x|) e_theta.  G(0) = 0."""
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise DomainError("radius must be nonnegative")
        out = np.zeros_like(rho)
        a, b = self.inner_cutoff, self.outer_cutoff
        far = rho > b
        mid = (rho >= a) & ~far
        cheb = (rho >= CHEB_FLOOR) & (rho < a)
        tiny = (rho > 0) & (rho < CHEB_FLOOR)
        out[far] = self.total_mass / rho[far]
        rm = rho[mid]
        out[mid] = (self.inner_mass + self._bridge_moment(self._local(rm))) / rm
        rc = rho[cheb]
        out[cheb] = rc * self.g_interpolant(np.log(1.0 / rc))
        rt = rho[tiny]
        out[tiny] = rt * _inner_g_over_rho(np.log(1.0 / rt))
        return out

    def G_prime(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise DomainError("G' is evaluated for rho > 0 only")
        return self.ws(rho) - self.G(rho) / rho

    # --------------------------------------------------------- serialization
    def to_config(self) -> dict:
        return {
            "inner_cutoff": self.inner_cutoff,
            "outer_cutoff": self.outer_cutoff,
            "bridge_variable": "s = (r - inner_cutoff) / (outer_cutoff - inner_cutoff)",
            "bridge_coefficients": [float(c) for c in self.bridge.coef],
            "g_interpolant": {
                "variable": "log(1/rho)",
                "quantity": "G(rho)/rho",
                "domain": [float(d) for d in self.g_interpolant.domain],
                "coefficients": [float(c) for c in self.g_interpolant.coef],
            },
            "circulation": self.circulation,
        }


_DEFAULT = None


def default_profile() -> RadialVortexProfile:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = RadialVortexProfile()
    return _DEFAULT


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    return x


def ws_value(r, profile: RadialVortexProfile | None = None):
    """w_s at radius r > 0."""
    p = profile or default_profile()
    out = p.ws(r)
    return float(out) if np.ndim(out) == 0 else out


def ws_gradient(x, profile: RadialVortexProfile | None = None):
    """Gradient of w_s at points x (shape (..., 2)); radial, zero beyond e^-1."""
    p = profile or default_profile()
    x = _points(x)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(rho == 0):
        raise DomainError("grad w_s is singular at the origin")
    scale = p.ws_derivative(rho) / rho
    return x * scale[..., None]


def us_velocity(x, profile: RadialVortexProfile | None = None):
    """u_s = G(|x|) e_theta; zero at the origin."""
    p = profile or default_profile()
    x = _points(x)
    rho = np.hypot(x[..., 0], x[..., 1])
    g = p.G(rho)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(rho > 0, g / np.where(rho > 0, rho, 1.0), 0.0)
    out = np.empty_like(x)
    out[..., 0] = -x[..., 1] * s
    out[..., 1] = x[..., 0] * s
    return out


def us_gradient(x, profile: RadialVortexProfile | None = None):
    """Velocity gradient matrix d u_i / d x_j, shape (..., 2, 2)."""
    p = profile or default_profile()
    x = _points(x)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(rho == 0):
        raise DomainError("grad u_s is evaluated away from the origin")
    g_over = p.G(rho) / rho
    shear = p.ws(rho) - 2.0 * g_over  # G' - G/rho
    er = x / rho[..., None]
    et = np.stack([-er[..., 1], er[..., 0]], axis=-1)
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 1] = -g_over
    out[..., 1, 0] = g_over
    out += shear[..., None, None] * et[..., :, None] * er[..., None, :]
    return out
