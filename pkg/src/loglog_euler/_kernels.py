"""Compiled inner loops: cell potentials, Biot-Savart sums, interpolation and
semi-Lagrangian updates.

The velocity kernel is built from the exact logarithmic potential of a
uniformly charged square cell,

    P(d) = (1/2 pi) int_cell log|d - y| dy,

differentiated with a fourth-order central stencil of step h.  The same
function feeds the FFT table and the direct sums, so both paths agree to
rounding, and the discrete divergence of the result vanishes identically.
"""

from __future__ import annotations

import math
import os

import numba as nb
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    try:
        from numba.np.ufunc import omppool  # noqa: F401

        nb.config.THREADING_LAYER = "omp"
    except ImportError:
        pass

TWO_PI = 2.0 * math.pi
NEAR_CELLS = 6.0  # closed form inside this box (in cells), multipole series outside
_HEAD = 10  # packed vortex: header, bridge-derivative slot, moment, chebyshev
_SLOT = 16


def _square_moments(kmax: int = 20) -> np.ndarray:
    """m_k = int over [-1/2,1/2]^2 of (x + iy)^k for k = 4, 8, ..., kmax (real)."""
    from fractions import Fraction
    from math import comb

    def axis(p):
        return Fraction(0) if p % 2 else Fraction(1, 2**p * (p + 1))

    out = []
    for k in range(4, kmax + 1, 4):
        acc = Fraction(0)
        for j in range(0, k + 1, 2):
            acc += comb(k, j) * (-1) ** (j // 2) * axis(k - j) * axis(j)
        out.append(float(acc) / k)
    return np.array(out)


MOMENTS = _square_moments()


# --------------------------------------------------------------------------
# cell potential and velocity kernel
# --------------------------------------------------------------------------
@nb.njit(cache=True, inline="always")
def _H(a, b):
    # d^2 H / da db = log(a^2 + b^2)
    if a == 0.0 or b == 0.0:
        return 0.0
    return (a * b * (math.log(a * a + b * b) - 3.0)
            + a * a * math.atan(b / a) + b * b * math.atan(a / b))


@nb.njit(cache=True)
def cell_potential(d1, d2, h, moments):
    if max(abs(d1), abs(d2)) < NEAR_CELLS * h:
        hh = 0.5 * h
        a0, a1 = d1 - hh, d1 + hh
        b0, b1 = d2 - hh, d2 + hh
        return (_H(a1, b1) - _H(a0, b1) - _H(a1, b0) + _H(a0, b0)) / (2.0 * TWO_PI)
    # multipole series: log|z| - sum_k m_k Re((h/z)^k) / k, only k = 0 mod 4
    r2 = d1 * d1 + d2 * d2
    qr = h * d1 / r2
    qi = -h * d2 / r2
    q2r = qr * qr - qi * qi
    q2i = 2.0 * qr * qi
    q4r = q2r * q2r - q2i * q2i
    q4i = 2.0 * q2r * q2i
    pr, pi = q4r, q4i
    acc = 0.0
    for m in moments:
        acc += m * pr
        pr, pi = pr * q4r - pi * q4i, pr * q4i + pi * q4r
    return h * h * (0.5 * math.log(r2) - acc) / TWO_PI


@nb.njit(cache=True)
def velocity_kernel(d1, d2, h, moments):
    """(K1, K2) = (-D2 P, D1 P) with the five-point stencil."""
    c = 1.0 / (12.0 * h)
    k1 = -(cell_potential(d1, d2 - 2 * h, h, moments)
           - 8.0 * cell_potential(d1, d2 - h, h, moments)
           + 8.0 * cell_potential(d1, d2 + h, h, moments)
           - cell_potential(d1, d2 + 2 * h, h, moments)) * c
    k2 = (cell_potential(d1 - 2 * h, d2, h, moments)
          - 8.0 * cell_potential(d1 - h, d2, h, moments)
          + 8.0 * cell_potential(d1 + h, d2, h, moments)
          - cell_potential(d1 + 2 * h, d2, h, moments)) * c
    return k1, k2


@nb.njit(cache=True, parallel=True)
def potential_table(n, h, moments):
    """P(k1 h, k2 h) for k in [-n-2, n+1]; entry [k1 + n + 2, k2 + n + 2]."""
    m = 2 * n + 4
    out = np.empty((m, m))
    for i in nb.prange(m):
        d1 = (i - n - 2) * h
        for j in range(m):
            out[i, j] = cell_potential(d1, (j - n - 2) * h, h, moments)
    return out


@nb.njit(cache=True, parallel=True)
def direct_sum(px, py, sx, sy, weights, h, moments):
    """Velocity at points (px, py) induced by cells centred at (sx, sy)."""
    npts = px.shape[0]
    out = np.zeros((npts, 2))
    for p in nb.prange(npts):
        a1 = 0.0
        a2 = 0.0
        for j in range(sx.shape[0]):
            k1, k2 = velocity_kernel(px[p] - sx[j], py[p] - sy[j], h, moments)
            a1 += weights[j] * k1
            a2 += weights[j] * k2
        out[p, 0] = a1
        out[p, 1] = a2
    return out


# --------------------------------------------------------------------------
# interpolation
# --------------------------------------------------------------------------
@nb.njit(cache=True, inline="always")
def _stencil(s, n):
    i0 = int(math.floor(s)) - 1
    if i0 < 0:
        i0 = 0
    elif i0 > n - 4:
        i0 = n - 4
    t = s - i0
    w0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0
    w1 = t * (t - 2.0) * (t - 3.0) / 2.0
    w2 = -t * (t - 1.0) * (t - 3.0) / 2.0
    w3 = t * (t - 1.0) * (t - 2.0) / 6.0
    return i0, w0, w1, w2, w3


@nb.njit(cache=True)
def _interp(values, s1, s2):
    n = values.shape[0]
    i0, a0, a1, a2, a3 = _stencil(s1, n)
    j0, b0, b1, b2, b3 = _stencil(s2, n)
    acc = 0.0
    for di in range(4):
        wa = a0 if di == 0 else a1 if di == 1 else a2 if di == 2 else a3
        row = values[i0 + di]
        acc += wa * (b0 * row[j0] + b1 * row[j0 + 1] + b2 * row[j0 + 2] + b3 * row[j0 + 3])
    return acc


@nb.njit(cache=True, parallel=True)
def interp_points(values, x0, y0, h, px, py):
    """Tensor cubic Lagrange interpolation; values[i, j] sits at (x0 + i h, y0 + j h)."""
    out = np.empty(px.shape[0])
    for p in nb.prange(px.shape[0]):
        out[p] = _interp(values, (px[p] - x0) / h, (py[p] - y0) / h)
    return out


# --------------------------------------------------------------------------
# analytic vortex inside compiled loops
# --------------------------------------------------------------------------
@nb.njit(cache=True, inline="always")
def _horner(c, x):
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@nb.njit(cache=True)
def _clenshaw(c, x):
    b1 = 0.0
    b2 = 0.0
    for k in range(c.shape[0] - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + c[k], b1
    return x * b1 - b2 + c[0]


@nb.njit(cache=True)
def _asym_scaled_exp1(x):
    term = 1.0 / x
    acc = term
    for k in range(1, 25):
        term = -term * k / x
        acc += term
    return acc


@nb.njit(cache=True)
def g_over_rho(rho, vp):
    """G(rho)/rho for the vortex packed in vp (see pack_vortex)."""
    a, b, total, inner, ulo, uhi = vp[0], vp[1], vp[2], vp[3], vp[4], vp[5]
    if rho > b:
        return total / (rho * rho)
    nm = int(vp[6])
    nc = int(vp[7])
    if rho >= a:
        s = (rho - a) / (b - a)
        return (inner + _horner(vp[_HEAD + _SLOT:_HEAD + _SLOT + nm], s)) / (rho * rho)
    u = math.log(1.0 / rho)
    if u <= uhi:
        x = (2.0 * u - ulo - uhi) / (uhi - ulo)
        start = _HEAD + _SLOT + nm
        return _clenshaw(vp[start:start + nc], x)
    return 0.5 * (math.log(u) + _asym_scaled_exp1(2.0 * u))


@nb.njit(cache=True)
def ws_radial_derivative(rho, vp):
    a, b = vp[0], vp[1]
    if rho > b:
        return 0.0
    if rho >= a:
        nd = int(vp[8])
        return _horner(vp[_HEAD:_HEAD + nd], (rho - a) / (b - a)) / (b - a)
    return -1.0 / (rho * math.log(1.0 / rho))


def pack_vortex(profile) -> np.ndarray:
    """Flatten a RadialVortexProfile into one float array for compiled code."""
    cheb = profile.g_interpolant
    dbridge = profile.bridge.deriv().coef
    moment = profile._bridge_moment.coef
    head = np.zeros(_HEAD)
    head[:6] = [profile.inner_cutoff, profile.outer_cutoff, profile.total_mass,
                profile.inner_mass, cheb.domain[0], cheb.domain[1]]
    head[6] = moment.size
    head[7] = cheb.coef.size
    head[8] = dbridge.size
    slot = np.zeros(_SLOT)
    slot[:dbridge.size] = dbridge
    return np.concatenate([head, slot, moment, cheb.coef])


# --------------------------------------------------------------------------
# semi-Lagrangian transport
# --------------------------------------------------------------------------
@nb.njit(cache=True, inline="always")
def _total_velocity(p1, p2, ugx, ugy, x0, y0, h, c1, c2, vp, with_vortex):
    s1 = (p1 - x0) / h
    s2 = (p2 - y0) / h
    v1 = _interp(ugx, s1, s2)
    v2 = _interp(ugy, s1, s2)
    if with_vortex:
        q1 = p1 - c1
        q2 = p2 - c2
        rho = math.sqrt(q1 * q1 + q2 * q2)
        if rho > 0.0:
            f = g_over_rho(rho, vp)
            v1 -= q2 * f
            v2 += q1 * f
    return v1, v2


@nb.njit(cache=True, parallel=True)
def departure_points(ugx, ugy, x0, y0, h, dt, c1, c2, vp, with_vortex):
    """Midpoint-rule backtrace from every node.  Returns (xd, yd, n_outside)."""
    n = ugx.shape[0]
    lo1 = x0 - 0.5 * h
    hi1 = x0 + (n - 0.5) * h
    lo2 = y0 - 0.5 * h
    hi2 = y0 + (n - 0.5) * h
    xd = np.empty((n, n))
    yd = np.empty((n, n))
    bad = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        x1 = x0 + i * h
        for j in range(n):
            x2 = y0 + j * h
            v1, v2 = _total_velocity(x1, x2, ugx, ugy, x0, y0, h, c1, c2, vp, with_vortex)
            m1 = x1 - 0.5 * dt * v1
            m2 = x2 - 0.5 * dt * v2
            v1, v2 = _total_velocity(m1, m2, ugx, ugy, x0, y0, h, c1, c2, vp, with_vortex)
            d1 = x1 - dt * v1
            d2 = x2 - dt * v2
            if d1 < lo1 or d1 > hi1 or d2 < lo2 or d2 > hi2:
                bad[i] += 1
            xd[i, j] = d1
            yd[i, j] = d2
    return xd, yd, bad.sum()


@nb.njit(cache=True)
def forcing_value(p1, p2, ugx, ugy, x0, y0, h, c1, c2, u1c, u2c, vp):
    """-(u_g(p) - u_g(center)) . grad w_s(p - center); zero outside the vortex support."""
    q1 = p1 - c1
    q2 = p2 - c2
    rho = math.sqrt(q1 * q1 + q2 * q2)
    if rho >= vp[1] or rho == 0.0:
        return 0.0
    s1 = (p1 - x0) / h
    s2 = (p2 - y0) / h
    w1 = _interp(ugx, s1, s2) - u1c
    w2 = _interp(ugy, s1, s2) - u2c
    return -(w1 * q1 + w2 * q2) * ws_radial_derivative(rho, vp) / rho


@nb.njit(cache=True, parallel=True)
def transport_update(g, xd, yd, ugx, ugy, x0, y0, h, dt, c1, c2, u1c, u2c, vp, with_forcing):
    """g_new(x) = g(x_d) + dt * F((x + x_d)/2), forcing from the half-step u_g."""
    n = g.shape[0]
    out = np.empty((n, n))
    for i in nb.prange(n):
        x1 = x0 + i * h
        for j in range(n):
            d1 = xd[i, j]
            d2 = yd[i, j]
            val = _interp(g, (d1 - x0) / h, (d2 - y0) / h)
            if with_forcing:
                val += dt * forcing_value(0.5 * (x1 + d1), 0.5 * (y0 + j * h + d2),
                                          ugx, ugy, x0, y0, h, c1, c2, u1c, u2c, vp)
            out[i, j] = val
    return out


@nb.njit(cache=True, parallel=True)
def forcing_grid(ugx, ugy, x0, y0, h, c1, c2, u1c, u2c, vp):
    n = ugx.shape[0]
    out = np.zeros((n, n))
    for i in nb.prange(n):
        for j in range(n):
            out[i, j] = forcing_value(x0 + i * h, y0 + j * h, ugx, ugy, x0, y0, h,
                                      c1, c2, u1c, u2c, vp)
    return out
