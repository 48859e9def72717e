"""Four-block mollified initial perturbation and its hyperbolic axis velocity."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad

from .field_engine import Grid2D, ScalarField, biot_savart_direct

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_INNER_PANELS = 4


class HyperbolicityError(RuntimeError):
    """No positive slope K exists for the sampled axis profile."""


class SymmetryError(ValueError):
    """Input violates the even symmetry the construction relies on."""


@dataclass(frozen=True)
class BlockPattern:
    """Signed axis-aligned squares (x_lo, x_hi, y_lo, y_hi, sign)."""

    blocks: tuple = (
        (21.0, 23.0, 21.0, 23.0, 1.0),
        (-23.0, -21.0, -23.0, -21.0, 1.0),
        (-23.0, -21.0, 21.0, 23.0, -1.0),
        (21.0, 23.0, -23.0, -21.0, -1.0),
    )

    @classmethod
    def single(cls) -> "BlockPattern":
        return cls(blocks=((21.0, 23.0, 21.0, 23.0, 1.0),))

    def is_even(self) -> bool:
        mirrored = {(-b[1], -b[0], -b[3], -b[2], b[4]) for b in self.blocks}
        return mirrored == set(self.blocks)

    def total_integral(self) -> float:
        return sum(s * (x1 - x0) * (y1 - y0) for x0, x1, y0, y1, s in self.blocks)

    def extent(self) -> float:
        return max(max(abs(v) for v in b[:4]) for b in self.blocks)


def _bump(q2):
    out = np.zeros_like(q2)
    inside = q2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - q2[inside]))
    return out


@dataclass(frozen=True)
class Mollifier:
    """eta(x) = exp(-1/(1-|x|^2)) / Z on the unit disk, scaled to radius epsilon."""

    epsilon: float = 0.5
    mass: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        z = 2.0 * math.pi * quad(lambda r: r * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0,
                                 epsabs=1e-15, epsrel=1e-14)[0]
        object.__setattr__(self, "mass", z)

    def rectangle_fraction(self, x, rect) -> float:
        """int over rect of eta_eps(x - y) dy for one point x."""
        eps = self.epsilon
        a1, b1 = (rect[0] - x[0]) / eps, (rect[1] - x[0]) / eps
        a2, b2 = (rect[2] - x[1]) / eps, (rect[3] - x[1]) / eps
        lo, hi = max(a1, -1.0), min(b1, 1.0)
        if lo >= hi or a2 >= 1.0 or b2 <= -1.0:
            return 0.0
        # fixed panels tame the flat essential singularity at the rim
        cuts = [lo, hi] + [p for p in (-0.9, -0.6, 0.0, 0.6, 0.9) if lo < p < hi]
        for c in (a2, b2):
            if abs(c) < 1.0:
                k = math.sqrt(1.0 - c * c)
                cuts += [p for p in (-k, k) if lo < p < hi]
        cuts = np.unique(cuts)
        total = 0.0
        for u0, u1 in zip(cuts[:-1], cuts[1:]):
            q1 = 0.5 * (u1 - u0) * _GL_NODES + 0.5 * (u1 + u0)
            s = np.sqrt(np.clip(1.0 - q1 * q1, 0.0, None))
            v0 = np.maximum(a2, -s)
            v1 = np.minimum(b2, s)
            span = np.clip(v1 - v0, 0.0, None) / _INNER_PANELS
            inner = np.zeros_like(q1)
            for k in range(_INNER_PANELS):
                mid = v0 + (k + 0.5) * span
                q2 = 0.5 * span[:, None] * _GL_NODES[None, :] + mid[:, None]
                inner += 0.5 * span * (_bump(q1[:, None] ** 2 + q2 ** 2) @ _GL_WEIGHTS)
            total += 0.5 * (u1 - u0) * (inner @ _GL_WEIGHTS)
        return total / self.mass


def build_g0(epsilon: float = 0.5, grid: Grid2D | None = None,
             pattern: BlockPattern | None = None, amplitude: float = 1.0) -> ScalarField:
    """g_0 = eta_eps * c_0 sampled at grid nodes."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1); larger values leak the support")
    grid = grid or Grid2D()
    pattern = pattern or BlockPattern()
    if pattern.extent() + epsilon >= grid.half_width - 4 * grid.h:
        raise ValueError("grid too small for the block pattern")
    moll = Mollifier(epsilon)
    x1, x2 = grid.axes()
    values = np.zeros((grid.n, grid.n))
    for x0_, x1_, y0_, y1_, sign in pattern.blocks:
        ii = np.nonzero((x1 > x0_ - epsilon) & (x1 < x1_ + epsilon))[0]
        jj = np.nonzero((x2 > y0_ - epsilon) & (x2 < y1_ + epsilon))[0]
        for i in ii:
            for j in jj:
                px, py = x1[i], x2[j]
                if x0_ + epsilon <= px <= x1_ - epsilon and y0_ + epsilon <= py <= y1_ - epsilon:
                    values[i, j] += sign
                else:
                    values[i, j] += sign * moll.rectangle_fraction((px, py), (x0_, x1_, y0_, y1_))
    return ScalarField(grid, amplitude * values, even=pattern.is_even())


@dataclass
class AxisProfile:
    """Second velocity component of u_{g0} on the positive x2 axis."""

    radii: np.ndarray
    u2: np.ndarray
    origin_velocity: np.ndarray
    field_symmetry_defect: float
    field_sup: float

    @property
    def slopes(self) -> np.ndarray:
        return self.u2 / self.radii

    def pairs(self):
        return list(zip(self.radii.tolist(), self.u2.tolist()))


def axis_velocity_profile(g0: ScalarField, radii) -> AxisProfile:
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(radii >= 1):
        raise ValueError("radii must lie in (0, 1)")
    pts = np.column_stack([np.zeros(radii.size + 1), np.concatenate([[0.0], radii])])
    u = biot_savart_direct(g0, pts)
    return AxisProfile(radii, u[1:, 1].copy(), u[0].copy(),
                       g0.symmetry_defect(), g0.sup())


@dataclass
class HyperbolicityFit:
    K: float
    delta: float
    epsilon: float | None
    residual: float
    slope_spread: float
    slope_min: float
    slope_max: float

    def to_dict(self) -> dict:
        return {k: float(v) if v is not None else None for k, v in asdict(self).items()}


def fit_hyperbolicity(profile: AxisProfile, epsilon: float | None = None,
                      margin: float = 1e-3) -> HyperbolicityFit:
    """Certify -(K+1) r <= u2(0, r) <= -K r on the sampled radii.

    K is the smallest observed -u2/r shrunk by the relative ``margin``; delta is
    the largest radius up to which every sampled radius satisfies the band.
    """
    r = profile.radii
    if r.size < 3 or math.log10(r.max() / r.min()) < 3.0:
        raise ValueError("profile must cover at least three decades of r")
    scale = max(profile.field_sup, 1e-300)
    if profile.field_symmetry_defect > 1e-12 * scale:
        raise SymmetryError("g0 is not even; the axis velocity need not vanish at the origin")
    slopes = profile.slopes
    if np.any(slopes >= 0):
        bad = r[slopes >= 0]
        raise HyperbolicityError(
            f"u2(0, r) >= 0 at r = {bad.min():.3g}; adjust epsilon or the block layout")
    neg = -slopes
    K = float(neg.min() * (1.0 - margin))
    order = np.argsort(r)
    ok = (neg[order] >= K) & (neg[order] <= K + 1.0)
    first_bad = np.argmin(ok) if not ok.all() else ok.size
    delta = float(r[order][first_bad - 1]) if first_bad > 0 else 0.0
    excess = np.maximum(K - neg, 0.0) + np.maximum(neg - (K + 1.0), 0.0)
    spread = float((neg.max() - neg.min()) / neg.mean())
    return HyperbolicityFit(K, delta, epsilon, float(excess.max()), spread,
                            float(neg.min()), float(neg.max()))


def default_radii(n: int = 41, r_max: float = 0.5) -> np.ndarray:
    return np.geomspace(1e-8, r_max, n)
