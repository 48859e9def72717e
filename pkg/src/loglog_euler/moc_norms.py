"""Moduli of continuity and sampled C^mu norm estimates.

Every seminorm here is a maximum over a finite pair set, hence a lower bound
for the true supremum.  Pairs are stratified by log-decade of separation and
of distance to the origin so that the near-singular region is represented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .vortex_core import default_profile, ws_gradient

INV_E = math.exp(-1.0)

TAGS = ("phi_alpha", "psi_alpha", "phi_beta", "log_lipschitz", "loglog_lipschitz", "holder")


class ModulusDomainError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class ModulusKind:
    tag: str
    parameter: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown modulus {self.tag!r}")
        p = self.parameter
        if self.tag in ("phi_alpha", "psi_alpha", "holder") and not (p is not None and 0 < p < 1):
            raise ValueError(f"{self.tag} needs an exponent in (0, 1)")
        if self.tag == "phi_beta" and not (p is not None and p > 1):
            raise ValueError("phi_beta needs beta > 1")

    @property
    def cap(self) -> float:
        # r loglog(1/r) is increasing only once log(1/r) loglog(1/r) >= 1
        return math.exp(-2.0) if self.tag == "loglog_lipschitz" else INV_E

    def __call__(self, r):
        return moc_value(self, r)


def moc_value(kind: ModulusKind, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= kind.cap):
        raise ModulusDomainError(f"{kind.tag} is evaluated on (0, {kind.cap:.4g}) only")
    L = np.log(1.0 / r)
    p = kind.parameter
    out = {
        "phi_alpha": lambda: L ** (-p),
        "psi_alpha": lambda: r * L ** (1.0 - p),
        "phi_beta": lambda: L ** (-p),
        "log_lipschitz": lambda: r * L,
        "loglog_lipschitz": lambda: r * np.log(L),
        "holder": lambda: r ** p,
    }[kind.tag]()
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# pair sampling
# --------------------------------------------------------------------------
@dataclass
class PairSample:
    x: np.ndarray
    y: np.ndarray
    sep_edges: np.ndarray = field(default_factory=lambda: np.array([]))
    radius_edges: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.x.shape != self.y.shape or self.x.shape[-1] != 2:
            raise ValueError("pair arrays must both have shape (N, 2)")

    def __len__(self):
        return self.x.shape[0]

    @property
    def separation(self) -> np.ndarray:
        return np.hypot(*(self.x - self.y).T)

    @property
    def min_radius(self) -> np.ndarray:
        return np.minimum(np.hypot(*self.x.T), np.hypot(*self.y.T))

    def bin_counts(self):
        """Pairs per separation decade and per distance-to-origin decade."""
        s = np.histogram(self.separation, self.sep_edges)[0] if self.sep_edges.size else None
        r = np.histogram(self.min_radius, self.radius_edges)[0] if self.radius_edges.size else None
        return s, r

    def subset(self, mask) -> "PairSample":
        return PairSample(self.x[mask], self.y[mask], self.sep_edges, self.radius_edges)

    def __add__(self, other: "PairSample") -> "PairSample":
        return PairSample(np.vstack([self.x, other.x]), np.vstack([self.y, other.y]),
                          self.sep_edges, self.radius_edges)

    @classmethod
    def all_pairs(cls, points) -> "PairSample":
        p = np.asarray(points, dtype=float)
        i, j = np.triu_indices(p.shape[0], k=1)
        return cls(p[i], p[j])


def _decade_edges(lo: float, hi: float) -> np.ndarray:
    k0, k1 = math.floor(math.log10(lo) + 1e-12), math.ceil(math.log10(hi) - 1e-12)
    edges = 10.0 ** np.arange(k0, k1 + 1, dtype=float)
    edges[0], edges[-1] = lo, hi
    return edges


def _unit(rng, n):
    th = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack([np.cos(th), np.sin(th)])


def _loguniform(rng, lo, hi, n):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def stratified_pairs(grid=None, seed: int = 0, per_cell: int = 20,
                     sep_range=(1e-10, INV_E), radius_range=(1e-10, None),
                     focus_annulus=(28.5, 33.5), focus_pairs: int = 3000,
                     core_pairs: int = 1000) -> PairSample:
    """Stratified pairs: every (separation decade, radius decade) cell gets
    ``per_cell`` pairs, plus extra pairs in the block annulus and near the origin."""
    rng = np.random.default_rng(seed)
    r_hi = radius_range[1]
    if r_hi is None:
        r_hi = (grid.half_width - 1.0) if grid is not None else 40.0
    sep_edges = _decade_edges(sep_range[0], sep_range[1] * (1 - 1e-12))
    rad_edges = _decade_edges(radius_range[0], r_hi)
    xs, ys = [], []
    for s0, s1 in zip(sep_edges[:-1], sep_edges[1:]):
        for r0, r1 in zip(rad_edges[:-1], rad_edges[1:]):
            rad = _loguniform(rng, r0, r1, per_cell)
            x = rad[:, None] * _unit(rng, per_cell)
            sep = _loguniform(rng, s0, s1, per_cell)
            # step away from the origin so that min(|x|, |y|) stays in the radius bin
            d = _unit(rng, per_cell)
            d *= np.sign(np.einsum("ij,ij->i", d, x))[:, None]
            xs.append(x)
            ys.append(x + sep[:, None] * d)
    if focus_pairs:
        a0, a1 = focus_annulus
        rad = np.sqrt(rng.uniform(a0 * a0, a1 * a1, focus_pairs))
        x = rad[:, None] * _unit(rng, focus_pairs)
        sep = _loguniform(rng, 1e-3, sep_range[1] * (1 - 1e-12), focus_pairs)
        xs.append(x)
        ys.append(x + sep[:, None] * _unit(rng, focus_pairs))
    if core_pairs:
        rad = np.sqrt(rng.uniform(0.0, 1.0, core_pairs))
        x = rad[:, None] * _unit(rng, core_pairs)
        sep = _loguniform(rng, 1e-6, sep_range[1] * (1 - 1e-12), core_pairs)
        xs.append(x)
        ys.append(x + sep[:, None] * _unit(rng, core_pairs))
    pairs = PairSample(np.vstack(xs), np.vstack(ys), sep_edges, rad_edges)
    if grid is not None:
        inside = grid.contains(pairs.x) & grid.contains(pairs.y)
        pairs = pairs.subset(inside)
    return pairs


# --------------------------------------------------------------------------
# seminorms and norms
# --------------------------------------------------------------------------
def _evaluate(values, pts):
    out = np.asarray(values(pts), dtype=float)
    return out


def _differences(values, pairs: PairSample):
    fx = _evaluate(values, pairs.x)
    fy = _evaluate(values, pairs.y)
    d = fx - fy
    if d.ndim == 2:
        return np.hypot(d[:, 0], d[:, 1]), fx, fy
    return np.abs(d), fx, fy


def moc_seminorm(values, pairs: PairSample, kind: ModulusKind) -> float:
    """max over pairs of |f(x) - f(y)| / mu(|x - y|), pairs beyond the cap ignored."""
    if len(pairs) == 0:
        raise ValueError("pair sample is empty")
    sep = pairs.separation
    keep = (sep > 0) & (sep < kind.cap)
    if not np.any(keep):
        return 0.0
    sub = pairs.subset(keep)
    diff, _, _ = _differences(values, sub)
    return float(np.max(diff / moc_value(kind, sep[keep])))


def _sup(values, pairs):
    fx = _evaluate(values, pairs.x)
    fy = _evaluate(values, pairs.y)
    if fx.ndim == 2:
        return float(max(np.hypot(*fx.T).max(), np.hypot(*fy.T).max()))
    return float(max(np.abs(fx).max(), np.abs(fy).max()))


def moc_norm(values, pairs: PairSample, kind: ModulusKind) -> float:
    """Sup over the sampled points plus the sampled seminorm."""
    return _sup(values, pairs) + moc_seminorm(values, pairs, kind)


@dataclass
class RatioEstimate:
    value: float
    numerator: float
    denominator: float
    degenerate: bool = False


def _ratio(num: float, den: float) -> RatioEstimate:
    if den == 0.0:
        return RatioEstimate(float("nan"), num, den, True)
    return RatioEstimate(num / den, num, den)


def forcing_ratio(v, pairs: PairSample, alpha: float = 0.5, tol: float = 1e-12) -> RatioEstimate:
    """||v . grad w_s||_{C^phi_alpha} / ||v||_{C^psi_alpha} on a common pair set."""
    v0 = np.asarray(v(np.zeros((1, 2))), dtype=float).reshape(-1)
    scale = max(1.0, _sup(v, pairs))
    if np.hypot(*v0[:2]) > tol * scale:
        raise PreconditionError("v must vanish at the origin")
    keep = (np.hypot(*pairs.x.T) > 0) & (np.hypot(*pairs.y.T) > 0)
    pairs = pairs.subset(keep)

    def s(p):
        p = np.atleast_2d(p)
        return np.einsum("ij,ij->i", np.asarray(v(p), dtype=float), ws_gradient(p))

    num = moc_norm(s, pairs, ModulusKind("phi_alpha", alpha))
    den = moc_norm(v, pairs, ModulusKind("psi_alpha", alpha))
    return _ratio(num, den)


def vel_from_vor_ratio(w, pairs: PairSample, alpha: float = 0.5, workers=None) -> RatioEstimate:
    """||grad^perp Delta^-1 w||_{C^psi_alpha} / ||w||_{C^phi_alpha} via the FFT Biot-Savart."""
    from .field_engine import biot_savart_fft

    if not np.any(w.values):
        return RatioEstimate(float("nan"), 0.0, 0.0, True)
    u = biot_savart_fft(w, workers=workers)
    inside = w.grid.contains(pairs.x) & w.grid.contains(pairs.y)
    pairs = pairs.subset(inside)
    num = moc_norm(u, pairs, ModulusKind("psi_alpha", alpha))
    den = moc_norm(w, pairs, ModulusKind("phi_alpha", alpha))
    return _ratio(num, den)


# --------------------------------------------------------------------------
# forcing magnitudes for synthetic angular modes
# --------------------------------------------------------------------------
def _smooth_cutoff(s, inner=0.25, outer=0.5):
    if s <= inner:
        return 1.0
    if s >= outer:
        return 0.0
    t = (s - inner) / (outer - inner)
    a = math.exp(-1.0 / t) if t > 0 else 0.0
    b = math.exp(-1.0 / (1.0 - t)) if t < 1 else 0.0
    return b / (a + b)


@dataclass(frozen=True)
class AngularModeField:
    """g(x) = amplitude * f(|x|) * cutoff(|x|) * cos(m theta)."""

    profile: object
    m: int = 2
    amplitude: float = 1.0

    def radial(self, s: float) -> float:
        return self.amplitude * self.profile(s) * _smooth_cutoff(s)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rho = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        f = np.array([self.radial(r) if r > 0 else 0.0 for r in rho])
        return f * np.cos(self.m * th)

    def stream_mode(self, rho: float) -> float:
        """psi_m(rho) with Delta(psi_m cos m theta) = g, decaying at infinity."""
        if self.amplitude == 0.0:
            return 0.0
        m = self.m
        # rho^-m int_0^rho s^(m+1) f ds = rho^2 int_0^1 sigma^(m+1) f(rho sigma) d sigma
        inner = rho * rho * quad(lambda sg: sg ** (m + 1) * self.radial(rho * sg), 0.0, 1.0,
                                 limit=200, epsabs=0.0, epsrel=1e-11)[0]
        # rho^m int_rho^inf s^(1-m) f ds, with s = e^-l
        lo = math.log(2.0)  # cutoff support ends at 1/2
        hi = math.log(1.0 / rho)
        outer = 0.0
        if hi > lo:
            outer = rho ** m * quad(lambda l: math.exp(-(2 - m) * l) * self.radial(math.exp(-l)),
                                    lo, hi, limit=400, epsabs=0.0, epsrel=1e-11)[0]
        return -(inner + outer) / (2.0 * m)

    def velocity_radial(self, x) -> float:
        rho = math.hypot(x[0], x[1])
        th = math.atan2(x[1], x[0])
        return self.m / rho * self.stream_mode(rho) * math.sin(self.m * th)


def table1_field(case: str, alpha: float = 0.5, beta: float = 1.5) -> AngularModeField:
    """Synthetic g for a row of the forcing-magnitude table."""
    L = lambda s: math.log(1.0 / s)  # noqa: E731
    profiles = {
        "i": lambda s: 1.0,
        "ii": lambda s: s ** alpha,
        "iii": lambda s: L(s) ** (-alpha),
        "iv": lambda s: 1.0 / L(s),
        "v": lambda s: L(s) ** (-beta),
    }
    if case not in profiles:
        raise ValueError(f"unsupported row {case!r}")
    return AngularModeField(profiles[case])


def table1_prediction(case: str, r: float, alpha: float = 0.5, beta: float = 1.5) -> float:
    L = math.log(1.0 / r)
    preds = {"i": 1.0, "ii": 1.0 / L, "iii": L ** (-alpha), "iv": math.log(L) / L, "v": 1.0 / L}
    if case not in preds:
        raise ValueError(f"unsupported row {case!r}")
    return preds[case]


def table1_magnitude(case: str, x, g: AngularModeField | None, alpha: float = 0.5,
                     beta: float = 1.5) -> float:
    """|u_g(x) . grad w_s(x)| divided by the row's predicted magnitude."""
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(*x))
    if not 0 < r < math.exp(-2.0):
        raise ValueError("|x| must lie in (0, e^-2)")
    pred = table1_prediction(case, r, alpha, beta)
    if g is None or g.amplitude == 0.0:
        return 0.0
    ur = g.velocity_radial(x)
    dws = float(default_profile().ws_derivative(r))
    return abs(ur * dws) / pred
