"""Oscillation functionals over parabolic cylinders and decay-exponent fits.

A parabolic cylinder Q(z0, R) is the ball B(x0, R) times the time interval
(t0 - R^2, t0). Integrals over it are discretized by a spatial stencil of
grid nodes, each weighted by the fraction of its cell covered by the disk,
and a time rule over the sampled snapshot levels whose weights add up to R^2.

Functionals (un-normalized, as integrals rather than averages):

* ``phi``: (int_Q |u - (u)_Q|^4)^(1/2) with the space-time mean (u)_Q
* ``psi``: (int_Q |u|^4)^(1/2)
* ``d_pressure``: int_Q |p - [p]_B(t)|^2 with the spatial mean taken per slice
* ``theta``: phi at radius tau*R plus d_pressure at radius R
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .spectral import Grid

MIN_SPACE_NODES = 32
MIN_TIME_LEVELS = 4
COVERAGE_SUBSAMPLES = 24
GAUSS_TIME_NODES = 8
CAMPANATO_SCHEMA = "nsholder-campanato v1"
CAMPANATO_COLUMNS = ("x0_1", "x0_2", "t0", "radius", "phi", "psi", "d_pressure", "theta",
                     "slope_phi", "gamma_est", "halfwidth")


class ResolutionError(ValueError):
    """The cylinder is not resolved by the sampled grid or snapshot levels."""


@dataclass(frozen=True)
class ParabolicCylinder:
    x0: tuple[float, float]
    t0: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.r}")
        object.__setattr__(self, "x0", (float(self.x0[0]), float(self.x0[1])))

    @property
    def t_bottom(self) -> float:
        return self.t0 - self.r**2

    def scaled(self, factor: float) -> "ParabolicCylinder":
        return ParabolicCylinder(self.x0, self.t0, self.r * factor)

    @property
    def key(self) -> tuple[float, float, float]:
        return (self.x0[0], self.x0[1], self.t0)


# -- field sources -----------------------------------------------------------------


class _Attr(Sequence):
    def __init__(self, items, name):
        self._items = items
        self._name = name

    def __len__(self):
        return len(self._items)

    def __getitem__(self, j):
        return getattr(self._items[j], self._name)


class SpaceTimeField:
    """A field over space-time that cylinder quadratures can sample.

    Three storage forms are supported:

    * ``levels``: a sequence indexed by snapshot level, entries shaped (..., n, n),
      together with the strictly increasing ``times``
    * ``static``: one array (..., n, n) valid at every time, optionally scaled by
      a scalar ``modulation(t)``
    * ``func``: a closed form ``func(t, x1, x2)`` evaluated at unwrapped node
      coordinates; with ``times=None`` time integrals use Gauss-Legendre nodes
    """

    def __init__(
        self,
        grid: Grid,
        *,
        levels: Sequence[np.ndarray] | None = None,
        times: Sequence[float] | None = None,
        static: np.ndarray | None = None,
        modulation: Callable[[float], float] | None = None,
        func: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None,
    ):
        given = sum(x is not None for x in (levels, static, func))
        if given != 1:
            raise ValueError("give exactly one of levels, static or func")
        self.grid = grid
        self.levels = levels
        self.static = None if static is None else np.asarray(static)
        self.modulation = modulation
        self.func = func
        self.times = None if times is None else np.asarray(times, dtype=float)
        if levels is not None:
            if self.times is None or len(self.times) != len(levels):
                raise ValueError("levels need matching times")
        if self.times is not None and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, trajectory, name: str = "u") -> "SpaceTimeField":
        return cls(trajectory.grid, levels=_Attr(trajectory.snapshots, name), times=trajectory.times)

    @classmethod
    def from_forcing(cls, forcing, grid: Grid, times=None) -> "SpaceTimeField":
        """Stress field of a ``ForcingField``-like object (profile times modulation)."""
        mod = None if forcing.is_static else forcing.modulation
        return cls(grid, static=forcing.profile, modulation=mod, times=times)

    @property
    def time_exact(self) -> bool:
        return self.static is not None and self.modulation is None

    def _time_rule(self, cyl: ParabolicCylinder, max_time_levels: int | None):
        """Sample times (or level indices) and weights on (t0 - R^2, t0]."""
        r2 = cyl.r**2
        if self.time_exact:
            return np.array([cyl.t0]), np.array([r2]), None
        if self.times is None:
            x, w = np.polynomial.legendre.leggauss(GAUSS_TIME_NODES)
            return cyl.t0 - 0.5 * r2 * (1.0 - x), 0.5 * r2 * w, None
        times = self.times
        tol = 1e-9 * max(1.0, abs(cyl.t0))
        top = int(np.searchsorted(times, cyl.t0 - tol))
        if top >= len(times) or abs(times[top] - cyl.t0) > tol:
            raise ResolutionError(f"top time {cyl.t0} is not a snapshot time")
        bottom = cyl.t0 - r2
        if bottom < times[0] - tol:
            raise ResolutionError(f"cylinder bottom {bottom:.6g} precedes the first snapshot {times[0]:.6g}")
        first = int(np.searchsorted(times, bottom + tol, side="left"))
        idx = np.arange(first, top + 1)
        if max_time_levels is not None and len(idx) > max_time_levels:
            stride = 1
            while len(idx[::-1][::stride]) > max_time_levels:
                stride *= 2
            idx = idx[::-1][::stride][::-1]
        t = times[idx]
        prev = np.concatenate([[bottom], t[:-1]])
        w = t - np.maximum(prev, bottom)
        return t, w, idx

    def sample(self, center_index, stencil, cyl, t, idx) -> np.ndarray:
        """Values at stencil nodes for each time, shaped (nt, ..., npts)."""
        n = self.grid.n
        di, dj, _ = stencil
        if self.func is not None:
            h = self.grid.h
            x1 = cyl.x0[0] + di * h
            x2 = cyl.x0[1] + dj * h
            return np.stack([np.asarray(self.func(float(tk), x1, x2), dtype=float) for tk in t])
        ii = (center_index[0] + di) % n
        jj = (center_index[1] + dj) % n
        if self.static is not None:
            base = self.static[..., ii, jj]
            if self.modulation is None:
                return base[None]
            return np.stack([base * self.modulation(float(tk)) for tk in t])
        return np.stack([np.asarray(self.levels[j])[..., ii, jj] for j in idx])


@lru_cache(maxsize=256)
def _disk_stencil(n: int, length: float, r: float):
    """Node offsets and coverage-weighted cell volumes for a disk of radius r."""
    h = length / n
    m = int(math.ceil(r / h)) + 1
    d = np.arange(-m, m + 1)
    DI, DJ = np.meshgrid(d, d, indexing="ij")
    cx, cy = DI * h, DJ * h
    # nearest and farthest points of each cell from the disk center
    near = np.hypot(np.maximum(np.abs(cx) - h / 2, 0.0), np.maximum(np.abs(cy) - h / 2, 0.0))
    far = np.hypot(np.abs(cx) + h / 2, np.abs(cy) + h / 2)
    frac = np.where(far <= r, 1.0, 0.0)
    cut = (near < r) & (far > r)
    s = COVERAGE_SUBSAMPLES
    sub = (np.arange(s) + 0.5) / s - 0.5
    S1, S2 = np.meshgrid(sub * h, sub * h, indexing="ij")
    for a, b in zip(*np.nonzero(cut)):
        inside = (cx[a, b] + S1) ** 2 + (cy[a, b] + S2) ** 2 < r * r
        frac[a, b] = inside.mean()
    keep = frac > 0
    return DI[keep], DJ[keep], frac[keep] * h * h


@dataclass
class CylinderQuadrature:
    """Discrete rule for one cylinder: spatial stencil and time levels."""

    cylinder: ParabolicCylinder
    center_index: tuple[int, int]
    offsets: tuple[np.ndarray, np.ndarray]
    space_weights: np.ndarray
    times: np.ndarray
    time_weights: np.ndarray
    levels: np.ndarray | None = None

    @property
    def n_space(self) -> int:
        return int(self.space_weights.size)

    @property
    def n_time(self) -> int:
        return int(self.time_weights.size)

    @property
    def measure(self) -> float:
        return float(self.space_weights.sum() * self.time_weights.sum())


def build_quadrature(field: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels: int | None = None,
                     check: bool = True) -> CylinderQuadrature:
    grid = field.grid
    di, dj, ws = _disk_stencil(grid.n, float(grid.length), float(cyl.r))
    if cyl.r >= grid.length / 2:
        raise ResolutionError(f"radius {cyl.r} does not fit in the periodic box")
    if check and ws.size < MIN_SPACE_NODES:
        raise ResolutionError(f"radius {cyl.r:.4g} covers {ws.size} nodes (< {MIN_SPACE_NODES})")
    t, wt, idx = field._time_rule(cyl, max_time_levels)
    if check and not field.time_exact and wt.size < MIN_TIME_LEVELS:
        raise ResolutionError(f"radius {cyl.r:.4g} spans {wt.size} time levels (< {MIN_TIME_LEVELS})")
    h = grid.h
    center = (int(round(cyl.x0[0] / h)) % grid.n, int(round(cyl.x0[1] / h)) % grid.n)
    return CylinderQuadrature(cyl, center, (di, dj), ws, t, wt, idx)


def _values(field: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None):
    q = build_quadrature(field, cyl, max_time_levels)
    v = field.sample(q.center_index, (q.offsets[0], q.offsets[1], q.space_weights), cyl, q.times, q.levels)
    return v, q


def _integrate(vals: np.ndarray, q: CylinderQuadrature) -> float:
    """Sum of w_t * w_x * vals over a (nt, npts) array."""
    return float(q.time_weights @ (vals @ q.space_weights))


def _sq_modulus(v: np.ndarray) -> np.ndarray:
    """|v|^2 summed over component axes of a (nt, ..., npts) array."""
    axes = tuple(range(1, v.ndim - 1))
    return np.sum(v * v, axis=axes) if axes else v * v


def mean_space_time(field: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> np.ndarray:
    """Quadrature average over the cylinder (one value per component)."""
    v, q = _values(field, cyl, max_time_levels)
    return np.tensordot(q.time_weights, v @ q.space_weights, axes=(0, 0)) / q.measure


def mean_space(field: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> np.ndarray:
    """Per-slice spatial averages over B(x0, R), shaped (nt, ...)."""
    v, q = _values(field, cyl, max_time_levels)
    return (v @ q.space_weights) / q.space_weights.sum()


def _oscillation_quartic(v, q) -> float:
    mean = np.tensordot(q.time_weights, v @ q.space_weights, axes=(0, 0)) / q.measure
    dev = v - mean[None, ..., None]
    return _integrate(_sq_modulus(dev) ** 2, q)


def phi(u: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> float:
    v, q = _values(u, cyl, max_time_levels)
    return math.sqrt(max(_oscillation_quartic(v, q), 0.0))


def psi(u: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> float:
    v, q = _values(u, cyl, max_time_levels)
    return math.sqrt(_integrate(_sq_modulus(v) ** 2, q))


def d_pressure(p: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> float:
    v, q = _values(p, cyl, max_time_levels)
    slice_mean = (v @ q.space_weights) / q.space_weights.sum()
    dev = v - slice_mean[..., None]
    return _integrate(_sq_modulus(dev), q)


def theta(u: SpaceTimeField, p: SpaceTimeField, cyl: ParabolicCylinder, tau: float, max_time_levels=None) -> float:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return phi(u, cyl.scaled(tau), max_time_levels) + d_pressure(p, cyl, max_time_levels)


def quartic_oscillation_about(u: SpaceTimeField, cyl: ParabolicCylinder, a, max_time_levels=None) -> float:
    """int_Q |u - a|^4 for a fixed constant vector a."""
    v, q = _values(u, cyl, max_time_levels)
    a = np.asarray(a, dtype=float)
    return _integrate(_sq_modulus(v - a[None, ..., None]) ** 2, q)


def quartic_oscillation(u: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> float:
    """int_Q |u - (u)_Q|^4, the square of ``phi``."""
    v, q = _values(u, cyl, max_time_levels)
    return _oscillation_quartic(v, q)


def ball_oscillation(field: SpaceTimeField, x0, r: float, t: float = 0.0, check: bool = True) -> float:
    """Spatial int_B |f - [f]_B|^2 over B(x0, r) at one time (no time factor)."""
    grid = field.grid
    di, dj, ws = _disk_stencil(grid.n, float(grid.length), float(r))
    if check and ws.size < MIN_SPACE_NODES:
        raise ResolutionError(f"radius {r:.4g} covers {ws.size} nodes (< {MIN_SPACE_NODES})")
    cyl = ParabolicCylinder(x0, t, r)
    h = grid.h
    center = (int(round(cyl.x0[0] / h)) % grid.n, int(round(cyl.x0[1] / h)) % grid.n)
    times = np.array([t])
    idx = None
    if field.levels is not None:
        j = int(np.argmin(np.abs(field.times - t)))
        idx, times = np.array([j]), field.times[[j]]
    v = field.sample(center, (di, dj, ws), cyl, times, idx)[0]
    mean = (v @ ws) / ws.sum()
    dev = v - mean[..., None]
    axes = tuple(range(dev.ndim - 1))
    sq = np.sum(dev * dev, axis=axes) if axes else dev * dev
    return float(sq @ ws)


# -- forcing seminorm --------------------------------------------------------------


@dataclass
class SeminormResult:
    value: float
    cylinder: ParabolicCylinder | None
    evaluated: int
    skipped: int


def m2gamma_seminorm(F: SpaceTimeField, gamma: float, family: Sequence[ParabolicCylinder],
                     max_time_levels=None) -> SeminormResult:
    """max over the family of R^(1-gamma) * (|Q|^-1 int_Q |F - (F)_Q|^2)^(1/2).

    Means are space-time means. Unresolved cylinders are skipped and counted.
    A finite family gives a lower bound for the supremum over all cylinders.
    """
    if not family:
        raise ValueError("cylinder family is empty")
    best, arg, done, skipped = 0.0, None, 0, 0
    for cyl in family:
        try:
            v, q = _values(F, cyl, max_time_levels)
        except ResolutionError:
            skipped += 1
            continue
        mean = np.tensordot(q.time_weights, v @ q.space_weights, axes=(0, 0)) / q.measure
        var = _integrate(_sq_modulus(v - mean[None, ..., None]), q) / q.measure
        val = cyl.r ** (1.0 - gamma) * math.sqrt(max(var, 0.0))
        done += 1
        if arg is None or val > best:
            best, arg = val, cyl
    return SeminormResult(best, arg, done, skipped)


def cylinder_family(grid: Grid, radii: Sequence[float], tops: Sequence[float], stride: float = 0.5,
                    max_centers: int | None = None) -> list[ParabolicCylinder]:
    """Dyadic radii times a lattice of centers (spacing stride*R) times top times."""
    out = []
    L = grid.length
    for r in radii:
        step = max(stride * r, grid.h)
        m = max(1, int(round(L / step)))
        centers = [(i * L / m, j * L / m) for i in range(m) for j in range(m)]
        if max_centers is not None and len(centers) > max_centers:
            pick = np.linspace(0, len(centers) - 1, max_centers).round().astype(int)
            centers = [centers[k] for k in pick]
        out.extend(ParabolicCylinder(c, t, r) for t in tops for c in centers)
    return out


# -- exponent fits -----------------------------------------------------------------


@dataclass
class DecayFit:
    """Log-log least-squares fit of a functional against the radius."""

    slope: float
    halfwidth: float
    intercept: float
    n_points: int
    gamma_est: float
    flag: str = ""
    window_sensitivity: float = float("nan")
    radii: np.ndarray = field(default_factory=lambda: np.empty(0))


SATURATION_HALFWIDTH = 0.1


def gamma_from_slope(slope: float, halfwidth: float = 0.0) -> tuple[float, str]:
    """gamma = (slope - 2)/2 clipped to [0, 1].

    A precise fit (half-width at most ``SATURATION_HALFWIDTH``) whose 95%
    interval reaches an endpoint of [2, 4] is reported at that endpoint and
    flagged ``saturated_*``: the data cannot tell it apart. Wider intervals
    carry no such information and keep the raw estimate.
    """
    g = (slope - 2.0) / 2.0
    if g <= 0.0:
        return 0.0, "clipped_low"
    if g >= 1.0:
        return 1.0, "clipped_high"
    if halfwidth <= SATURATION_HALFWIDTH:
        if slope + halfwidth >= 4.0:
            return 1.0, "saturated_high"
        if slope - halfwidth <= 2.0:
            return 0.0, "saturated_low"
    return g, ""


def _linfit(x, y):
    res = stats.linregress(x, y)
    dof = len(x) - 2
    hw = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return float(res.slope), float(res.intercept), hw


def fit_decay_exponent(radii, values, detect_curvature: bool = True) -> DecayFit:
    """Slope of log(value) against log(radius) with a 95% confidence half-width.

    Nonpositive values are dropped. With six or more points, a log-log curve
    that a quadratic explains markedly better triggers a refit without the two
    largest radii; the slope change is reported as ``window_sensitivity``.
    """
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (v > 0) & np.isfinite(v) & (r > 0)
    r, v = r[ok], v[ok]
    if r.size < 4:
        raise ValueError(f"decay fit needs at least 4 positive values, got {r.size}")
    order = np.argsort(r)
    r, v = r[order], v[order]
    x, y = np.log(r), np.log(v)
    slope, icpt, hw = _linfit(x, y)
    sens = float("nan")
    used = r
    if detect_curvature and r.size >= 6:
        lin_rms = np.sqrt(np.mean((y - (slope * x + icpt)) ** 2))
        quad = np.polyfit(x, y, 2)
        quad_rms = np.sqrt(np.mean((y - np.polyval(quad, x)) ** 2))
        if lin_rms > 0.02 and quad_rms < 0.5 * lin_rms:
            s2, i2, h2 = _linfit(x[:-2], y[:-2])
            sens = abs(s2 - slope)
            slope, icpt, hw, used = s2, i2, h2, r[:-2]
    g, flag = gamma_from_slope(slope, hw)
    return DecayFit(slope, hw, icpt, int(used.size), g, flag, sens, used)


def dyadic_ladder(r0: float, depth: int, ratio: float = 0.5) -> np.ndarray:
    """Radii r0 * ratio^k for k < depth (ratio 0.5 is the dyadic ladder)."""
    return r0 * ratio ** np.arange(depth)


def resolvable(field: SpaceTimeField, cyl: ParabolicCylinder, max_time_levels=None) -> bool:
    try:
        build_quadrature(field, cyl, max_time_levels)
    except ResolutionError:
        return False
    return True


# -- starting radius -----------------------------------------------------------------


@dataclass
class RadiusSelection:
    radius: float | None
    psi_max: dict
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.radius is not None


def select_r0(u: SpaceTimeField, centers: Sequence, tops: Sequence[float], tau: float,
              r_max: float = 1.0, depth: int = 8, max_time_levels=None) -> RadiusSelection:
    """Largest dyadic R <= r_max with psi(u; z0, R) < tau^4 at every sampled center.

    Radii that some sampled cylinder cannot resolve are not admissible.
    """
    threshold = tau**4
    psi_max = {}
    for r in dyadic_ladder(r_max, depth):
        worst = 0.0
        try:
            for t0 in tops:
                for c in centers:
                    worst = max(worst, psi(u, ParabolicCylinder(c, t0, r), max_time_levels))
        except ResolutionError as exc:
            psi_max[float(r)] = float("nan")
            if r == dyadic_ladder(r_max, depth)[-1]:
                return RadiusSelection(None, psi_max, f"unresolved: {exc}")
            continue
        psi_max[float(r)] = worst
        if worst < threshold:
            return RadiusSelection(float(r), psi_max)
    return RadiusSelection(None, psi_max, f"psi never fell below tau^4 = {threshold:.4g}")


# -- reports -----------------------------------------------------------------------


@dataclass
class CylinderFit:
    x0: tuple[float, float]
    t0: float
    fit: DecayFit | None
    error: str = ""


@dataclass
class CampanatoReport:
    tau: float
    rows: list[tuple] = field(default_factory=list)
    fits: list[CylinderFit] = field(default_factory=list)
    unresolved: int = 0

    def gamma_estimates(self) -> np.ndarray:
        return np.array([f.fit.gamma_est for f in self.fits if f.fit is not None])

    def slopes(self) -> np.ndarray:
        return np.array([f.fit.slope for f in self.fits if f.fit is not None])

    def table(self) -> list[tuple]:
        out = list(self.rows)
        for f in self.fits:
            if f.fit is not None:
                out.append((f.x0[0], f.x0[1], f.t0, 0.0, *(np.nan,) * 4, f.fit.slope, f.fit.gamma_est, f.fit.halfwidth))
        return sorted(out, key=lambda row: (row[0], row[1], row[2], -row[3] if row[3] else 1.0))

    def summary(self) -> dict:
        g = self.gamma_estimates()
        s = self.slopes()
        if g.size == 0:
            return {"cylinders": 0, "gamma_est": None, "flag": "undefined", "unresolved": self.unresolved}
        return {
            "cylinders": int(g.size),
            "gamma_est": {"min": float(g.min()), "median": float(np.median(g)), "max": float(g.max())},
            "slope_phi": {"min": float(s.min()), "median": float(np.median(s)), "max": float(s.max())},
            "clipped": int(sum(f.fit.flag != "" for f in self.fits if f.fit is not None)),
            "unresolved": self.unresolved,
        }


def campanato_report(u: SpaceTimeField, p: SpaceTimeField | None, centers: Sequence, tops: Sequence[float],
                     radii: Sequence[float], tau: float = 0.5, max_time_levels=None) -> CampanatoReport:
    """Evaluate the functionals on every (center, top, radius) and fit phi per cylinder stack."""
    rep = CampanatoReport(tau=tau)
    for t0 in tops:
        for c in centers:
            rs, ph = [], []
            for r in radii:
                cyl = ParabolicCylinder(c, t0, r)
                try:
                    f_phi = phi(u, cyl, max_time_levels)
                    f_psi = psi(u, cyl, max_time_levels)
                except ResolutionError:
                    rep.unresolved += 1
                    continue
                f_d = d_pressure(p, cyl, max_time_levels) if p is not None else 0.0
                try:
                    f_theta = phi(u, cyl.scaled(tau), max_time_levels) + f_d
                except ResolutionError:
                    f_theta = float("nan")
                rep.rows.append((c[0], c[1], t0, float(r), f_phi, f_psi, f_d, f_theta, np.nan, np.nan, np.nan))
                rs.append(r)
                ph.append(f_phi)
            try:
                fit = fit_decay_exponent(rs, ph)
                rep.fits.append(CylinderFit(tuple(c), t0, fit))
            except ValueError as exc:
                rep.fits.append(CylinderFit(tuple(c), t0, None, str(exc)))
    return rep
