"""Numerical checks of the functional inequalities and decay estimates.

Each check returns an ``InequalityRecord`` (lhs <= rhs expected) or a
``SlopeRecord`` (fitted decay slope above a threshold). Compactly supported
test functions are realized on a torus large enough that their boundary tails
are negligible; a tail guard rejects fields for which that fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import campanato as cp
from . import spectral as sp
from .forcing import ModulatedForcing
from .solver import InitialCondition, SolverConfig, Trajectory, run
from .spectral import Grid

TAIL_FRAME = 0.05
TAIL_TOLERANCE = 1e-10
RATIO_TOLERANCE = 1e-8
SLOPE_THRESHOLD = 4.0 - 0.1
TEST_KINDS = ("Gaussian", "Bump", "BandLimitedRandom", "HarmonicPoly", "CaloricPoly", "LacunarySeries")


class TailError(ValueError):
    """The field is not effectively compactly supported inside the box."""


# -- closed-form libraries -----------------------------------------------------------

def _harmonic(degree: int, part: str):
    def f(t, x1, x2):
        z = (x1 + 1j * x2) ** degree
        return z.real if part == "re" else z.imag
    return f


HARMONIC_LIBRARY: dict[str, Callable] = {
    "x1": lambda t, x1, x2: x1,
    "x1x2": lambda t, x1, x2: x1 * x2,
    "x1^2-x2^2": lambda t, x1, x2: x1**2 - x2**2,
}
for _k in range(1, 5):
    HARMONIC_LIBRARY[f"re_z^{_k}"] = _harmonic(_k, "re")
    HARMONIC_LIBRARY[f"im_z^{_k}"] = _harmonic(_k, "im")


def heat_kernel(y1: float, y2: float, s: float):
    """Fundamental solution of the heat equation with its singularity at (y, s)."""

    def f(t, x1, x2):
        dt = t - s
        return np.exp(-((x1 - y1) ** 2 + (x2 - y2) ** 2) / (4.0 * dt)) / (4.0 * math.pi * dt)

    return f


# Cylinders probed by the caloric checks sit at x0 = 0, t0 = 1 with R <= 1; both
# kernels keep parabolic distance >= 2 from every such cylinder.
CALORIC_LIBRARY: dict[str, Callable] = {
    "x1": lambda t, x1, x2: x1,
    "x1x2": lambda t, x1, x2: x1 * x2,
    "x1^2-x2^2": lambda t, x1, x2: x1**2 - x2**2,
    "x1^2+2t": lambda t, x1, x2: x1**2 + 2.0 * t,
    "heat_kernel_past": heat_kernel(0.0, 0.0, -4.0),
    "heat_kernel_side": heat_kernel(3.0, 0.0, -0.5),
}


@dataclass(frozen=True)
class TestFunctionSpec:
    """A test field on a grid. ``realize`` returns an (n, n) array on the grid."""

    __test__ = False  # keep pytest from collecting this class

    kind: str
    grid: Grid
    width: float = 1.0
    radius: float = 1.0
    seed: int = 0
    cutoff: float = 8.0
    degree: int = 1
    ident: str = "x1"
    gamma: float = 0.5
    terms: int = 8

    def __post_init__(self):
        if self.kind not in TEST_KINDS:
            raise ValueError(f"unknown test function kind {self.kind!r}")

    @property
    def label(self) -> str:
        extra = {"Gaussian": f"width={self.width}", "Bump": f"radius={self.radius}",
                 "BandLimitedRandom": f"seed={self.seed},cutoff={self.cutoff}",
                 "HarmonicPoly": f"degree={self.degree}", "CaloricPoly": self.ident,
                 "LacunarySeries": f"gamma={self.gamma},terms={self.terms},seed={self.seed}"}[self.kind]
        return f"{self.kind}({extra})"

    def _centered(self):
        X1, X2 = self.grid.mesh()
        c = self.grid.length / 2
        return X1 - c, X2 - c

    def realize(self) -> np.ndarray:
        g = self.grid
        if self.kind == "Gaussian":
            y1, y2 = self._centered()
            return np.exp(-(y1**2 + y2**2) / (2.0 * self.width**2))
        if self.kind == "Bump":
            y1, y2 = self._centered()
            q = (y1**2 + y2**2) / self.radius**2
            out = np.zeros(g.shape)
            inside = q < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
            return out
        if self.kind == "BandLimitedRandom":
            m1, m2 = g.mode_index
            k = np.sqrt((m1**2 + m2**2).astype(float)) * (2.0 * math.pi / g.length)
            rng = np.random.default_rng(np.random.SeedSequence(self.seed))
            coef = (rng.standard_normal(g.spectral_shape) + 1j * rng.standard_normal(g.spectral_shape))
            coef *= (k <= self.cutoff)
            coef[0, 0] = 0.0
            base = sp.ifft2(coef, g)
            base /= np.sqrt(np.mean(base**2))
            y1, y2 = self._centered()
            sigma = g.length / 12.0
            return base * np.exp(-(y1**2 + y2**2) / (2.0 * sigma**2))
        if self.kind == "HarmonicPoly":
            y1, y2 = self._centered()
            return HARMONIC_LIBRARY[f"re_z^{self.degree}"](0.0, y1, y2)
        if self.kind == "CaloricPoly":
            y1, y2 = self._centered()
            return CALORIC_LIBRARY[self.ident](1.0, y1, y2)
        X1 = g.mesh()[0]
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        phases = rng.uniform(0.0, 2.0 * math.pi, self.terms)
        s = 2.0 * math.pi / g.length
        return sum(2.0 ** (-j * self.gamma) * np.cos(2.0**j * s * X1 + phases[j - 1]) for j in range(1, self.terms + 1))

    def closed_form(self) -> Callable:
        if self.kind == "CaloricPoly":
            return CALORIC_LIBRARY[self.ident]
        if self.kind == "HarmonicPoly":
            return HARMONIC_LIBRARY.get(self.ident, _harmonic(self.degree, "re"))
        raise ValueError(f"{self.kind} has no closed form")


def lacunary_field(grid: Grid, gamma: float = 0.5, terms: int = 8, seed: int = 0) -> np.ndarray:
    """Static velocity (u1, 0) with u1 = sum_j 2^(-j gamma) cos(2^j x1 + phase_j)."""
    u1 = TestFunctionSpec("LacunarySeries", grid, gamma=gamma, terms=terms, seed=seed).realize()
    return np.stack([u1, np.zeros_like(u1)])


# -- records -------------------------------------------------------------------------


@dataclass
class InequalityRecord:
    name: str
    lhs: float
    rhs: float
    params: dict = field(default_factory=dict)
    spec_id: str = ""

    @property
    def ratio(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs <= 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.ratio <= 1.0 + RATIO_TOLERANCE


@dataclass
class SlopeRecord:
    name: str
    slope: float
    halfwidth: float
    threshold: float = SLOPE_THRESHOLD
    spec_id: str = ""
    vacuous: bool = False

    @property
    def passed(self) -> bool:
        return self.vacuous or self.slope >= self.threshold


# -- norms ---------------------------------------------------------------------------


def _modulus(u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u**2, axis=0)) if u.ndim == 3 else np.abs(u)


def lebesgue_norm(u: np.ndarray, q: float, grid: Grid) -> float:
    return sp.integrate(_modulus(u) ** q, grid) ** (1.0 / q)


def gradient_norm(u: np.ndarray, grid: Grid) -> float:
    """||grad u||_2 via Parseval on the spectral gradient."""
    uh = sp.fft2(u)
    return math.sqrt(sp.inner_spectral(uh * grid.ksq, uh, grid))


def tail_fraction(u: np.ndarray, grid: Grid, frame: float = TAIL_FRAME) -> float:
    """Share of int |u|^2 carried by the boundary frame of relative width ``frame``."""
    w = max(1, int(math.ceil(frame * grid.n)))
    m = _modulus(u) ** 2
    total = m.sum()
    if total == 0:
        return 0.0
    inner = m[w:-w, w:-w].sum()
    return float((total - inner) / total)


def _field(spec_or_array, grid: Grid | None):
    if isinstance(spec_or_array, TestFunctionSpec):
        return spec_or_array.realize(), spec_or_array.grid, spec_or_array.label
    if grid is None:
        raise ValueError("a raw array needs its grid")
    return np.asarray(spec_or_array, dtype=float), grid, "array"


def _guard(u, grid, check_tail: bool):
    if check_tail:
        frac = tail_fraction(u, grid)
        if frac > TAIL_TOLERANCE:
            raise TailError(f"boundary tail carries {frac:.3e} of the L2 mass (> {TAIL_TOLERANCE})")


def ladyzhenskaya_constant(r: float) -> float:
    return r / math.sqrt(2.0)


def verify_ladyzhenskaya(spec, r: float, grid: Grid | None = None, check_tail: bool = True,
                         constant: Callable[[float], float] = ladyzhenskaya_constant) -> InequalityRecord:
    """||u||_{2r}^2 <= C(r) ||u||_r ||grad u||_2 with C(r) = r / sqrt(2)."""
    if r < 2:
        raise ValueError("r must be >= 2")
    u, grid, label = _field(spec, grid)
    _guard(u, grid, check_tail)
    lhs = lebesgue_norm(u, 2 * r, grid) ** 2
    rhs = constant(r) * lebesgue_norm(u, r, grid) * gradient_norm(u, grid)
    return InequalityRecord("ladyzhenskaya", lhs, rhs, {"r": r}, label)


def verify_ladyzhenskaya_8_4(spec, grid: Grid | None = None, check_tail: bool = True) -> InequalityRecord:
    """||u||_8^2 <= 2 sqrt(2) ||u||_4 ||grad u||_2."""
    rec = verify_ladyzhenskaya(spec, 4, grid, check_tail)
    rec.name = "ladyzhenskaya_8_4"
    return rec


def verify_interpolation(spec, r: float, grid: Grid | None = None, check_tail: bool = True) -> InequalityRecord:
    """int |u|^(2(r-1)) <= (int |u|^(2r))^((r-2)/r) (int |u|^r)^(2/r)."""
    if r < 2:
        raise ValueError("r must be >= 2")
    u, grid, label = _field(spec, grid)
    _guard(u, grid, check_tail)
    m = _modulus(u)
    lhs = sp.integrate(m ** (2 * (r - 1)), grid)
    rhs = sp.integrate(m ** (2 * r), grid) ** ((r - 2) / r) * sp.integrate(m**r, grid) ** (2 / r)
    return InequalityRecord("interpolation", lhs, rhs, {"r": r}, label)


# -- decay estimates ---------------------------------------------------------------


def verify_caloric_decay(func: Callable, grid: Grid, radii: Sequence[float], x0=(0.0, 0.0), t0: float = 1.0,
                         name: str = "") -> SlopeRecord:
    """Fitted slope of phi(v; z0, rho) against rho for a caloric closed form v."""
    fld = cp.SpaceTimeField(grid, func=func)
    vals = [cp.phi(fld, cp.ParabolicCylinder(x0, t0, r)) for r in radii]
    scale = max(abs(v) for v in vals)
    if scale == 0 or max(vals) <= 1e-14 * max(1.0, scale):
        return SlopeRecord("caloric_decay", float("nan"), float("nan"), spec_id=name, vacuous=True)
    fit = cp.fit_decay_exponent(radii, vals, detect_curvature=False)
    return SlopeRecord("caloric_decay", fit.slope, fit.halfwidth, spec_id=name)


def verify_harmonic_decay(func: Callable, grid: Grid, radii: Sequence[float], x0=(0.0, 0.0),
                          name: str = "") -> SlopeRecord:
    """Fitted slope of int_{B_rho} |h - [h]_rho|^2 against rho for a harmonic h."""
    fld = cp.SpaceTimeField(grid, func=func)
    vals = [cp.ball_oscillation(fld, x0, r) for r in radii]
    if max(vals) <= 0:
        return SlopeRecord("harmonic_decay", float("nan"), float("nan"), spec_id=name, vacuous=True)
    fit = cp.fit_decay_exponent(radii, vals, detect_curvature=False)
    return SlopeRecord("harmonic_decay", fit.slope, fit.halfwidth, spec_id=name)


@dataclass
class HeatEnergyResult:
    record: InequalityRecord
    sup_energy: float
    dissipation: float
    trajectory: Trajectory


def verify_heat_energy(G: np.ndarray, grid: Grid, t_end: float = 1.0, dt: float = 0.01,
                       name: str = "") -> HeatEnergyResult:
    """sup_t ||w||^2 + int ||grad w||^2 <= 2 int ||G||^2 for w_t - Lap w = -div G, w(0) = 0."""
    cfg = SolverConfig(grid=grid, dt=dt, t_end=t_end, initial=InitialCondition("Zero"), nonlinearity="off",
                       projection=False, output_every=10**9)
    traj = run(cfg, forcing=ModulatedForcing(G))
    log_ = traj.energy_log
    sup_w2 = float(np.max(2.0 * log_[:, 1]))
    diss = float(np.sum(log_[1:, 4] * log_[1:, 6]))
    rhs = 2.0 * t_end * sp.integrate(np.asarray(G) ** 2, grid)
    rec = InequalityRecord("heat_energy", sup_w2 + diss, rhs, {"t_end": t_end}, name)
    return HeatEnergyResult(rec, sup_w2, diss, traj)


def single_mode_heat_energy(t_end: float) -> tuple[float, float]:
    """Closed-form (lhs, rhs) for G = diag(sin x1, 0) on the 2 pi torus."""
    e = math.exp(-t_end)
    lhs = 2 * math.pi**2 * ((1 - e) ** 2 + t_end - 2 * (1 - e) + (1 - e * e) / 2)
    return lhs, 4 * math.pi**2 * t_end


def random_stress(grid: Grid, seed: int, cutoff: float = 4.0) -> np.ndarray:
    """Band-limited random tensor with unit RMS modulus."""
    m1, m2 = grid.mode_index
    k = np.sqrt((m1**2 + m2**2).astype(float)) * (2.0 * math.pi / grid.length)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    coef = rng.standard_normal((4,) + grid.spectral_shape) + 1j * rng.standard_normal((4,) + grid.spectral_shape)
    coef *= (k <= cutoff)
    F = sp.ifft2(coef, grid)
    F /= np.sqrt(np.mean(np.sum(F**2, axis=0)))
    return F.reshape((2, 2) + grid.shape)


# -- L4 monitor ------------------------------------------------------------------------


@dataclass
class MonitorReport:
    times: np.ndarray
    l4_4: np.ndarray
    grad2: np.ndarray
    f4_4: np.ndarray
    c_hat: np.ndarray
    c: float
    s: float
    envelope: np.ndarray
    skipped: int

    @property
    def window(self) -> np.ndarray:
        return self.times >= self.s

    @property
    def sup_l4(self) -> float:
        return float(np.max(self.l4_4[self.window]) ** 0.25)

    @property
    def below_envelope(self) -> bool:
        w = self.window
        return bool(np.all(self.l4_4[w] <= self.envelope[w] * (1 + 1e-9) + 1e-300))


def l4_monitor(trajectory: Trajectory, s: float, forcing=None) -> MonitorReport:
    """Time series of ||u||_4^4, ||grad u||^2, ||F||_4^4 and the Gronwall envelope from s.

    The empirical constant c_hat = (d/dt ||u||_4^4)_+ / (||u||_4^4 ||grad u||^2 + ||F||_4^4 + ||u||_4^4)
    uses centered differences; the envelope integrates Y' = c (grad2 + 1) Y + c F4 from
    Y(s) = ||u(s)||_4^4 with c = max c_hat on [s, T] and per-interval upper coefficients.
    """
    from .forcing import ForcingField

    grid = trajectory.grid
    t = trajectory.times
    if t.size < 3:
        raise ValueError("monitor needs at least three snapshots")
    if forcing is None:
        forcing = ForcingField(trajectory.config.forcing, grid)
    A = np.empty(t.size)
    B = np.empty(t.size)
    Fq = np.empty(t.size)
    for j, snap in enumerate(trajectory.snapshots):
        u = np.asarray(snap.u)
        A[j] = sp.integrate(np.sum(u**2, axis=0) ** 2, grid)
        B[j] = gradient_norm(u, grid) ** 2
        if forcing.is_zero:
            Fq[j] = 0.0
        else:
            F = forcing(snap.t)
            Fq[j] = sp.integrate(np.sum(F**2, axis=(0, 1)) ** 2, grid)
    dA = np.gradient(A, t)
    denom = A * B + Fq + A
    ok = denom >= 1e-14
    c_hat = np.where(ok, np.maximum(dA, 0.0) / np.where(ok, denom, 1.0), np.nan)
    win = t >= s
    if not win.any():
        raise ValueError("no snapshot at or after s")
    cw = c_hat[win & ok]
    c = float(np.max(cw)) if cw.size else 0.0
    env = np.full(t.size, np.nan)
    j0 = int(np.argmax(win))
    env[j0] = A[j0]
    for j in range(j0, t.size - 1):
        h = t[j + 1] - t[j]
        a = c * (max(B[j], B[j + 1]) + 1.0)
        f = c * max(Fq[j], Fq[j + 1])
        growth = math.exp(a * h)
        env[j + 1] = growth * env[j] + (f * (growth - 1.0) / a if a > 0 else f * h)
    return MonitorReport(t, A, B, Fq, c_hat, c, s, env, int((~ok).sum()))


# -- suites ----------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def violations(self) -> list:
        return [r for r in self.records if not r.passed]

    def line(self) -> str:
        ineq = [r.ratio for r in self.records if isinstance(r, InequalityRecord)]
        slopes = [r.slope for r in self.records if isinstance(r, SlopeRecord) and not r.vacuous]
        parts = [f"{self.name}: {len(self.records)} records"]
        if ineq:
            parts.append(f"max ratio {max(ineq):.6g}")
        if slopes:
            parts.append(f"min slope {min(slopes):.4f}")
        parts.append("PASS" if self.passed else f"FAIL ({len(self.violations)} violations)")
        return ", ".join(parts)


LADDER_CALORIC = tuple(2.0 ** -np.arange(5))
LADYZHENSKAYA_RS = (2, 3, 4, 6)


def band_family(count: int = 100, n: int = 128, cutoff: float = 8.0) -> list[TestFunctionSpec]:
    g = Grid(n)
    return [TestFunctionSpec("BandLimitedRandom", g, seed=s, cutoff=cutoff) for s in range(count)]


def gaussian_spec(n: int = 256) -> TestFunctionSpec:
    return TestFunctionSpec("Gaussian", Grid(n, 8.0 * math.pi), width=1.0)


def suite_ladyzhenskaya(count: int = 100, constant_scale: float = 1.0) -> SuiteResult:
    const = lambda r: constant_scale * ladyzhenskaya_constant(r)
    res = SuiteResult("ladyzhenskaya")
    fams = [gaussian_spec()] + band_family(count)
    for spec in fams:
        for r in LADYZHENSKAYA_RS:
            res.records.append(verify_ladyzhenskaya(spec, r, constant=const))
    return res


def suite_ladyzhenskaya_8_4(count: int = 20) -> SuiteResult:
    res = SuiteResult("ladyzhenskaya_8_4")
    for spec in [gaussian_spec()] + band_family(count):
        res.records.append(verify_ladyzhenskaya_8_4(spec))
    return res


def suite_interpolation(count: int = 100) -> SuiteResult:
    res = SuiteResult("interpolation")
    fams = [gaussian_spec(), TestFunctionSpec("Bump", Grid(256, 4.0), radius=1.5)] + band_family(count)
    for spec in fams:
        for r in LADYZHENSKAYA_RS:
            res.records.append(verify_interpolation(spec, r))
    return res


def suite_caloric(n: int = 256) -> SuiteResult:
    grid = Grid(n, 4.0)
    res = SuiteResult("caloric")
    for name, func in CALORIC_LIBRARY.items():
        res.records.append(verify_caloric_decay(func, grid, LADDER_CALORIC, name=name))
    return res


def suite_harmonic(n: int = 512) -> SuiteResult:
    grid = Grid(n, 4.0)
    res = SuiteResult("harmonic")
    for name, func in HARMONIC_LIBRARY.items():
        res.records.append(verify_harmonic_decay(func, grid, LADDER_CALORIC, name=name))
    return res


def suite_heat_energy(count: int = 20, n: int = 32) -> SuiteResult:
    grid = Grid(n)
    res = SuiteResult("heat_energy")
    X1 = grid.mesh()[0]
    G = np.zeros((2, 2) + grid.shape)
    G[0, 0] = np.sin(X1)
    res.records.append(verify_heat_energy(G, grid, name="diag(sin x1, 0)").record)
    for seed in range(count):
        res.records.append(verify_heat_energy(random_stress(grid, seed), grid, name=f"random(seed={seed})").record)
    return res


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "ladyzhenskaya": suite_ladyzhenskaya,
    "ladyzhenskaya_8_4": suite_ladyzhenskaya_8_4,
    "interpolation": suite_interpolation,
    "caloric": suite_caloric,
    "harmonic": suite_harmonic,
    "heat_energy": suite_heat_energy,
}
