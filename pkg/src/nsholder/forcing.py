"""Singular stress tensors F for the forcing term -div F."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Grid

KINDS = ("Zero", "IndicatorStress", "HoelderRandomStress", "LqStress", "SmoothStress")

# Unit-Frobenius symmetric shear stress; its divergence is not a gradient.
SHEAR = np.array([[0.0, 1.0], [1.0, 0.0]]) / np.sqrt(2.0)


@dataclass(frozen=True)
class ForcingSpec:
    """Description of a stress field F(x, t).

    ``geometry`` holds kind-specific keys: ``center`` and ``radius`` for the
    indicator and power-law kinds, ``cutoff`` for band-limited kinds, ``q`` for
    the power-law kind (with ``delta`` pulling the singularity just inside L^q).
    """

    kind: str = "Zero"
    gamma: float = 0.0
    amplitude: float = 1.0
    seed: int = 0
    geometry: dict = field(default_factory=dict)
    time_dependence: str = "static"
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.time_dependence not in ("static", "modulated"):
            raise ValueError(f"unknown time dependence {self.time_dependence!r}")
        if self.kind == "LqStress" and self.geometry.get("q", 8.0) <= 2.0:
            raise ValueError("LqStress needs q > 2")

    @property
    def is_zero(self) -> bool:
        return self.kind == "Zero" or self.amplitude == 0.0

    @property
    def is_static(self) -> bool:
        return self.time_dependence == "static"

    def modulation(self, t: float) -> float:
        if self.is_static:
            return 1.0
        return float(np.cos(2.0 * np.pi * self.frequency * t))

    def modulation_rate(self, t: float) -> float:
        if self.is_static:
            return 0.0
        w = 2.0 * np.pi * self.frequency
        return float(-w * np.sin(w * t))


def _periodic_offsets(grid: Grid, center) -> tuple[np.ndarray, np.ndarray]:
    X1, X2 = grid.mesh()
    L = grid.length
    d1 = (X1 - center[0] + L / 2) % L - L / 2
    d2 = (X2 - center[1] + L / 2) % L - L / 2
    return d1, d2


def _random_synthesis(grid: Grid, seed: int, amplitude_law, ncomp: int = 4) -> np.ndarray:
    """Real fields with prescribed spectral amplitude and seeded uniform phases."""
    m1, m2 = grid.mode_index
    k = np.sqrt((m1**2 + m2**2).astype(float)) * (2.0 * np.pi / grid.length)
    amp = amplitude_law(k)
    amp[0, 0] = 0.0
    # Nyquist rows/columns carry no clean real/imaginary split; drop them.
    amp[np.abs(m1[:, 0]) == grid.n // 2, :] = 0.0
    amp[:, -1] = 0.0
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = np.empty((ncomp,) + grid.shape)
    for c in range(ncomp):
        phase = rng.uniform(0.0, 2.0 * np.pi, size=grid.spectral_shape)
        coef = amp * np.exp(1j * phase)
        out[c] = np.fft.irfft2(coef, s=grid.shape)
    return out


def _normalize_rms(F: np.ndarray, amplitude: float) -> np.ndarray:
    rms = np.sqrt(np.mean(np.sum(F**2, axis=0)))
    return F if rms == 0 else F * (amplitude / rms)


def _shape_profile(spec: ForcingSpec, grid: Grid) -> np.ndarray:
    """Time-independent profile of F as a (2, 2, n, n) array."""
    geo = spec.geometry
    L = grid.length
    if spec.is_zero:
        return np.zeros((2, 2) + grid.shape)
    if spec.kind == "IndicatorStress":
        center = geo.get("center", (L / 2, L / 2))
        radius = geo.get("radius", L / 6)
        d1, d2 = _periodic_offsets(grid, center)
        ind = (d1**2 + d2**2 < radius**2).astype(float)
        return spec.amplitude * SHEAR[:, :, None, None] * ind
    if spec.kind == "LqStress":
        center = geo.get("center", (L / 2, L / 2))
        radius = geo.get("radius", L / 4)
        q = float(geo.get("q", 8.0))
        delta = float(geo.get("delta", 0.05))
        alpha = 2.0 * (1.0 - delta) / q
        d1, d2 = _periodic_offsets(grid, center)
        r = np.maximum(np.hypot(d1, d2), grid.h)
        # compactly cut so the profile is periodic-safe; singular at the center
        prof = np.where(r < radius, r ** (-alpha) - radius ** (-alpha), 0.0)
        return spec.amplitude * SHEAR[:, :, None, None] * prof
    if spec.kind == "HoelderRandomStress":
        gamma = spec.gamma
        F = _random_synthesis(
            grid, spec.seed, lambda k: np.divide(1.0, k ** (1.0 + gamma), out=np.zeros_like(k), where=k > 0)
        )
        return _normalize_rms(F, spec.amplitude).reshape((2, 2) + grid.shape)
    if spec.kind == "SmoothStress":
        cutoff = float(geo.get("cutoff", 4.0))
        F = _random_synthesis(grid, spec.seed, lambda k: ((k > 0) & (k <= cutoff)).astype(float))
        return _normalize_rms(F, spec.amplitude).reshape((2, 2) + grid.shape)
    raise AssertionError(spec.kind)


class ForcingField:
    """Evaluates F(x, t) for a spec on a grid, caching the spatial profile."""

    def __init__(self, spec: ForcingSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        self._profile = None

    @property
    def profile(self) -> np.ndarray:
        if self._profile is None:
            self._profile = _shape_profile(self.spec, self.grid)
            self._profile.setflags(write=False)
        return self._profile

    @property
    def is_zero(self) -> bool:
        return self.spec.is_zero

    @property
    def is_static(self) -> bool:
        return self.spec.is_static

    def modulation(self, t: float) -> float:
        return self.spec.modulation(t)

    def __call__(self, t: float) -> np.ndarray:
        m = self.spec.modulation(t)
        return self.profile if m == 1.0 else self.profile * m


class ModulatedForcing:
    """F(x, t) = m(t) * profile(x) for an arbitrary scalar modulation m.

    With ``modulation=None`` the stress is the static ``profile``.
    """

    is_zero = False

    def __init__(self, profile: np.ndarray, modulation=None):
        self.profile = np.asarray(profile, dtype=float)
        self._m = modulation

    @property
    def is_static(self) -> bool:
        return self._m is None

    def modulation(self, t: float) -> float:
        return 1.0 if self._m is None else float(self._m(t))

    def __call__(self, t: float) -> np.ndarray:
        return self.profile * self.modulation(t)


def generate(spec: ForcingSpec, grid: Grid, t: float = 0.0) -> np.ndarray:
    """Stress tensor samples of shape (2, 2, n, n); deterministic in (spec, grid, t)."""
    return np.array(ForcingField(spec, grid)(t))


def lq_norm(F_series: np.ndarray, q: float, grid: Grid, dt_weights: np.ndarray) -> float:
    """Space-time L^q norm of a tensor series (m, 2, 2, n, n) with time weights."""
    mod = np.sqrt(np.sum(F_series**2, axis=(1, 2)))
    per_slice = np.sum(mod**q, axis=(-2, -1)) * grid.cell_volume
    return float(np.sum(per_slice * dt_weights) ** (1.0 / q))


@dataclass
class EmbeddingReport:
    """Measured L^q norm against the M_{2,gamma} seminorm at gamma = 1 - 4/q."""

    q: float
    gamma: float
    lq_norm: float
    seminorm: float
    radii: tuple[float, ...]
    evaluated: int
    skipped: int

    @property
    def finite(self) -> bool:
        return self.evaluated > 0 and bool(np.isfinite(self.seminorm))


def verify_lq_embedding(F, q: float, grid: Grid, times=None, radii=None, tops=None,
                        max_time_levels=None, max_centers: int = 256) -> EmbeddingReport:
    """Measure both sides of the embedding L^q into M_{2,1-4/q} for stress samples.

    ``F`` is a static (2, 2, n, n) profile or a series (m, 2, 2, n, n) sampled at
    ``times``. A static profile is treated as constant on a unit time interval.
    ``radii`` defaults to the dyadic ladder from L/4 down to the smallest radius
    the resolution guard accepts on this grid.
    """
    from . import campanato as cp

    if not q > 4.0:
        raise ValueError(f"the embedding needs q > 4, got {q}")
    gamma = 1.0 - 4.0 / q
    F = np.asarray(F, dtype=float)
    if F.ndim == 4:
        field = cp.SpaceTimeField(grid, static=F)
        lq = lq_norm(F[None], q, grid, np.ones(1))
        tops = tuple(tops) if tops is not None else (1.0,)
    elif F.ndim == 5:
        if times is None or len(times) != F.shape[0]:
            raise ValueError("a stress series needs one time per sample")
        times = np.asarray(times, dtype=float)
        field = cp.SpaceTimeField(grid, levels=list(F), times=times)
        w = np.zeros(times.size)
        dt = np.diff(times)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        lq = lq_norm(F, q, grid, w)
        tops = tuple(tops) if tops is not None else (float(times[-1]),)
    else:
        raise ValueError(f"expected a (2, 2, n, n) profile or a series of them, got shape {F.shape}")
    if radii is None:
        radii = [float(r) for r in cp.dyadic_ladder(grid.length / 4, 16)
                 if cp.resolvable(field, cp.ParabolicCylinder((0.0, 0.0), tops[0], r), max_time_levels)]
        if not radii:
            raise ValueError("no radius of the ladder passes the resolution guard on these samples")
    family = cp.cylinder_family(grid, radii, tops, stride=0.5, max_centers=max_centers)
    semi = cp.m2gamma_seminorm(field, gamma, family, max_time_levels)
    return EmbeddingReport(q, gamma, lq, semi.value, tuple(radii), semi.evaluated, semi.skipped)
