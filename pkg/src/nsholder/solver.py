"""Integrating-factor pseudo-spectral integrator for forced 2D Navier-Stokes.

Solves, with unit viscosity on the periodic square,

    d_t u + div(u (x) u) - Lap u + grad p = -div F,    div u = 0.

Diffusion is integrated exactly per mode. The projected nonlinear and forcing
terms are advanced explicitly by a second-order two-stage exponential rule
(``etdrk2``, default) or by Heun's rule in the integrating-factor frame
(``ifrk2``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import spectral as sp
from .forcing import ForcingField, ForcingSpec
from .spectral import Grid

log = logging.getLogger(__name__)

INITIAL_KINDS = ("TaylorGreen", "RandomDivFree", "Zero", "SingleMode")


class StepRejected(RuntimeError):
    """The proposed step violates the CFL bound; the caller should shrink dt."""

    def __init__(self, dt: float, dt_max: float, umax: float):
        super().__init__(f"CFL violation: dt={dt:.3e} exceeds 0.5*h/max|u|={dt_max:.3e} (max|u|={umax:.3e})")
        self.dt = dt
        self.dt_max = dt_max
        self.umax = umax


class SolverAbort(RuntimeError):
    """Integration stopped (non-finite state or unrecoverable CFL failure)."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None, last_valid: int | None = None):
        super().__init__(message)
        self.trajectory = trajectory
        self.last_valid = last_valid


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "Zero"
    seed: int = 0
    spectrum_slope: float = 3.0
    amplitude: float = 1.0
    kmax: float = 4.0
    k: tuple[int, int] = (1, 0)

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}; expected one of {INITIAL_KINDS}")

    def realize(self, grid: Grid) -> np.ndarray:
        X1, X2 = grid.mesh()
        a = self.amplitude
        if self.kind == "Zero":
            return np.zeros((2,) + grid.shape)
        if self.kind == "TaylorGreen":
            return a * taylor_green(grid, 0.0)
        if self.kind == "SingleMode":
            # streamfunction sin(k.x) gives the divergence-free mode (k2, -k1) cos(k.x)
            k1, k2 = self.k
            s = 2.0 * np.pi / grid.length
            phase = s * (k1 * X1 + k2 * X2)
            norm = math.hypot(k1, k2)
            return a * np.stack([k2 * np.cos(phase), -k1 * np.cos(phase)]) / norm
        # RandomDivFree: random streamfunction spectrum |k|^-slope below kmax
        m1, m2 = grid.mode_index
        kmag = np.sqrt((m1**2 + m2**2).astype(float)) * (2.0 * np.pi / grid.length)
        band = (kmag > 0) & (kmag <= self.kmax)
        amp = np.zeros_like(kmag)
        amp[band] = kmag[band] ** (-self.spectrum_slope)
        amp[:, -1] = 0.0
        amp[np.abs(m1[:, 0]) == grid.n // 2, :] = 0.0
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        psih = amp * np.exp(1j * rng.uniform(0, 2 * np.pi, grid.spectral_shape))
        psih[0, 0] = 0.0
        # skew gradient of psi: u = (d2 psi, -d1 psi)
        k1, k2 = grid.wavenumbers
        uh = np.stack([1j * k2 * psih, -1j * k1 * psih])
        u = sp.ifft2(sp.dealias(uh, grid), grid)
        u = sp.leray_project(u, grid)
        rms = np.sqrt(np.mean(np.sum(u**2, axis=0)))
        return u * (a / rms) if rms > 0 else u


def taylor_green(grid: Grid, t: float) -> np.ndarray:
    """Exact decaying Taylor-Green velocity at time t (unit viscosity, 2pi box)."""
    X1, X2 = grid.mesh()
    s = 2.0 * np.pi / grid.length
    decay = np.exp(-2.0 * s**2 * t)
    return decay * np.stack([np.sin(s * X1) * np.cos(s * X2), -np.cos(s * X1) * np.sin(s * X2)])


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration settings.

    ``output_every`` is the snapshot cadence in steps. When ``dense_from`` is
    set, snapshots at or after that time use the finer cadence ``dense_every``.
    ``projection=False`` together with ``nonlinearity='off'`` gives the plain
    vector heat equation used by the energy-estimate checks.
    """

    grid: Grid
    dt: float = 1e-3
    t_end: float = 1.0
    viscosity: float = 1.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    initial: InitialCondition = field(default_factory=InitialCondition)
    output_every: int = 10
    nonlinearity: str = "on"
    projection: bool = True
    dense_from: float | None = None
    dense_every: int = 1
    max_halvings: int = 8
    scheme: str = "etdrk2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.viscosity != 1.0:
            raise ValueError("viscosity is fixed at 1")
        if self.nonlinearity not in ("on", "off"):
            raise ValueError("nonlinearity must be 'on' or 'off'")
        if self.scheme not in ("etdrk2", "ifrk2"):
            raise ValueError("scheme must be 'etdrk2' or 'ifrk2'")
        if self.output_every < 1 or self.dense_every < 1:
            raise ValueError("snapshot cadences must be >= 1")


@dataclass
class Snapshot:
    t: float
    u: np.ndarray
    p: np.ndarray


ENERGY_COLUMNS = ("t", "energy", "dissipation", "forcing_work", "dissipation_avg", "forcing_work_avg", "dt")


@dataclass
class Trajectory:
    """Time-ordered snapshots plus a per-step energy log.

    ``energy_log`` rows hold ENERGY_COLUMNS: endpoint values of the kinetic
    energy 1/2|u|^2, the dissipation |grad u|^2 and the forcing work
    int F:grad u, followed by their averages over the step that ends at ``t``.
    """

    config: SolverConfig
    snapshots: list[Snapshot] = field(default_factory=list)
    energy_log: np.ndarray = field(default_factory=lambda: np.empty((0, len(ENERGY_COLUMNS))))

    @property
    def grid(self) -> Grid:
        return self.config.grid

    @property
    def times(self) -> np.ndarray:
        stored = getattr(self.snapshots, "times", None)
        return stored if stored is not None else np.array([s.t for s in self.snapshots])


def _phi(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """e^{-z}, (1 - e^{-z})/z and (e^{-z} - 1 + z)/z^2 with series near z = 0."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    e = np.exp(-z)
    phi1 = np.where(small, 1 - z / 2 + z**2 / 6 - z**3 / 24, -np.expm1(-zs) / zs)
    phi2 = np.where(small, 0.5 - z / 6 + z**2 / 24 - z**3 / 120, (np.expm1(-zs) + zs) / zs**2)
    return e, phi1, phi2


GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass
class _StepData:
    """Stage values of one step, enough to rebuild the scheme's dense output."""

    t0: float
    dt: float
    uh0: np.ndarray
    n0: np.ndarray
    n1: np.ndarray


class NavierStokesSolver:
    """Stateful stepper bound to one configuration."""

    def __init__(self, config: SolverConfig, forcing: Callable[[float], np.ndarray] | None = None):
        self.config = config
        self.grid = config.grid
        if forcing is None:
            forcing = ForcingField(config.forcing, self.grid)
        self.forcing = forcing
        self._zero = getattr(forcing, "is_zero", False)
        self._cache: dict = {}
        self._timed: dict = {}

    # -- forcing -------------------------------------------------------------
    def stress_hat(self, t: float) -> np.ndarray | None:
        """Dealiased coefficients of F(t), or None for zero forcing."""
        return self._forcing_terms(t)[0]

    def _forcing_terms(self, t: float):
        if self._zero:
            return None, None
        if hasattr(self.forcing, "profile"):
            if "profile" not in self._cache:
                Fh = sp.dealias(sp.fft2(self.forcing.profile), self.grid)
                self._cache["profile"] = (Fh, -sp.divergence_tensor_hat(Fh, self.grid))
            Fh, gh = self._cache["profile"]
            m = self.forcing.modulation(t)
            return (Fh, gh) if m == 1.0 else (Fh * m, gh * m)
        key = float(t)
        if key not in self._timed:
            if len(self._timed) > 16:
                self._timed.clear()
            Fh = sp.dealias(sp.fft2(self.forcing(t)), self.grid)
            self._timed[key] = (Fh, -sp.divergence_tensor_hat(Fh, self.grid))
        return self._timed[key]

    # -- right-hand side -----------------------------------------------------
    def rhs(self, uh: np.ndarray, t: float, u: np.ndarray | None = None) -> np.ndarray:
        """Projected explicit part: -P div(u u) - P div F."""
        grid = self.grid
        out = np.zeros_like(uh)
        if self.config.nonlinearity == "on":
            if u is None:
                u = sp.ifft2(uh, grid)
            S = sp.quadratic_stress_hat(u, grid)
            out -= sp.divergence_hat(S, grid)
        _, gh = self._forcing_terms(t)
        if gh is not None:
            out += gh
        if self.config.projection:
            out = sp.leray_hat(out, grid)
        return out

    def _budget(self, uh: np.ndarray, t: float) -> tuple[float, float, float]:
        grid = self.grid
        energy = 0.5 * sp.spectral_energy(uh, grid)
        dissipation = sp.inner_spectral(uh * grid.ksq, uh, grid)
        _, gh = self._forcing_terms(t)
        work = 0.0 if gh is None else sp.inner_spectral(gh, uh, grid)
        return energy, dissipation, work

    def _dense(self, data: _StepData, s: float) -> np.ndarray:
        """State at t0 + s along the scheme's own interpolant."""
        h = data.dt
        key = ("dense", self.config.scheme, h, s)
        if key not in self._cache:
            lam = self.grid.ksq
            if self.config.scheme == "etdrk2":
                e, p1, p2 = _phi(lam * s)
                c0, c1 = s * p1 - (s * s / h) * p2, (s * s / h) * p2
            else:
                # Heun in the integrating-factor frame: quadratic v(s), u = e^{-lam s} v
                e = np.exp(-lam * s)
                c0, c1 = e * (s - s * s / (2 * h)), (s * s / (2 * h)) * np.exp(-lam * (s - h))
            self._cache[key] = (e, c0, c1)
        e, c0, c1 = self._cache[key]
        return e * data.uh0 + c0 * data.n0 + c1 * data.n1

    def _step_averages(self, data: _StepData) -> tuple[float, float]:
        """Step averages of dissipation and forcing work.

        Both integrands are evaluated along the scheme's dense output with
        5-point Gauss-Legendre quadrature in time.
        """
        grid = self.grid
        h = data.dt
        diss = work = 0.0
        for x, w in zip(GAUSS_NODES, GAUSS_WEIGHTS):
            s = 0.5 * h * (x + 1.0)
            uh = self._dense(data, s)
            diss += 0.5 * w * sp.inner_spectral(uh * grid.ksq, uh, grid)
            _, gh = self._forcing_terms(data.t0 + s)
            if gh is not None:
                work += 0.5 * w * sp.inner_spectral(gh, uh, grid)
        return diss, work

    # -- stepping ------------------------------------------------------------
    def advance(self, uh: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, _StepData]:
        """One step of the configured two-stage scheme; raises StepRejected on CFL failure."""
        grid = self.grid
        u = sp.ifft2(uh, grid)
        if self.config.nonlinearity == "on":
            umax = float(np.sqrt(np.max(np.sum(u**2, axis=0))))
            dt_max = 0.5 * grid.h / umax if umax > 0 else np.inf
            if dt > dt_max:
                raise StepRejected(dt, dt_max, umax)
        n0 = self.rhs(uh, t, u)
        if self.config.scheme == "etdrk2":
            e, p1, p2 = self._phis(dt)
            ustar = e * uh + dt * p1 * n0
            n1 = self.rhs(ustar, t + dt)
            new = ustar + dt * p2 * (n1 - n0)
        else:
            e = np.exp(-grid.ksq * dt)
            ustar = e * (uh + dt * n0)
            n1 = self.rhs(ustar, t + dt)
            new = e * (uh + 0.5 * dt * n0) + 0.5 * dt * n1
        return new, _StepData(t, dt, uh, n0, n1)

    def _phis(self, dt: float):
        key = ("phi", dt)
        if key not in self._cache:
            self._cache[key] = _phi(self.grid.ksq * dt)
        return self._cache[key]

    def step_hat(self, uh: np.ndarray, t: float, dt: float) -> np.ndarray:
        return self.advance(uh, t, dt)[0]

    def snapshot(self, uh: np.ndarray, t: float) -> Snapshot:
        grid = self.grid
        u = sp.ifft2(uh, grid)
        if self.config.projection:
            p = sp.ifft2(sp.pressure_hat(uh, self.stress_hat(t), grid), grid)
        else:
            p = np.zeros(grid.shape)
        return Snapshot(t=float(t), u=u, p=p)


def step(state: Snapshot, config: SolverConfig, dt: float | None = None) -> Snapshot:
    """Advance one snapshot by one step (raises StepRejected on CFL violation)."""
    solver = NavierStokesSolver(config)
    dt = config.dt if dt is None else dt
    uh = solver.step_hat(sp.fft2(state.u), state.t, dt)
    return solver.snapshot(uh, state.t + dt)


SnapshotSink = Callable[[Snapshot], object]


def run(
    config: SolverConfig,
    forcing: Callable[[float], np.ndarray] | None = None,
    sink: SnapshotSink | None = None,
    keep: bool = True,
) -> Trajectory:
    """Integrate from the initial condition to ``t_end``.

    Snapshots go to ``sink`` (e.g. a disk writer) and, when ``keep`` is true,
    into the returned trajectory. On failure ``SolverAbort`` carries the
    partial trajectory and the index of the last valid snapshot.
    """
    grid = config.grid
    solver = NavierStokesSolver(config, forcing)
    u0 = config.initial.realize(grid)
    uh = sp.fft2(u0)
    traj = Trajectory(config=config)
    emitted = 0

    def emit(uh, t):
        nonlocal emitted
        snap = solver.snapshot(uh, t)
        if sink is not None:
            sink(snap)
        if keep:
            traj.snapshots.append(snap)
        emitted += 1

    t = 0.0
    e, d, w = solver._budget(uh, t)
    rows = [(t, e, d, w, np.nan, np.nan, 0.0)]
    emit(uh, t)
    nsteps = int(round(config.t_end / config.dt))
    if nsteps * config.dt < config.t_end - 1e-12 * max(1.0, config.t_end):
        nsteps += 1
    since_output = 0
    for n in range(1, nsteps + 1):
        t_target = min(n * config.dt, config.t_end)
        macro = t_target - t
        sub = 1
        while True:
            try:
                trial = uh
                tt, new_rows = t, []
                h = macro / sub
                for _ in range(sub):
                    nxt, data = solver.advance(trial, tt, h)
                    da, wa = solver._step_averages(data)
                    trial, tt = nxt, tt + h
                    e, d, w = solver._budget(trial, tt)
                    new_rows.append((tt, e, d, w, da, wa, h))
                break
            except StepRejected as exc:
                sub *= 2
                if sub > 2**config.max_halvings:
                    traj.energy_log = np.array(rows)
                    raise SolverAbort(str(exc), traj, emitted - 1) from exc
                log.info("step %d rejected (%s); using %d substeps", n, exc, sub)
        if not np.all(np.isfinite(trial)):
            traj.energy_log = np.array(rows)
            raise SolverAbort(f"non-finite state at t={t_target:.6g}", traj, emitted - 1)
        uh, t = trial, t_target
        rows.extend(new_rows)
        since_output += 1
        dense = config.dense_from is not None and t >= config.dense_from - 1e-12
        cadence = config.dense_every if dense else config.output_every
        if since_output >= cadence or n == nsteps:
            emit(uh, t)
            since_output = 0
    traj.energy_log = np.array(rows)
    return traj


def energy_residuals(trajectory: Trajectory) -> np.ndarray:
    """Per-step |dE/dt + eps_avg - W_avg| / (1 + |E|)."""
    log_ = trajectory.energy_log
    if log_.shape[0] < 2:
        raise ValueError("energy audit needs at least one step")
    t, E = log_[:, 0], log_[:, 1]
    dE = np.diff(E) / np.diff(t)
    res = dE + log_[1:, 4] - log_[1:, 5]
    return np.abs(res) / (1.0 + np.abs(E[1:]))


def energy_audit(trajectory: Trajectory) -> float:
    """Maximum relative per-step residual of the energy identity."""
    return float(np.max(energy_residuals(trajectory)))


def energy_inequality(trajectory: Trajectory) -> np.ndarray:
    """Slack of E(t) + int eps <= E(0) + int W at every logged step, relative to 1 + E(0)."""
    log_ = trajectory.energy_log
    steps = log_[1:, 6]
    diss = np.concatenate([[0.0], np.cumsum(log_[1:, 4] * steps)])
    work = np.concatenate([[0.0], np.cumsum(log_[1:, 5] * steps)])
    lhs = log_[:, 1] + diss
    rhs = log_[0, 1] + work
    return (lhs - rhs) / (1.0 + abs(log_[0, 1]))


def energy_envelope(trajectory: Trajectory, forcing: ForcingField | None = None) -> np.ndarray:
    """a priori bound |u(t)|^2 <= |a|^2 + int_0^t |F - mean F|^2 at each logged time."""
    grid = trajectory.grid
    if forcing is None:
        forcing = ForcingField(trajectory.config.forcing, grid)
    log_ = trajectory.energy_log
    t = log_[:, 0]
    a2 = 2.0 * log_[0, 1]
    if forcing.is_zero:
        return np.full_like(t, a2)
    if forcing.is_static:
        prof = forcing.profile
        osc = prof - prof.mean(axis=(-2, -1), keepdims=True)
        f2 = np.full_like(t, sp.integrate(osc**2, grid))
    else:
        f2 = np.array([sp.integrate((F - F.mean(axis=(-2, -1), keepdims=True)) ** 2, grid) for F in map(forcing, t)])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f2[1:] + f2[:-1]) * np.diff(t))])
    return a2 + cum


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)
