"""Quantitative decay iteration for the functional Theta and its bound constants.

With theta_ = tau^2, gamma1 = (1 + gamma)/2 and rho_0 = R0/tau, the one-step
inequality

    Theta_{k+1} <= theta_^(1+gamma1) Theta_k + c M theta_^(1+gamma) rho_k^(2+2gamma),
    rho_k = theta_^k rho_0,

is iterated exactly (brute force) and compared with the closed-form envelope
beta^k (Theta_0 + c1 M R0^(2+2gamma)), beta = theta_^(1+gamma). The constants
H, c17, H1, X and H2 below are the explicit values obtained by carrying
every step of the chain with the measured constant ``c`` and, where a step
compares means over nested cylinders, the factor 4 = 16^(1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import campanato as cp

TAU_MAX = 0.9
MEAN_COMPARISON = 4.0


def tau_from_gamma(c: float, gamma: float) -> float:
    """Largest tau with c * tau^(1 - gamma) <= 1/2, capped at TAU_MAX."""
    if not c > 0:
        raise ValueError("c must be positive")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if c <= 0.5:
        return TAU_MAX
    tau = (0.5 / c) ** (1.0 / (1.0 - gamma))
    return min(tau, TAU_MAX)


@dataclass(frozen=True)
class IterationParams:
    """Inputs of the iteration.

    ``theta0`` is Theta at the top radius R0/tau. The optional
    ``theta_r0`` (Theta at R0), ``mean_norm`` (|(u)_{z0,R0}|) and ``c_basic``
    (constant of the unabsorbed one-step estimate) enter only the improved
    constant H2; they default to ``theta0``, 0 and ``c``.
    """

    gamma: float
    c: float
    m: float
    r0: float
    tau: float
    theta0: float
    theta_r0: float | None = None
    mean_norm: float = 0.0
    c_basic: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.c < 0 or self.m < 0 or self.theta0 < 0 or self.mean_norm < 0:
            raise ValueError("c, m, theta0 and mean_norm must be nonnegative")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")

    @property
    def gamma1(self) -> float:
        return 0.5 * (1.0 + self.gamma)

    @property
    def vartheta(self) -> float:
        return self.tau**2

    @property
    def beta(self) -> float:
        return self.vartheta ** (1.0 + self.gamma)

    @property
    def admissible(self) -> bool:
        return self.c * self.tau ** (1.0 - self.gamma) <= 0.5 + 1e-12


@dataclass
class IterationResult:
    params: IterationParams
    theta: np.ndarray
    envelope: np.ndarray
    c1: float
    H: float
    c17: float
    H1: float
    H2: float
    alpha: float
    X: float
    flags: list[str] = field(default_factory=list)

    @property
    def radii(self) -> np.ndarray:
        """Radii vartheta^k R0 / tau at which theta[k] applies."""
        p = self.params
        return p.vartheta ** np.arange(self.theta.size) * p.r0 / p.tau

    @property
    def max_ratio(self) -> float:
        """max_k brute / envelope (<= 1 means the envelope dominates)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(self.envelope > 0, self.theta / self.envelope, np.where(self.theta > 0, np.inf, 0.0))
        return float(np.max(r))

    def summary(self) -> dict:
        p = self.params
        return {
            "gamma": p.gamma, "gamma1": p.gamma1, "tau": p.tau, "vartheta": p.vartheta, "c": p.c,
            "c_basic": p.c_basic if p.c_basic is not None else p.c, "M": p.m, "R0": p.r0,
            "theta0": p.theta0, "theta_r0": p.theta_r0 if p.theta_r0 is not None else p.theta0,
            "mean_norm": p.mean_norm, "c1": self.c1, "H": self.H, "c17": self.c17, "H1": self.H1,
            "H2": self.H2, "alpha": self.alpha, "beta": p.beta,
            "X": self.X, "admissible": p.admissible, "flags": list(self.flags),
        }


def iterate_theta(params: IterationParams, k_max: int = 64) -> IterationResult:
    p = params
    g, th = p.gamma, p.vartheta
    a = th ** (1.0 + p.gamma1)
    beta = p.beta
    rho0 = p.r0 / p.tau
    theta = np.empty(k_max + 1)
    theta[0] = p.theta0
    for k in range(k_max):
        rho = th**k * rho0
        theta[k + 1] = a * theta[k] + p.c * p.m * beta * rho ** (2.0 + 2.0 * g)
    c1 = p.c / (p.tau ** (2.0 + 2.0 * g) * (1.0 - beta))
    Y = p.theta0 + c1 * p.m * p.r0 ** (2.0 + 2.0 * g)
    envelope = beta ** np.arange(k_max + 1) * Y
    flags = [] if p.admissible else ["tau_inadmissible"]

    # first-pass Hoelder constant: Phi(rho) <= rho^(1+gamma) H
    H = MEAN_COMPARISON * Y / (th * p.r0) ** (1.0 + g)
    # drift of cylinder means: |(u)_rho - (u)_R0| <= c17 H^(1/2) rho^(-(1-gamma)/2)
    e = 0.5 * (1.0 - g)
    c17 = math.pi**-0.25 * (2.0 / (2.0**e - 1.0) + 2.0 ** (0.5 * (1.0 + g)))
    H1 = (math.sqrt(H) * (1.0 + math.pi**0.25 * c17) + math.pi**0.25 * p.r0**e * p.mean_norm) ** 2
    # improved step Theta(tau R) <= alpha Theta(R) + c (M + H H1) R^(2+2gamma)
    cb = p.c if p.c_basic is None else p.c_basic
    alpha = 2.0 * cb * p.tau**4
    step_beta = p.tau ** (2.0 + 2.0 * g)
    theta_r0 = p.theta0 if p.theta_r0 is None else p.theta_r0
    if alpha < step_beta:
        X = theta_r0 + cb * (p.m + H * H1) * p.r0 ** (2.0 + 2.0 * g) / (step_beta - alpha)
        H2 = MEAN_COMPARISON * max(X / (p.tau**2 * p.r0) ** (2.0 + 2.0 * g), p.theta0 / (p.tau * p.r0) ** (2.0 + 2.0 * g))
    else:
        X = H2 = math.inf
        flags.append("improved_step_not_contracting")
    return IterationResult(p, theta, envelope, c1, H, c17, H1, H2, alpha, X, flags)


def predict_holder_envelope(result: IterationResult, radii: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """First-pass bound rho^(1+gamma) H and improved bound rho^(2+2gamma) H2 on Phi."""
    g = result.params.gamma
    rho = np.asarray(radii, dtype=float)
    if result.H == 0:
        first = np.zeros_like(rho)
    else:
        first = rho ** (1.0 + g) * result.H
    improved = np.zeros_like(rho) if result.H2 == 0 else rho ** (2.0 + 2.0 * g) * result.H2
    return first, improved


# -- empirical one-step constants ------------------------------------------------------


@dataclass
class BasicEstimateRecord:
    """Measured terms and the smallest admissible constants on one cylinder."""

    cylinder: cp.ParabolicCylinder
    lhs: float
    rhs_basic: float
    rhs_absorbed: float
    c_basic: float
    c_absorbed: float
    mean_ratio: float
    status: str = "ok"


@dataclass
class BasicEstimateResult:
    records: list[BasicEstimateRecord]

    def _valid(self, name: str) -> np.ndarray:
        v = np.array([getattr(r, name) for r in self.records if r.status == "ok"], dtype=float)
        return v[np.isfinite(v)]

    @property
    def c_basic(self) -> float:
        v = self._valid("c_basic")
        return float(v.max()) if v.size else float("nan")

    @property
    def c_absorbed(self) -> float:
        v = self._valid("c_absorbed")
        return float(v.max()) if v.size else float("nan")

    @property
    def mean_ratio_max(self) -> float:
        v = self._valid("mean_ratio")
        return float(v.max()) if v.size else float("nan")

    def distribution(self, name: str = "c_basic") -> dict:
        v = self._valid(name)
        if v.size == 0:
            return {"count": 0}
        return {"count": int(v.size), "min": float(v.min()), "median": float(np.median(v)), "max": float(v.max())}

    @property
    def failures(self) -> int:
        return sum(r.status == "quadrature_failure" for r in self.records)


def _ratio(lhs: float, rhs: float) -> tuple[float, str]:
    if rhs > 0:
        return lhs / rhs, "ok"
    if lhs > 0:
        return float("inf"), "quadrature_failure"
    return 0.0, "vacuous"


def check_basic_estimate(u: cp.SpaceTimeField, p: cp.SpaceTimeField, cylinders: Sequence[cp.ParabolicCylinder],
                         tau: float, gamma: float, m: float, max_time_levels=None) -> BasicEstimateResult:
    """Smallest constants for which the one-step estimates hold on each cylinder.

    ``c_basic`` makes Theta(tau R) <= c[(tau^4 + Psi(tau R)) Theta(R) + Psi(R) Phi(R) + M R^(2+2gamma)]
    hold; ``c_absorbed`` does the same for the absorbed form
    Theta(tau R) <= c[(tau^4 + Psi(R)) Theta(R/tau) + M R^(2+2gamma)], left as NaN when the
    cylinder of radius R/tau is not resolved. ``mean_ratio`` is Phi(tau R) / Phi(R).
    """
    records = []
    for cyl in cylinders:
        R = cyl.r
        small = cyl.scaled(tau)
        phi_R = cp.phi(u, cyl, max_time_levels)
        psi_R = cp.psi(u, cyl, max_time_levels)
        psi_t = cp.psi(u, small, max_time_levels)
        th_R = cp.theta(u, p, cyl, tau, max_time_levels)
        lhs = cp.theta(u, p, small, tau, max_time_levels)
        force = m * R ** (2.0 + 2.0 * gamma)
        rhs_b = (tau**4 + psi_t) * th_R + psi_R * phi_R + force
        c_b, status = _ratio(lhs, rhs_b)
        try:
            th_big = cp.theta(u, p, cyl.scaled(1.0 / tau), tau, max_time_levels)
            rhs_a = (tau**4 + psi_R) * th_big + force
            c_a = _ratio(lhs, rhs_a)[0]
        except cp.ResolutionError:
            rhs_a, c_a = float("nan"), float("nan")
        phi_t = cp.phi(u, small, max_time_levels)
        mr = phi_t / phi_R if phi_R > 0 else (0.0 if phi_t == 0 else float("inf"))
        records.append(BasicEstimateRecord(cyl, lhs, rhs_b, rhs_a, c_b, c_a, mr, status))
    return BasicEstimateResult(records)
