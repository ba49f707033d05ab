"""Periodic pseudo-spectral toolkit on the 2-torus.

Fields are plain numpy arrays sampled on a uniform ``n x n`` grid with
``indexing='ij'`` (axis -2 is x1, axis -1 is x2):

* scalar field: shape ``(n, n)``
* vector field: shape ``(2, n, n)``
* tensor field: shape ``(2, 2, n, n)``, ``F[i, j]`` is the component F_ij

Spectral coefficients use the real-to-complex layout of ``rfft2`` over the last
two axes, so a coefficient array has trailing shape ``(n, n // 2 + 1)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

THREADS_ENV = "NSHOLDER_THREADS"


def fft_workers() -> int:
    """Number of FFT worker threads, capped by ``$NSHOLDER_THREADS``."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, length)^2``."""

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ValueError(f"grid resolution must be a power of two >= 16, got {n!r}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"domain length must be positive, got {self.length!r}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer mode numbers (m1, m2) broadcastable to the spectral shape."""
        m1 = np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)[:, None]
        m2 = np.arange(self.n // 2 + 1)[None, :]
        return m1, m2

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers used for first derivatives; Nyquist entries set to zero."""
        m1, m2 = self.mode_index
        scale = 2.0 * np.pi / self.length
        k1 = np.where(np.abs(m1) == self.n // 2, 0, m1) * scale
        k2 = np.where(m2 == self.n // 2, 0, m2) * scale
        return k1.astype(float), k2.astype(float)

    @cached_property
    def ksq(self) -> np.ndarray:
        """|k|^2 including Nyquist modes (symbol of -Laplacian)."""
        m1, m2 = self.mode_index
        scale = 2.0 * np.pi / self.length
        return (m1**2 + m2**2) * scale**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        m1, m2 = self.mode_index
        cut = self.n / 3.0
        return (np.abs(m1) <= cut) & (np.abs(m2) <= cut)

    @cached_property
    def spectral_weights(self) -> np.ndarray:
        """Multiplicity of each rfft column in the full spectrum (1 or 2)."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, :], self.spectral_shape)


def fft2(f: np.ndarray) -> np.ndarray:
    return scipy.fft.rfft2(f, axes=(-2, -1), workers=fft_workers())


def ifft2(fh: np.ndarray, grid: Grid) -> np.ndarray:
    return scipy.fft.irfft2(fh, s=grid.shape, axes=(-2, -1), workers=fft_workers())


def inner_spectral(ah: np.ndarray, bh: np.ndarray, grid: Grid) -> float:
    """Grid quadrature of ``a * b`` (summed over leading axes) from coefficients."""
    prod = (ah * np.conj(bh)).real * grid.spectral_weights
    return float(prod.sum() * grid.length**2 / grid.n**4)


def spectral_energy(fh: np.ndarray, grid: Grid) -> float:
    """Grid quadrature of ``|f|^2`` computed via Parseval."""
    return inner_spectral(fh, fh, grid)


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Rectangle-rule integral over the torus (summed over leading axes)."""
    return float(np.sum(f) * grid.cell_volume)


def dealias(fh: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero coefficients with any |mode index| above n/3 (2/3 rule)."""
    return fh * grid.dealias_mask


def gradient_hat(fh: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2 = grid.wavenumbers
    return np.stack([1j * k1 * fh, 1j * k2 * fh], axis=-3)


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; for input of shape (..., n, n) returns (..., 2, n, n)."""
    return ifft2(gradient_hat(fft2(f), grid), grid)


def divergence_hat(vh: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2 = grid.wavenumbers
    return 1j * k1 * vh[..., 0, :, :] + 1j * k2 * vh[..., 1, :, :]


def divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft2(divergence_hat(fft2(v), grid), grid)


def divergence_tensor_hat(Fh: np.ndarray, grid: Grid) -> np.ndarray:
    """(div F)_i = sum_j d_j F_ij in spectral space."""
    return divergence_hat(Fh, grid)


def divergence_tensor(F: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft2(divergence_tensor_hat(fft2(F), grid), grid)


def leray_hat(vh: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply I - k k^T / |k|^2; the mean (and Nyquist-only modes) pass through."""
    k1, k2 = grid.wavenumbers
    kk = k1**2 + k2**2
    inv = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
    kdotv = (k1 * vh[..., 0, :, :] + k2 * vh[..., 1, :, :]) * inv
    return np.stack([vh[..., 0, :, :] - k1 * kdotv, vh[..., 1, :, :] - k2 * kdotv], axis=-3)


def leray_project(v: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft2(leray_hat(fft2(v), grid), grid)


def quadratic_stress_hat(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased coefficients of u_i u_j as a (2, 2, ...) array."""
    prods = np.stack([u[0] * u[0], u[0] * u[1], u[1] * u[1]])
    ph = dealias(fft2(prods), grid)
    return np.stack([np.stack([ph[0], ph[1]]), np.stack([ph[1], ph[2]])])


def pressure_hat(uh: np.ndarray, Fh: np.ndarray | None, grid: Grid) -> np.ndarray:
    """Solve -Lap p = d_i d_j (u_i u_j + F_ij) with the zero mode pinned to 0.

    ``uh`` are velocity coefficients; ``Fh`` (optional) are already-dealiased
    stress coefficients.
    """
    u = ifft2(uh, grid)
    S = quadratic_stress_hat(u, grid)
    if Fh is not None:
        S = S + Fh
    k1, k2 = grid.wavenumbers
    k = (k1, k2)
    kk = k1**2 + k2**2
    inv = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
    # d_i d_j -> -k_i k_j, so |k|^2 p = -k_i k_j S_ij
    rhs = sum(k[i] * k[j] * S[i, j] for i in range(2) for j in range(2))
    return -rhs * inv


def pressure_from_state(u: np.ndarray, F: np.ndarray | None, grid: Grid) -> np.ndarray:
    Fh = None if F is None else dealias(fft2(F), grid)
    return ifft2(pressure_hat(fft2(u), Fh, grid), grid)
