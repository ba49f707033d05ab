import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsholder import spectral as sp
from nsholder.spectral import Grid

from conftest import random_velocity


class TestGrid:
    @pytest.mark.parametrize("n", [0, 15, 48, 100])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ValueError):
            Grid(n)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            Grid(32, -1.0)

    def test_geometry(self):
        g = Grid(32, 4.0)
        assert g.h == 0.125
        assert g.shape == (32, 32)
        assert g.spectral_shape == (32, 17)
        assert g.x[-1] == pytest.approx(4.0 - 0.125)

    def test_nyquist_derivative_zeroed(self):
        g = Grid(16)
        k1, k2 = g.wavenumbers
        assert k1[8, 0] == 0.0 and k2[0, 8] == 0.0
        assert g.ksq[8, 0] == 64.0

    def test_dealias_mask_two_thirds(self):
        g = Grid(64)
        kept = g.dealias_mask
        assert kept[21, 21] and not kept[22, 0] and not kept[0, 22]


class TestTransforms:
    @given(st.integers(0, 10**6))
    def test_round_trip(self, seed):
        g = Grid(32)
        f = np.random.default_rng(seed).standard_normal((2, 32, 32))
        assert np.allclose(sp.ifft2(sp.fft2(f), g), f, atol=1e-12)

    @given(st.integers(0, 10**6))
    def test_parseval(self, seed):
        g = Grid(32, 3.0)
        f = np.random.default_rng(seed).standard_normal((32, 32))
        assert sp.spectral_energy(sp.fft2(f), g) == pytest.approx(sp.integrate(f**2, g), rel=1e-12)

    def test_integrate_constant(self):
        g = Grid(16, 2.0)
        assert sp.integrate(np.ones(g.shape), g) == pytest.approx(4.0)

    def test_gradient_of_trig_is_exact(self):
        g = Grid(32)
        X1, X2 = g.mesh()
        f = np.sin(2 * X1) * np.cos(3 * X2)
        grad = sp.gradient(f, g)
        assert np.allclose(grad[0], 2 * np.cos(2 * X1) * np.cos(3 * X2), atol=1e-12)
        assert np.allclose(grad[1], -3 * np.sin(2 * X1) * np.sin(3 * X2), atol=1e-12)

    def test_tensor_divergence(self):
        g = Grid(32)
        X1, X2 = g.mesh()
        F = np.zeros((2, 2) + g.shape)
        F[0, 1] = np.sin(X2)
        F[1, 0] = np.sin(X1)
        div = sp.divergence_tensor(F, g)
        assert np.allclose(div[0], np.cos(X2), atol=1e-12)
        assert np.allclose(div[1], np.cos(X1), atol=1e-12)


class TestLeray:
    @given(st.integers(0, 10**6))
    def test_projection_is_divergence_free(self, seed):
        g = Grid(32)
        v = random_velocity(g, seed)
        w = sp.leray_project(v, g)
        assert np.max(np.abs(sp.divergence(w, g))) < 1e-10 * (1 + np.max(np.abs(v)))

    @given(st.integers(0, 10**6))
    def test_idempotent(self, seed):
        g = Grid(32)
        w = sp.leray_project(random_velocity(g, seed), g)
        assert np.allclose(sp.leray_project(w, g), w, atol=1e-12)

    def test_gradient_fields_are_annihilated(self):
        g = Grid(32)
        X1, X2 = g.mesh()
        grad = sp.gradient(np.cos(X1) * np.sin(2 * X2), g)
        assert np.max(np.abs(sp.leray_project(grad, g))) < 1e-12


class TestPressure:
    def test_taylor_green_pressure(self):
        # steady TG vortex: p = (cos 2x1 + cos 2x2) / 4 with zero mean
        g = Grid(32)
        X1, X2 = g.mesh()
        u = np.stack([np.sin(X1) * np.cos(X2), -np.cos(X1) * np.sin(X2)])
        p = sp.pressure_from_state(u, None, g)
        assert np.allclose(p, 0.25 * (np.cos(2 * X1) + np.cos(2 * X2)), atol=1e-12)

    def test_stress_pressure(self):
        # -Lap p = d1 d1 F11 with F11 = cos x1 gives p = -cos x1
        g = Grid(32)
        X1 = g.mesh()[0]
        F = np.zeros((2, 2) + g.shape)
        F[0, 0] = np.cos(X1)
        p = sp.pressure_from_state(np.zeros((2,) + g.shape), F, g)
        assert np.allclose(p, -np.cos(X1), atol=1e-12)

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv(sp.THREADS_ENV, "3")
        assert sp.fft_workers() == 3
