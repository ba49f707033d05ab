import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsholder import campanato as cp
from nsholder.campanato import ParabolicCylinder as Q
from nsholder.campanato import SpaceTimeField
from nsholder.spectral import Grid

BOX = Grid(256, 4.0)


def linear(t, x1, x2):
    return np.stack([x1, 0 * x1])


class TestCylinder:
    def test_geometry(self):
        c = Q((1.0, 2.0), 3.0, 0.5)
        assert c.t_bottom == 2.75
        assert c.scaled(2.0) == Q((1.0, 2.0), 3.0, 1.0)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            Q((0.0, 0.0), 1.0, 0.0)


class TestFieldStorage:
    def test_exactly_one_source(self):
        with pytest.raises(ValueError):
            SpaceTimeField(BOX)
        with pytest.raises(ValueError):
            SpaceTimeField(BOX, static=np.zeros(BOX.shape), func=linear)

    def test_levels_need_increasing_times(self):
        with pytest.raises(ValueError):
            SpaceTimeField(BOX, levels=[0, 1], times=[1.0, 0.5])
        with pytest.raises(ValueError):
            SpaceTimeField(BOX, levels=[0, 1], times=[0.0])


class TestClosedForms:
    @pytest.mark.parametrize("r", [1.0, 0.5, 0.25, 0.125])
    def test_phi_of_linear_field(self, r):
        # int_Q x1^4 = R^2 * pi R^6 / 8, mean zero by symmetry; node error is O((h/R)^2)
        u = SpaceTimeField(BOX, func=linear)
        h = BOX.h
        assert cp.phi(u, Q((0.0, 0.0), 1.0, r)) == pytest.approx(math.sqrt(math.pi / 8) * r**4, rel=0.7 * (h / r) ** 2)

    def test_linear_quadrature_error_is_second_order(self):
        err = []
        for n in (256, 512):
            u = SpaceTimeField(Grid(n, 4.0), func=linear)
            err.append(cp.phi(u, Q((0.0, 0.0), 1.0, 0.25)) / (math.sqrt(math.pi / 8) / 256) - 1)
        assert err[0] / err[1] == pytest.approx(4.0, rel=0.1)

    def test_phi_of_linear_array_on_fine_grid(self):
        g = Grid(512)
        X1 = g.mesh()[0]
        u = SpaceTimeField(g, static=np.stack([X1 - math.pi, 0 * X1]))
        assert cp.phi(u, Q((math.pi, math.pi), 1.0, 1.0)) == pytest.approx(math.sqrt(math.pi / 8), rel=2e-4)

    def test_psi_of_constant_field(self):
        u = SpaceTimeField(BOX, func=lambda t, x1, x2: np.stack([3.0 + 0 * x1, 4.0 + 0 * x1]))
        assert cp.psi(u, Q((0.0, 0.0), 1.0, 0.5)) == pytest.approx(25 * math.sqrt(math.pi) * 0.25, rel=1e-3)
        assert cp.phi(u, Q((0.0, 0.0), 1.0, 0.5)) == pytest.approx(0.0, abs=1e-9)

    def test_pressure_oscillation(self):
        p = SpaceTimeField(BOX, func=lambda t, x1, x2: x1 + 5.0 * t)
        assert cp.d_pressure(p, Q((0.0, 0.0), 1.0, 1.0)) == pytest.approx(math.pi / 4, rel=2e-4)

    def test_theta(self):
        u = SpaceTimeField(BOX, func=linear)
        p = SpaceTimeField(BOX, func=lambda t, x1, x2: x1)
        expected = math.sqrt(math.pi / 8) / 16 + math.pi / 4
        assert cp.theta(u, p, Q((0.0, 0.0), 1.0, 1.0), 0.5) == pytest.approx(expected, rel=1e-3)
        with pytest.raises(ValueError):
            cp.theta(u, p, Q((0.0, 0.0), 1.0, 1.0), 1.0)

    def test_phi_of_time_linear_field(self):
        # u = (t, 0): int_Q (t - m)^4 = pi R^2 * R^10 / 80, integrated exactly by Gauss nodes
        u = SpaceTimeField(BOX, func=lambda t, x1, x2: np.stack([t + 0 * x1, 0 * x1]))
        r = 0.5
        assert cp.phi(u, Q((0.0, 0.0), 1.0, r)) == pytest.approx(math.sqrt(math.pi / 80) * r**6, rel=1e-3)

    def test_space_time_mean(self):
        u = SpaceTimeField(BOX, func=lambda t, x1, x2: np.stack([t + 0 * x1, 1 + x2]))
        m = cp.mean_space_time(u, Q((0.0, 0.0), 2.0, 0.5))
        assert m == pytest.approx([2.0 - 0.125, 1.0], abs=1e-9)

    def test_ball_oscillation_of_linear(self):
        f = SpaceTimeField(BOX, func=lambda t, x1, x2: x1)
        assert cp.ball_oscillation(f, (0.0, 0.0), 1.0) == pytest.approx(math.pi / 4, rel=2e-4)


class TestTimeRule:
    def _levels(self, times):
        g = Grid(64)
        return SpaceTimeField(g, levels=[np.full(g.shape, t) for t in times], times=times)

    @given(st.floats(0.3, 1.0), st.integers(8, 64))
    def test_weights_sum_to_measure(self, r, m):
        times = np.linspace(0.0, 2.0, 2 * m + 1)
        u = self._levels(times)
        t, w, idx = u._time_rule(Q((0.0, 0.0), 2.0, r), None)
        assert w.sum() == pytest.approx(r * r, rel=1e-12)
        assert t[-1] == 2.0 and np.all(w > 0)

    @given(st.integers(2, 16))
    def test_level_cap(self, cap):
        times = np.linspace(0.0, 2.0, 201)
        u = self._levels(times)
        t, w, idx = u._time_rule(Q((0.0, 0.0), 2.0, 1.0), cap)
        assert len(t) <= cap and t[-1] == 2.0
        assert w.sum() == pytest.approx(1.0)

    def test_right_endpoint_weights(self):
        # levels at 0, 0.1, ..., 1; the cylinder (0.19, 1] gets the level 0.2 with weight 0.01
        times = np.linspace(0.0, 1.0, 11)
        u = self._levels(times)
        t, w, idx = u._time_rule(Q((1.0, 1.0), 1.0, 0.9), None)
        assert np.allclose(t, times[2:]) and w[0] == pytest.approx(0.01) and np.allclose(w[1:], 0.1)
        expected = (0.01 * 0.2 + 0.1 * np.sum(times[3:])) / 0.81
        assert cp.mean_space_time(u, Q((1.0, 1.0), 1.0, 0.9))[()] == pytest.approx(expected)

    def test_resolution_errors(self):
        times = np.linspace(0.0, 1.0, 11)
        u = self._levels(times)
        with pytest.raises(cp.ResolutionError, match="snapshot"):
            cp.phi(u, Q((1.0, 1.0), 0.55, 0.6))
        with pytest.raises(cp.ResolutionError, match="precedes"):
            cp.phi(u, Q((1.0, 1.0), 0.5, 0.9))
        with pytest.raises(cp.ResolutionError, match="time levels"):
            cp.phi(u, Q((1.0, 1.0), 1.0, 0.5))
        with pytest.raises(cp.ResolutionError, match="nodes"):
            cp.phi(u, Q((1.0, 1.0), 1.0, 0.2))
        with pytest.raises(cp.ResolutionError, match="periodic box"):
            cp.phi(SpaceTimeField(Grid(32), static=np.zeros((32, 32))), Q((1.0, 1.0), 1.0, 3.2))
        assert not cp.resolvable(u, Q((1.0, 1.0), 1.0, 0.2))


class TestProperties:
    @given(st.integers(0, 10**6), st.integers(-40, 40), st.integers(-40, 40))
    def test_shift_invariance(self, seed, s1, s2):
        g = Grid(64)
        f = np.random.default_rng(seed).standard_normal((2, 64, 64))
        a = SpaceTimeField(g, static=f)
        b = SpaceTimeField(g, static=np.roll(f, (s1, s2), axis=(-2, -1)))
        x0 = (10 * g.h, 20 * g.h)
        y0 = ((10 + s1) * g.h, (20 + s2) * g.h)
        assert cp.phi(a, Q(x0, 1.0, 0.6)) == pytest.approx(cp.phi(b, Q(y0, 1.0, 0.6)), rel=1e-12)

    @given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
    def test_mean_is_near_optimal_center(self, seed, a1, a2):
        # int |u - (u)_Q|^4 <= 16 int |u - a|^4 for every constant a
        g = Grid(64)
        u = SpaceTimeField(g, static=np.random.default_rng(seed).standard_normal((2, 64, 64)))
        cyl = Q((2.0, 2.0), 1.0, 0.7)
        assert cp.quartic_oscillation(u, cyl) <= 16 * cp.quartic_oscillation_about(u, cyl, [a1, a2])

    @given(st.integers(0, 10**6), st.floats(0.3, 0.7), st.floats(1.05, 2.0))
    def test_psi_is_monotone_in_radius(self, seed, r, factor):
        g = Grid(64)
        u = SpaceTimeField(g, static=np.random.default_rng(seed).standard_normal((2, 64, 64)))
        assert cp.psi(u, Q((3.0, 3.0), 1.0, r)) <= cp.psi(u, Q((3.0, 3.0), 1.0, r * factor))

    @given(st.floats(0.05, 2.0))
    def test_coverage_weights_give_disk_area(self, r):
        di, dj, w = cp._disk_stencil(256, 4.0, r)
        assert w.sum() == pytest.approx(math.pi * r * r, rel=1e-3)


class TestSeminorm:
    def test_constant_forcing_is_zero(self):
        F = SpaceTimeField(BOX, func=lambda t, x1, x2: 2.0 + 0 * x1)
        fam = [Q((0.0, 0.0), 1.0, r) for r in (1.0, 0.5)]
        assert cp.m2gamma_seminorm(F, 0.5, fam).value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 0.5])
    def test_linear_forcing(self, gamma):
        # rms oscillation of x1 over a disk is R/2, so the seminorm term is R^(2-gamma)/2
        F = SpaceTimeField(BOX, func=lambda t, x1, x2: x1)
        fam = [Q((0.0, 0.0), 1.0, r) for r in (1.0, 0.5, 0.01)]
        res = cp.m2gamma_seminorm(F, gamma, fam)
        assert res.value == pytest.approx(0.5, rel=1e-3)
        assert res.cylinder.r == 1.0 and res.evaluated == 2 and res.skipped == 1

    def test_empty_family(self):
        with pytest.raises(ValueError):
            cp.m2gamma_seminorm(SpaceTimeField(BOX, func=linear), 0.5, [])

    def test_family_size(self):
        g = Grid(64)
        fam = cp.cylinder_family(g, [g.length / 4], [1.0, 2.0], stride=0.5)
        assert len(fam) == 2 * 8 * 8
        assert len(cp.cylinder_family(g, [0.2], [1.0], max_centers=10)) == 10


class TestDecayFit:
    @given(st.floats(0.5, 6.0), st.floats(-5, 5))
    def test_exact_power_law(self, slope, logc):
        r = cp.dyadic_ladder(1.0, 6)
        fit = cp.fit_decay_exponent(r, np.exp(logc) * r**slope)
        assert abs(fit.slope - slope) <= 1e-10
        assert fit.halfwidth < 1e-6

    @pytest.mark.parametrize("slope,hw,gamma,flag", [(3.0, 0.1, 0.5, ""), (4.0, 0.0, 1.0, "clipped_high"),
                                                     (1.5, 0.0, 0.0, "clipped_low"),
                                                     (3.95, 0.06, 1.0, "saturated_high"),
                                                     (2.05, 0.06, 0.0, "saturated_low"),
                                                     (2.8, 1.5, 0.4, "")])
    def test_gamma_mapping(self, slope, hw, gamma, flag):
        assert cp.gamma_from_slope(slope, hw) == (pytest.approx(gamma), flag)

    def test_linear_field_saturates(self):
        u = SpaceTimeField(Grid(512, 4.0), func=linear)
        radii = cp.dyadic_ladder(1.0, 5)
        vals = [cp.phi(u, Q((0.0, 0.0), 1.0, r)) for r in radii]
        fit = cp.fit_decay_exponent(radii, vals)
        assert fit.slope == pytest.approx(4.0, abs=0.01) and fit.gamma_est == 1.0
        assert fit.flag == "saturated_high"

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_lacunary_field(self, seed):
        from nsholder.analysis import lacunary_field
        g = Grid(512)
        u = SpaceTimeField(g, static=lacunary_field(g, 0.5, terms=8, seed=seed))
        centers = [((i + 0.5) * g.length / 8, (j + 0.5) * g.length / 8) for i in range(8) for j in range(8)]
        radii = cp.dyadic_ladder(1.0, 5)
        vals = np.array([[cp.phi(u, Q(c, 1.0, r)) for r in radii] for c in centers])
        assert 2.85 <= cp.fit_decay_exponent(radii, vals.mean(axis=0)).slope <= 3.15
        assert 0.35 <= np.median([cp.fit_decay_exponent(radii, v).gamma_est for v in vals]) <= 0.65

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            cp.fit_decay_exponent([1, 0.5, 0.25, 0.125], [1.0, 0.5, 0.0, -1.0])

    def test_curvature_refit(self):
        r = cp.dyadic_ladder(1.0, 8)
        x = np.log(r)
        v = np.exp(3.0 * x + 0.4 * x**2)
        fit = cp.fit_decay_exponent(r, v)
        assert fit.n_points == 6 and np.isfinite(fit.window_sensitivity)
        assert cp.fit_decay_exponent(r, v, detect_curvature=False).n_points == 8

    def test_ladder(self):
        assert np.allclose(cp.dyadic_ladder(2.0, 3), [2.0, 1.0, 0.5])
        assert np.allclose(cp.dyadic_ladder(1.0, 3, 1 / math.sqrt(2)), [1, 2**-0.5, 0.5])


class TestRadiusSelection:
    @pytest.mark.parametrize("c0", [0.5, 2.0])
    def test_constant_field(self, c0):
        # psi(R) = c0^2 sqrt(pi) R^2 < tau^4 iff R < (tau^4 / (c0^2 sqrt(pi)))^(1/2)
        tau = 0.5
        g = Grid(512)
        u = SpaceTimeField(g, static=np.stack([np.full(g.shape, c0), np.zeros(g.shape)]))
        sel = cp.select_r0(u, [(1.0, 1.0)], [1.0], tau, r_max=1.0, depth=10)
        bound = math.sqrt(tau**4 / (c0**2 * math.sqrt(math.pi)))
        assert sel.ok and bound / 2 <= sel.radius < bound

    def test_unresolved(self):
        g = Grid(32)
        u = SpaceTimeField(g, static=np.full((2, 32, 32), 10.0))
        sel = cp.select_r0(u, [(1.0, 1.0)], [1.0], 0.5, r_max=1.0, depth=4)
        assert not sel.ok and "unresolved" in sel.reason


class TestReport:
    def test_linear_report(self):
        u = SpaceTimeField(BOX, func=linear)
        rep = cp.campanato_report(u, None, [(0.0, 0.0), (1.0, 0.0)], [1.0], cp.dyadic_ladder(1.0, 5))
        assert len(rep.rows) == 10 and rep.unresolved == 0
        assert np.allclose(rep.gamma_estimates(), 1.0)
        table = rep.table()
        assert len(table) == 12 and all(len(row) == len(cp.CAMPANATO_COLUMNS) for row in table)
        assert rep.summary()["gamma_est"]["median"] == 1.0

    def test_zero_field_has_undefined_exponent(self):
        u = SpaceTimeField(BOX, func=lambda t, x1, x2: np.zeros((2,) + np.shape(x1)))
        rep = cp.campanato_report(u, None, [(0.0, 0.0)], [1.0], cp.dyadic_ladder(1.0, 5))
        assert rep.summary()["flag"] == "undefined" and rep.fits[0].fit is None
