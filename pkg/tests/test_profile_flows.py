import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.optimize import brentq

from contact_spectral.model_spaces import PolarPoint, from_polar, to_polar
from contact_spectral.profile_flows import (
    Family,
    GLFamily,
    ProfileError,
    ProfileFlow,
    closed_form_flow,
    enumerate_translated_points_closed_form,
    flow_cartesian,
    flow_discrepancy,
    g_and_l_scan,
    g_value,
    inner_tube_iterate,
    l_value,
    make_profile,
)


def alpha(x, v):
    """dtau + (x dy - y dx)/2 on R^2 x S^1."""
    return v[..., 2] + 0.5 * (x[..., 0] * v[..., 1] - x[..., 1] * v[..., 0])


def jacobian_fd(fn, x, h=1e-6):
    cols = []
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


class TestMakeProfile:
    def test_zero(self):
        p = make_profile(0.0)
        s = np.linspace(0, 1.2, 50)
        assert np.all(p.f(s) == 0.0) and np.all(p.fprime(s) == 0.0)

    def test_strict_example_grid_oracle(self):
        p = make_profile(-0.5, 1.0, 0.1, "strict")
        s = np.linspace(0, 1, 10_001)[1:]
        assert np.all(2 * math.pi * s - p.fprime(s) > 0)
        assert p.verify()["ok"]

    def test_infeasible_cites_bound(self):
        with pytest.raises(ProfileError, match="feasibility bound"):
            make_profile(-4.0, 1.0, 0.1, "strict")

    def test_relaxed_allows_beyond_pi(self):
        p = make_profile(-4.0, 1.0, 0.1, "relaxed")
        assert p.family is Family.RELAXED and p.verify()["ok"]
        with pytest.raises(ProfileError):
            make_profile(-7.0, 1.0, 0.1, "relaxed")

    @pytest.mark.parametrize("r,eps", [(1.0, 0.5), (1.0, 0.0), (-1.0, 0.1)])
    def test_collar_geometry(self, r, eps):
        with pytest.raises(ProfileError):
            make_profile(-0.2, r, eps)

    @given(st.floats(-0.99, 0.99).filter(lambda v: abs(v) > 1e-6), st.floats(0.05, 0.2))
    def test_invariants(self, frac, eps):
        # the slope bound integrates to pi (1 - 2 eps) between the collars
        rho = frac * math.pi * (1 - 2 * eps)
        p = make_profile(rho, 1.0, eps)
        s = np.linspace(0, 1, 2001)
        np.testing.assert_allclose(p.f(s[s <= eps]), rho, atol=1e-12)
        np.testing.assert_allclose(p.f(s[s >= 1 - eps]), 0.0, atol=1e-12)
        assert np.all(-np.sign(rho) * p.fprime(s) >= -1e-14)
        assert np.all(2 * math.pi * s[1:] - np.abs(p.fprime(s[1:])) > 0)

    @settings(max_examples=20)
    @given(st.floats(-2.5, 2.5), st.floats(0.0, 1.0))
    def test_fprime_integrates_to_f(self, rho, s):
        p = make_profile(rho)
        val = integrate.quad(lambda z: float(p.fprime(z)), 0, s, limit=200, points=[0.1, 0.3, 0.7, 0.9])[0]
        assert float(p.f(s)) - rho == pytest.approx(val, abs=1e-10)

    def test_feasibility_sharpness(self):
        p = make_profile(-3.0, 1.0, 0.02)
        total = integrate.quad(lambda z: float(p.fprime(z)), 0, 1, limit=400)[0]
        assert total == pytest.approx(3.0, abs=1e-9)
        assert total < math.pi

    def test_to_table(self):
        p = make_profile(-0.4)
        lines = p.to_table(11).splitlines()
        assert lines[0].split("\t") == ["s", "f", "fprime"]
        rows = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]])
        assert rows.shape == (11, 3)
        np.testing.assert_allclose(rows[:, 1], p.f(rows[:, 0]), atol=1e-11)


class TestClosedFormFlow:
    def test_inner_tube_is_reeb(self):
        prof = make_profile(-0.4)
        q = closed_form_flow(prof, 0.7, PolarPoint([0.05], [1.0], 0.2, 0.2))
        assert q.tau_lift == pytest.approx(0.2 - 0.4 * 0.7, abs=1e-15)
        assert q.phi[0] == 1.0

    def test_outside_support_identity(self):
        prof = make_profile(-0.4)
        p = PolarPoint([1.3], [2.0], 0.5, 0.5)
        q = closed_form_flow(prof, 1.0, p)
        assert q.tau_lift == 0.5 and q.phi[0] == 2.0

    def test_origin_uses_cartesian(self):
        prof = make_profile(0.3)
        q = closed_form_flow(prof, 1.0, PolarPoint([0.0], [0.0], 0.1, 0.1))
        assert q.tau_lift == pytest.approx(0.4)

    @given(st.floats(0.0, 1.2), st.floats(0, 2 * math.pi - 1e-6), st.floats(-1, 1))
    def test_polar_matches_cartesian(self, s, phi, t):
        prof = make_profile(-0.8)
        p = PolarPoint([s], [phi], 0.3, 0.3)
        a = from_polar(closed_form_flow(prof, t, p)).as_array()
        b = flow_cartesian(prof, t, from_polar(p).as_array())
        np.testing.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize("rho", [-0.4, 0.4, -0.9 * math.pi * 0.99])
    def test_matches_integrator(self, rho):
        eps = 0.05 if rho < -1 else 0.1
        assert flow_discrepancy(make_profile(rho, 1.0, eps), 1000) < 1e-6

    def test_fourth_order(self):
        prof = make_profile(-0.4)
        e1 = flow_discrepancy(prof, 100)
        e2 = flow_discrepancy(prof, 200)
        assert e1 / e2 >= 14

    @given(st.floats(0.0, 1.2), st.floats(0, 2 * math.pi), st.floats(0, 1), st.floats(-1, 1))
    def test_exact_pullback(self, s, phi, tau, t):
        prof = make_profile(-0.9)
        x = np.array([s * math.cos(phi), s * math.sin(phi), tau])
        D = jacobian_fd(lambda z: flow_cartesian(prof, t, z), x)
        y = flow_cartesian(prof, t, x)
        for v in np.eye(3):
            assert alpha(y, D @ v) == pytest.approx(alpha(x, v), abs=1e-8)

    def test_profile_flow_isotopy(self):
        prof = make_profile(-0.4)
        phi = ProfileFlow(prof)
        x = np.array([[0.5, 0.1, 0.3], [0.02, 0.0, 0.9]])
        y, rho = phi.evaluate(1.0, x)
        assert np.all(rho == 1.0)
        np.testing.assert_allclose(phi.inverse(1.0, y), x, atol=1e-14)
        assert phi.tag.kind == "profile-flow" and phi.tag.params == (-0.4,)

    @given(st.integers(1, 6), st.floats(0.0, 0.1), st.floats(0, 2 * math.pi))
    def test_inner_tube_group_law(self, nu, s, phi):
        prof = make_profile(-0.4)
        x = np.array([s * math.cos(phi), s * math.sin(phi), 0.25])
        got = inner_tube_iterate(prof, nu, 1.0, x)
        np.testing.assert_allclose(got[:2], x[:2], atol=1e-15)
        assert got[2] == pytest.approx(0.25 + nu * -0.4, abs=1e-14)

    def test_polar_round_trip_of_flow(self):
        prof = make_profile(-0.4)
        x = np.array([0.3, 0.4, 0.1])
        p = to_polar(from_polar(PolarPoint([0.5], [math.atan2(0.4, 0.3)], 0.1, 0.1)))
        np.testing.assert_allclose(from_polar(closed_form_flow(prof, 0.5, p)).as_array(),
                                   flow_cartesian(prof, 0.5, x), atol=1e-12)


class TestClosedFormTranslatedPoints:
    def test_strict_two_collars(self):
        prof = make_profile(-0.4)
        tps = enumerate_translated_points_closed_form(prof)
        assert [(tp.s_lo, tp.s_hi, tp.shift, tp.winding) for tp in tps] == \
            [(0.0, 0.1, -0.4, 0), (0.9, math.inf, 0.0, 0)]

    def test_zero_everything_translated(self):
        tps = enumerate_translated_points_closed_form(make_profile(0.0))
        assert [(tp.s_lo, tp.s_hi, tp.shift) for tp in tps] == [(0.0, math.inf, 0.0)]

    def test_relaxed_crossings(self):
        prof = make_profile(-4.0, family="relaxed")
        extra = [tp for tp in enumerate_translated_points_closed_form(prof) if tp.winding != 0]
        assert len(extra) == 2
        g = lambda s: float(prof.fprime(s)) - 2 * math.pi * s
        s = np.linspace(0.1, 0.9, 801)
        vals = np.array([g(v) for v in s])
        roots = [brentq(g, s[i], s[i + 1], xtol=1e-15) for i in range(800) if vals[i] * vals[i + 1] < 0]
        for tp, root in zip(extra, roots):
            assert tp.s_lo == pytest.approx(root, abs=1e-10)
            assert tp.shift == pytest.approx(float(prof.f(root)) - math.pi * root ** 2, abs=1e-9)
            # the closed-form flow really returns the whole circle to itself
            x = np.array([root, 0.0, 0.2])
            y = flow_cartesian(prof, 1.0, x)
            np.testing.assert_allclose(y[:2], x[:2], atol=1e-8)
            assert y[2] - x[2] == pytest.approx(tp.shift, abs=1e-8)


@pytest.fixture(scope="module")
def scan():
    return g_and_l_scan(grid=100)


class TestGL:
    def test_endpoint_signs(self, scan):
        assert scan.g[0] < 0
        assert np.all(scan.g[scan.rho > math.pi] > 0)

    def test_root(self, scan):
        assert scan.rho0 < scan.rho1 < math.pi
        assert abs(scan.g_rho1) < 1e-6
        fam = GLFamily()
        assert abs(g_value(fam.profile(scan.rho1), scan.rho1)) < 1e-6

    def test_semicontinuity(self, scan):
        assert scan.semicontinuity_ok

    def test_l_definition(self):
        fam = GLFamily()
        prof = fam.profile(4.0)
        l = l_value(prof)
        s = np.linspace(0, 1, 20001)
        above = s[prof.fprime(s) >= 2 * math.pi * s * (1 - 1e-12)]
        assert l == pytest.approx(above.max(), abs=1e-4)

    def test_strict_regime_l_zero(self):
        fam = GLFamily()
        prof = fam.profile(0.5 * fam.rho0)
        assert l_value(prof) == 0.0
        # with l = 0 the plateau value -rho cancels rho
        assert g_value(prof, 0.5 * fam.rho0) == pytest.approx(0.0, abs=1e-12)

    def test_family_continuous(self):
        fam = GLFamily()
        s = np.linspace(0, 1, 401)
        a, b = fam.profile(3.0), fam.profile(3.0 + 1e-7)
        assert np.max(np.abs(a.f(s) - b.f(s))) < 1e-6
