import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.optimize import brentq

from contact_spectral.contact_calculus import IntegratedIsotopy, LiftedIsotopy, identity_isotopy, reeb_path
from contact_spectral.fixtures import (
    RadialBump,
    TwistedRotationBump,
    bump_isotopy,
    random_bump_hamiltonian,
    random_bump_isotopy,
)
from contact_spectral.model_spaces import PrequantizationPoint, SymplectizationPoint
from contact_spectral.profile_flows import ProfileFlow, make_profile
from contact_spectral.rabinowitz_action import (
    DiscretizedLoop,
    LoopError,
    action_gradient,
    constraint,
    construct_critical_pair,
    critical_residual,
    default_cutoff,
    defect,
    evaluate_hamiltonian_action,
    evaluate_rabinowitz_action,
    residual_components,
    symplectic_matrix,
)


def constant_loop(x, r=1.0, eta=0.0, N=32):
    row = np.concatenate([x, [r]])
    return DiscretizedLoop(np.tile(row, (N + 1, 1)), eta)


def wavy_loop(N, eta=0.3):
    t = np.linspace(0, 1, N + 1)
    u = np.column_stack([0.3 * np.cos(2 * np.pi * t) + 0.1, 0.2 * np.sin(4 * np.pi * t),
                         0.2 + t + 0.05 * np.sin(2 * np.pi * t), 1 + 0.2 * np.sin(2 * np.pi * t)])
    return DiscretizedLoop(u, eta)


def circle(s, N):
    t = np.linspace(0, 1, N + 1)
    return np.column_stack([s * np.cos(2 * np.pi * t), s * np.sin(2 * np.pi * t)])


class TestCutoffs:
    def test_beta(self):
        c = default_cutoff()
        assert integrate.quad(c.beta, 0, 0.5, limit=200)[0] == pytest.approx(1.0, abs=1e-10)
        t = np.linspace(0.5, 1.0, 101)
        assert np.all(c.beta(t) == 0)
        assert c.B(0.0) == 0.0 and c.B(0.5) == 1.0

    def test_chi(self):
        c = default_cutoff()
        assert c.chi(0.5) == 0.0 and c.chi(1.0) == 1.0
        t = np.linspace(0, 1, 1001)
        assert np.all(c.chi_dot(t) >= 0)
        assert np.all(np.diff(c.chi(t)) >= 0)

    @given(st.floats(0.0, 1.0))
    def test_B_is_antiderivative(self, t):
        c = default_cutoff()
        assert integrate.quad(c.beta, 0, t, limit=200)[0] == pytest.approx(float(c.B(t)), abs=1e-9)


class TestLoops:
    def test_open_loop_rejected(self):
        u = np.tile([0.0, 0.0, 0.0, 1.0], (17, 1))
        u[-1, 0] = 0.1
        with pytest.raises(LoopError, match="does not close"):
            DiscretizedLoop(u, 0.0)

    def test_resolution_rules(self):
        with pytest.raises(LoopError):
            DiscretizedLoop(np.tile([0.0, 0.0, 0.0, 1.0], (15, 1)), 0.0)
        with pytest.raises(LoopError):
            DiscretizedLoop(np.tile([0.0, 0.0, 0.0, 1.0], (18, 1)), 0.0)

    def test_positive_r(self):
        with pytest.raises(LoopError):
            DiscretizedLoop(np.tile([0.0, 0.0, 0.0, -1.0], (17, 1)), 0.0)

    def test_tau_closes_mod_one(self):
        u = np.tile([0.0, 0.0, 0.0, 1.0], (17, 1))
        u[:, 2] = np.linspace(0, 2, 17)
        assert DiscretizedLoop(u, 0.0).winding() == 2

    def test_points_round_trip(self):
        loop = wavy_loop(16)
        again = DiscretizedLoop.from_points(loop.points(), loop.eta)
        np.testing.assert_allclose(again.samples, loop.samples, atol=1e-15)
        assert isinstance(loop.points()[0], SymplectizationPoint)


class TestAction:
    def test_constant_loop_zero(self):
        val = evaluate_rabinowitz_action(constant_loop([0.3, 0.1, 0.2]), identity_isotopy())
        assert val.value == 0.0

    def test_constant_loop_r_two(self):
        val = evaluate_rabinowitz_action(constant_loop([0.3, 0.1, 0.2], r=2.0, eta=1.0), identity_isotopy())
        assert val.value == pytest.approx(-1.0, abs=1e-14)

    def test_profile_critical_value(self):
        prof = make_profile(-0.4)
        phi = ProfileFlow(prof)
        loop = construct_critical_pair(phi, np.array([0.05, 0.0, 0.2]), prof.rho, 128)
        assert evaluate_rabinowitz_action(loop, phi).value == pytest.approx(loop.eta, abs=1e-6)
        assert loop.eta == pytest.approx(0.4)

    def test_error_estimate_shrinks(self):
        h = random_bump_hamiltonian(np.random.default_rng(4))
        phi = IntegratedIsotopy(h, steps=20)
        e = [evaluate_rabinowitz_action(wavy_loop(N), phi).quadrature_error_estimate for N in (32, 64, 128)]
        assert e[0] / e[1] >= 4 * 0.9 and e[1] / e[2] >= 4 * 0.9


class TestHamiltonianAction:
    def test_outside_support(self):
        f = bump_isotopy(RadialBump(0.5, (0.0, 0.0), 0.5), steps=10)
        v = np.tile([2.0, 0.0], (33, 1))
        assert evaluate_hamiltonian_action(v, f).value == 0.0

    def test_fixed_point(self):
        bump = RadialBump(0.7, (0.1, -0.2), 0.5)
        v = np.tile(bump.c, (33, 1))
        assert evaluate_hamiltonian_action(v, bump_isotopy(bump, steps=10)).value == pytest.approx(-0.7)

    def test_open_loop(self):
        f = bump_isotopy(RadialBump(0.5, (0.0, 0.0), 0.5), steps=10)
        with pytest.raises(LoopError):
            evaluate_hamiltonian_action(np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]]), f)

    def test_periodic_orbit(self):
        # a radius where the bump turns counter-clockwise once per unit time
        bump = RadialBump(-1.0, (0.0, 0.0), 0.6)
        s_star = brentq(lambda s: float(bump.rate(s)) - 2 * math.pi, 0.05, 0.3)
        f = bump_isotopy(bump, steps=400)
        quarter, _ = f.evaluate(0.25, np.array([[s_star, 0.0]]))
        np.testing.assert_allclose(quarter[0], [0.0, s_star], atol=1e-8)
        v = circle(s_star, 256)
        expected = math.pi * s_star ** 2 - float(bump.radial(s_star))
        got = evaluate_hamiltonian_action(v, f)
        assert abs(got.value - expected) <= 1.5 * got.quadrature_error_estimate
        assert abs(got.value - expected) < 5e-5


class TestCritical:
    @pytest.mark.parametrize("T", [0.5, 1.0, 2.5])
    def test_reeb_pair(self, T):
        x = np.array([0.3, 0.2, 0.1])
        loop = construct_critical_pair(reeb_path(T), x, T, 256)
        assert critical_residual(loop, reeb_path(T)) < 1e-4
        assert evaluate_rabinowitz_action(loop, reeb_path(T)).value == pytest.approx(-T, abs=1e-6)

    def test_second_order_decay(self):
        phi = TwistedRotationBump(RadialBump(0.3, (0.2, 0.1), 0.9), k=1.3, p=0.2)
        x = np.array([0.18329315, 0.09164657, 0.58109816])
        # the bump centre, rotated by the twist, is a translated point
        w = phi.theta.inverse(x)
        x = phi.theta.apply(np.concatenate([phi.bump.c, w[-1:]]))[0]
        shift = float(phi(1.0, x)[-1] - x[-1])
        res = [critical_residual(construct_critical_pair(phi, x, shift, N), phi) for N in (64, 128, 256)]
        assert 3.6 < res[0] / res[1] < 4.4 and 3.6 < res[1] / res[2] < 4.4

    def test_constant_zero(self):
        assert critical_residual(constant_loop([0.3, 0.1, 0.2]), identity_isotopy()) < 1e-9

    @given(st.floats(1e-3, 1e-1))
    def test_perturbation_detected(self, delta):
        T = 0.7
        loop = construct_critical_pair(reeb_path(T), np.array([0.3, 0.2, 0.1]), T, 64)
        t = loop.times
        u = np.array(loop.samples)
        u[:, 0] += delta * np.sin(2 * np.pi * t)
        assert critical_residual(DiscretizedLoop(u, loop.eta), reeb_path(T)) >= delta

    def test_exact_isotopy_keeps_r(self):
        prof = make_profile(0.6)
        loop = construct_critical_pair(ProfileFlow(prof), np.array([0.95, 0.0, 0.1]), 0.0, 64)
        np.testing.assert_allclose(loop.r, 1.0)

    def test_constraint_vanishes(self):
        loop = construct_critical_pair(reeb_path(1.0), np.array([0.3, 0.2, 0.1]), 1.0, 64)
        assert constraint(loop) == 0.0
        assert residual_components(loop, reeb_path(1.0))["constraint"] == 0.0

    def test_gradient_matches_defect(self):
        phi = IntegratedIsotopy(random_bump_hamiltonian(np.random.default_rng(1)), steps=50)
        errs = []
        for N in (32, 64, 128):
            loop = wavy_loop(N)
            g = action_gradient(loop, phi) * N
            D = defect(loop, phi)
            node = 0.5 * (D + np.roll(D, 1, axis=0))
            W = np.stack([symplectic_matrix(loop.samples[k, :-1], loop.samples[k, -1]) for k in range(N)])
            errs.append(np.max(np.abs(g - np.einsum("kij,kj->ki", W, node))))
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


class TestCorrespondence:
    def test_lifted_fixed_point(self):
        f = random_bump_isotopy(np.random.default_rng(3), steps=400)
        phi = LiftedIsotopy(f)
        c = f.bump.c
        _, a = f.evaluate(1.0, c[None])
        loop = construct_critical_pair(phi, np.array([c[0], c[1], 0.3]), -a[0], 128)
        A_phi = evaluate_rabinowitz_action(loop, phi).value
        A_f = evaluate_hamiltonian_action(np.tile(c, (129, 1)), f).value
        assert A_phi == pytest.approx(loop.eta, abs=1e-6)
        assert A_phi == pytest.approx(A_f, abs=1e-6)

    def test_lifted_periodic_orbit(self):
        bump = RadialBump(-1.0, (0.0, 0.0), 0.6)
        s_star = brentq(lambda s: float(bump.rate(s)) - 2 * math.pi, 0.05, 0.3)
        f = bump_isotopy(bump, steps=2000)
        phi = LiftedIsotopy(f)
        x = np.array([s_star, 0.0, 0.1])
        y, _ = phi.evaluate(1.0, x[None])
        shift = float(y[0, -1] - x[-1])
        loop = construct_critical_pair(phi, x, shift, 256)
        A_phi = evaluate_rabinowitz_action(loop, phi)
        A_f = evaluate_hamiltonian_action(circle(s_star, 256), f)
        assert abs(A_phi.value - loop.eta) <= 1.5 * A_phi.quadrature_error_estimate
        assert abs(A_phi.value - A_f.value) <= 1.5 * (A_phi.quadrature_error_estimate + A_f.quadrature_error_estimate)
