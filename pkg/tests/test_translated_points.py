import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import block_diag

from contact_spectral import capacities as cap
from contact_spectral.contact_calculus import identity_isotopy, iterate_isotopy, reeb_path
from contact_spectral.fixtures import QuadraticWell, RadialBump, circle_twist, radial_flow, translation_lift
from contact_spectral.model_spaces import DomainKind, DomainSpec, PrequantizationPoint, standard_j
from contact_spectral.profile_flows import ProfileFlow, make_profile
from contact_spectral.translated_points import (
    DegeneratePathError,
    TranslatedPoint,
    action_spectrum,
    conley_zehnder_index,
    displacement_containment,
    distinct_points,
    find_translated_points,
    iterated_translated_points,
    quadratic_path,
    rfh_grading,
    rotation_path,
    transport_error,
)


def ball(r):
    return DomainSpec(DomainKind.BALL, r)


def check_tp(phi, tp):
    x = tp.x.as_array()[None]
    y, rho = phi.evaluate(1.0, x)
    want = x.copy()
    want[0, -1] += tp.shift
    return float(np.max(np.abs(y - want))), float(abs(rho[0] - 1.0))


@pytest.fixture(scope="module")
def profile_tps():
    prof = make_profile(-0.4)
    phi = ProfileFlow(prof)
    return prof, phi, find_translated_points(phi, ball(1.05), (-0.6, 0.2), 256)


@pytest.fixture(scope="module")
def bump_lift():
    return cap.lifted_bump(0.3, steps=100)


class TestTranslatedPointType:
    def test_action_is_minus_shift(self):
        tp = TranslatedPoint(PrequantizationPoint.from_lift([0.0, 0.0], 0.2), 0.35, 0.0, True)
        assert tp.action == -0.35
        assert tp.radius == 0.0


class TestSolver:
    def test_reeb_every_seed_translated(self):
        T = 0.7
        tps = find_translated_points(reeb_path(T), ball(1.0), (0.0, 1.0), 64)
        assert len(tps) > 10
        assert all(tp.shift == pytest.approx(T, abs=1e-12) for tp in tps)
        assert all(tp.contractible and tp.winding == 0 for tp in tps)

    def test_integer_reeb_shift_representatives(self):
        tps = find_translated_points(reeb_path(2.0), ball(1.0), (-0.5, 2.5), 27)
        classes = {(round(tp.shift, 9), tp.winding, bool(tp.contractible)) for tp in tps}
        # the geometric point is fixed; only the lift difference T closes up contractibly
        assert classes == {(0.0, -2, False), (1.0, -1, False), (2.0, 0, True)}

    def test_identity_shift_zero(self):
        tps = find_translated_points(identity_isotopy(), ball(1.0), (-0.5, 0.5), 64)
        assert tps and all(tp.shift == 0.0 for tp in tps)

    def test_no_solution_is_empty(self):
        assert find_translated_points(reeb_path(0.5), ball(1.0), (0.6, 0.9), 64) == []

    @pytest.mark.parametrize("window", [(1.0, 0.0), (-math.inf, 0.0), (0.0, math.nan)])
    def test_window_validation(self, window):
        with pytest.raises(ValueError):
            find_translated_points(reeb_path(0.5), ball(1.0), window, 8)

    def test_soundness_recheck(self, profile_tps):
        _, phi, tps = profile_tps
        worst = max(max(check_tp(phi, tp)) for tp in tps)
        assert worst < 1e-8

    def test_profile_collars(self, profile_tps):
        prof, _, tps = profile_tps
        # the smooth window is flat to below solver tolerance just past each collar edge
        inner = [tp for tp in tps if tp.radius <= prof.epsilon + 1e-3]
        outer = [tp for tp in tps if tp.radius >= prof.r - prof.epsilon - 1e-3]
        assert len(inner) + len(outer) == len(tps)
        assert inner and outer
        assert all(tp.shift == pytest.approx(prof.rho, abs=1e-8) for tp in inner)
        assert all(abs(tp.shift) < 1e-8 for tp in outer)

    def test_deduplicated(self, profile_tps):
        _, _, tps = profile_tps
        z = np.array([np.concatenate([tp.x.y, [tp.x.tau, tp.shift]]) for tp in tps])
        d = np.max(np.abs(z[:, None, :] - z[None, :, :]), axis=-1)
        np.fill_diagonal(d, np.inf)
        assert np.min(d) > 1e-4

    def test_lifted_bump_critical_points(self, bump_lift):
        centre = np.array([[0.0, 0.0, 0.3]])
        tps = find_translated_points(bump_lift, ball(1.6), (-0.5, 0.2), 8, extra_seeds=centre)
        at_centre = [tp for tp in tps if tp.radius < 1e-6]
        assert at_centre
        # lift of -b: shift -b at the critical point
        assert all(tp.shift == pytest.approx(-0.3, abs=1e-8) for tp in at_centre)
        assert all(abs(tp.shift) < 1e-8 for tp in tps if tp.radius >= 1.5 - 1e-6)

    def test_deterministic(self):
        a = find_translated_points(ProfileFlow(make_profile(-0.4)), ball(1.05), (-0.6, 0.2), 64, seed=3)
        b = find_translated_points(ProfileFlow(make_profile(-0.4)), ball(1.05), (-0.6, 0.2), 64, seed=3)
        assert [tp.x.as_array().tolist() for tp in a] == [tp.x.as_array().tolist() for tp in b]


class TestIterated:
    def test_nu_one_reduces(self):
        phi = ProfileFlow(make_profile(-0.4))
        one = iterated_translated_points(phi, 1, ball(1.05), (-0.6, 0.2), 64)
        direct = find_translated_points(phi, ball(1.05), (-0.6, 0.2), 64)
        assert [tp.shift for tp in one[1]] == [tp.shift for tp in direct]

    def test_profile_iterates(self):
        rho = -0.4
        it = iterated_translated_points(ProfileFlow(make_profile(rho)), 3, ball(1.05), (-1.5, 0.5), 128)
        for nu, tps in it.items():
            shifts = {round(tp.shift, 8) + 0.0 for tp in tps if tp.contractible}
            assert shifts == {0.0, round(nu * rho, 8)}

    def test_distinct_count_monotone(self):
        phi = ProfileFlow(make_profile(-0.4))
        it = iterated_translated_points(phi, 3, ball(1.05), (-1.5, 0.5), 128)
        counts = [distinct_points({k: it[k] for k in range(1, m + 1)}) for m in (1, 2, 3)]
        assert counts == sorted(counts)

    def test_bump_lift_strictly_monotone(self, bump_lift):
        centre = np.array([[0.0, 0.0, 0.3]])
        shifts = []
        for nu in (1, 2, 3):
            tps = find_translated_points(iterate_isotopy(bump_lift, nu), ball(0.2), (-1.5, 0.2), 8,
                                         extra_seeds=centre)
            shifts.append(min(tp.shift for tp in tps if tp.radius < 1e-6 and tp.contractible))
        np.testing.assert_allclose(shifts, [-0.3, -0.6, -0.9], atol=1e-8)
        assert shifts[0] > shifts[1] > shifts[2]

    def test_nu_validation(self):
        with pytest.raises(ValueError):
            iterated_translated_points(reeb_path(0.5), 0, ball(1.0), (0.0, 1.0))


class TestSpectrum:
    def test_profile(self):
        spec = action_spectrum(ProfileFlow(make_profile(-0.4)), ball(1.05), (-0.2, 0.6), 256)
        np.testing.assert_allclose(spec.contractible_values, [0.0, 0.4], atol=1e-8)
        assert not spec.nonresonant
        assert all(-0.2 <= v <= 0.6 for v in spec.values)
        assert all(e.multiplicity > 1 for e in spec.entries)

    def test_identity(self):
        spec = action_spectrum(identity_isotopy(), ball(1.0), (-0.5, 0.5), 64)
        assert spec.contractible_values == [0.0]

    def test_reeb(self):
        spec = action_spectrum(reeb_path(0.7), ball(1.0), (-1.0, 0.0), 64)
        assert spec.contractible_values == [-0.7]
        assert spec.nonresonant

    def test_reeb_integer_raw_and_contractible(self):
        spec = action_spectrum(reeb_path(1.0), ball(1.0), (-1.5, 0.5), 27)
        assert sorted({round(v, 9) + 0.0 for v in spec.values}) == [-1.0, 0.0]
        assert spec.contractible_values == [-1.0]
        # the shift-zero representative is not contractible unless T = 0
        assert [e.contractible for e in spec.entries if abs(e.action) < 1e-9] == [False]
        assert not spec.nonresonant


class TestTransport:
    @pytest.mark.parametrize("psi", [circle_twist(1.3, 0.2), translation_lift([0.1, -0.05])])
    def test_integer_shift_points_transport(self, profile_tps, psi):
        _, phi, tps = profile_tps
        ints = [tp for tp in tps if abs(tp.shift - round(tp.shift)) < 1e-9]
        assert ints
        err = max(transport_error(phi, psi, tp.x.as_array(), tp.shift) for tp in ints)
        assert err < 1e-6

    def test_non_translated_point_detected(self, profile_tps):
        _, phi, _ = profile_tps
        x = np.array([0.5, 0.0, 0.1])
        assert transport_error(phi, circle_twist(1.3, 0.2), x, 0.0) > 1e-3

    @pytest.mark.parametrize("s", [0.5, 1.0])
    def test_displacement_containment(self, s):
        phi = radial_flow(RadialBump(-0.2, (0.0, 0.0), 0.4))
        psi = radial_flow(QuadraticWell(math.pi, (0.8, 0.0), 0.3))
        rep = displacement_containment(phi, psi, s, ball(1.2), (-1.0, 1.0), 256)
        assert rep.spectrum
        assert rep.max_gap < 1e-6


def rotation_oracle(theta):
    """Index of t -> rotation by 2 pi theta t from the crossing form -J K of its generator K."""
    K = np.array([[0.0, -1.0], [1.0, 0.0]])
    ev = np.linalg.eigvalsh(-standard_j(1) @ K)
    sgn = int(np.sum(ev > 0) - np.sum(ev < 0)) // 2
    # the start contributes sgn, each full turn strictly inside contributes 2 sgn
    full_turns = math.ceil(theta) - 1 if theta > 0 else 0
    return sgn * (1 + 2 * full_turns)


class TestConleyZehnder:
    @pytest.mark.parametrize("n", [1, 2])
    def test_quadratic_normalization(self, n):
        for k in range(2 * n + 1):
            A = np.diag([-1.0] * k + [1.0] * (2 * n - k))
            assert conley_zehnder_index(quadratic_path(A, 0.1)) == n - k

    @given(st.integers(1, 2), st.data())
    def test_random_nondegenerate_quadratic(self, n, data):
        k = data.draw(st.integers(0, 2 * n))
        mags = data.draw(st.lists(st.floats(0.2, 3.0), min_size=2 * n, max_size=2 * n))
        rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 31)))
        Q, _ = np.linalg.qr(rng.normal(size=(2 * n, 2 * n)))
        A = Q @ np.diag(np.array(mags) * np.array([-1.0] * k + [1.0] * (2 * n - k))) @ Q.T
        assert conley_zehnder_index(quadratic_path(A, 0.1)) == n - k

    @pytest.mark.parametrize("theta", [0.3, 0.7, 1.4, 2.5])
    def test_rotation_against_oracle(self, theta):
        assert conley_zehnder_index(rotation_path(theta, 801)) == rotation_oracle(theta)

    def test_rotation_regression(self):
        assert [conley_zehnder_index(rotation_path(t)) for t in (0.3, 0.7)] == [1, 1]

    def test_direct_sum_additive(self):
        a, b = rotation_path(1.4, 401), quadratic_path(np.diag([-1.0, 1.0]), 0.1, 401)
        both = np.stack([block_diag(p, q) for p, q in zip(a, b)])
        assert conley_zehnder_index(both) == conley_zehnder_index(a) + conley_zehnder_index(b)

    @pytest.mark.parametrize("t1,t2", [(0.3, 1.0), (0.6, 0.7), (1.2, 1.5)])
    def test_catenation_additive(self, t1, t2):
        first = rotation_path(t1, 401)
        second = np.stack([p @ first[-1] for p in rotation_path(t2, 401)])
        joined = np.concatenate([first, second[1:]])
        times = np.concatenate([np.linspace(0, 0.5, 401), np.linspace(0.5, 1.0, 401)[1:]])
        # the junction is not a crossing, so the tail contributes its interior crossings only
        tail = rotation_oracle(t1 + t2) - rotation_oracle(t1)
        assert conley_zehnder_index(joined, times) == conley_zehnder_index(first) + tail

    def test_degenerate_endpoint(self):
        with pytest.raises(DegeneratePathError, match="degenerate path"):
            conley_zehnder_index(rotation_path(1.0))

    def test_must_start_at_identity(self):
        with pytest.raises(ValueError):
            conley_zehnder_index(rotation_path(0.3)[1:])


class TestGrading:
    def test_eta_zero(self):
        assert rfh_grading(None, 0.0, 0, 3, n=2) == 2

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_bump_maximum(self, n):
        assert rfh_grading(None, 0.0, 0, 2 * n - 1, n=n) == n

    def test_positive_eta(self):
        assert rfh_grading(None, 0.5, 0, 0, mu_cz=0, n=1) == 0

    def test_negative_eta_shifts_by_one(self):
        assert rfh_grading(None, -0.5, 2, 1, mu_cz=3, n=1) == 3 - 1 + 1 + 1

    def test_uses_point_index(self):
        tp = TranslatedPoint(PrequantizationPoint.from_lift([0.0, 0.0], 0.0), 0.3, 0.0, True, cz_index=2)
        assert rfh_grading(tp, 0.3, 0, 1) == 3

    def test_errors(self):
        with pytest.raises(ValueError):
            rfh_grading(None, 0.0, -1, 0, n=1)
        with pytest.raises(ValueError):
            rfh_grading(None, 0.0, 0, 0)
        with pytest.raises(ValueError):
            rfh_grading(None, 0.5, 0, 0, n=1)
