import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokesgauss.covariance import (
    AngleQuartet,
    Cov2,
    Cov4,
    noise_ellipse,
    quadrature_variance,
    quartet_consistent,
    quartet_from_cov,
    rotate_cov,
    single_mode_cov,
    sum_rule_residual,
    two_mode_cov,
)
from stokesgauss.errors import DomainError


def random_cov2(rng):
    a = rng.normal(size=(2, 2))
    return Cov2.from_matrix(a @ a.T + 0.1 * np.eye(2))


covs = st.tuples(
    st.floats(0.05, 20), st.floats(0.05, 20), st.floats(-0.95, 0.95)
).map(lambda t: Cov2(t[0], t[2] * math.sqrt(t[0] * t[1]), t[1]))
angles = st.floats(-10, 10)


# oracle: variance of the projected quadrature, computed as u^T C u
def projected_variance(cov, theta):
    u = np.array([math.cos(theta), math.sin(theta)])
    return float(u @ cov.as_array() @ u)


class TestSingleModeCov:
    def test_vacuum(self):
        assert single_mode_cov((1, 1, 1, 1)) == Cov2(1.0, 0.0, 1.0)

    def test_diagonal_state(self):
        # diag(0.692, 1.445) read at +-pi/4 gives the mean of the diagonal
        mid = projected_variance(Cov2(0.692, 0, 1.445), math.pi / 4)
        assert mid == pytest.approx(1.0685)
        c = single_mode_cov((mid, 0.692, mid, 1.445))
        assert (c.xx, c.xp, c.pp) == pytest.approx((0.692, 0.0, 1.445), abs=1e-15)

    def test_shifted_base(self):
        c = single_mode_cov((1.0686, 1.445, 1.0686, 0.692))
        np.testing.assert_allclose(c.as_array(), [[1.445, 0], [0, 0.692]], atol=1e-15)

    def test_offdiagonal_is_half_difference(self):
        c = single_mode_cov(AngleQuartet(m45=0.8, z0=1.0, p45=1.6, p90=1.4))
        assert c.xp == pytest.approx(0.4)

    @pytest.mark.parametrize("bad", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 1, 0)])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(DomainError):
            single_mode_cov(bad)

    @given(covs)
    def test_reproduces_quartet(self, cov):
        q = quartet_from_cov(cov)
        back = single_mode_cov(q)
        angles4 = (-math.pi / 4, 0, math.pi / 4, math.pi / 2)
        for a, v in zip(angles4, q):
            assert float(quadrature_variance(back, a)) == pytest.approx(v, rel=1e-12, abs=1e-12)


class TestRotate:
    def test_zero_angle(self):
        c = Cov2(1.3, 0.2, 0.9)
        np.testing.assert_allclose(rotate_cov(c, 0.0).as_array(), c.as_array(), atol=0)

    def test_quarter_turn_swaps(self):
        c = rotate_cov(Cov2(0.3, 0.0, 2.5), math.pi / 2)
        np.testing.assert_allclose(c.as_array(), np.diag([2.5, 0.3]), atol=1e-15)

    def test_pi_over_four(self):
        c = rotate_cov(Cov2(0.5, 0.0, 2.0), math.pi / 4)
        np.testing.assert_allclose(c.as_array(), [[1.25, 0.75], [0.75, 1.25]], atol=1e-15)

    @given(covs, angles)
    def test_new_x_is_old_quadrature(self, cov, phi):
        assert rotate_cov(cov, phi).xx == pytest.approx(projected_variance(cov, phi), rel=1e-12, abs=1e-12)

    @given(covs, angles)
    def test_trace_det_preserved(self, cov, phi):
        r = rotate_cov(cov, phi)
        assert r.trace == pytest.approx(cov.trace, rel=1e-12)
        assert r.det == pytest.approx(cov.det, rel=1e-11, abs=1e-12)


class TestEllipse:
    def test_identity(self):
        e = noise_ellipse(Cov2.identity())
        assert (e.var_min, e.var_max, e.theta_min, e.isotropic) == (1.0, 1.0, 0.0, True)

    def test_rotated(self):
        e = noise_ellipse(Cov2(1.25, 0.75, 1.25))
        assert e.var_min == pytest.approx(0.5, rel=1e-14)
        assert e.var_max == pytest.approx(2.0, rel=1e-14)
        # least-noise direction is (1, -1)/sqrt(2)
        assert e.theta_min == pytest.approx(-math.pi / 4, abs=1e-14)

    def test_diagonal(self):
        e = noise_ellipse(Cov2(0.692, 0.0, 1.445))
        assert (e.var_min, e.var_max, e.theta_min) == pytest.approx((0.692, 1.445, 0.0))

    def test_min_along_p(self):
        assert noise_ellipse(Cov2(2.0, 0.0, 0.5)).theta_min == pytest.approx(-math.pi / 2)

    @given(covs)
    def test_against_eigh(self, cov):
        e = noise_ellipse(cov)
        w, v = np.linalg.eigh(cov.as_array())
        assert e.var_min == pytest.approx(w[0], rel=1e-9, abs=1e-12)
        assert e.var_max == pytest.approx(w[1], rel=1e-12)
        assert e.var_min * e.var_max == pytest.approx(cov.det, rel=1e-12, abs=1e-12)
        assert -math.pi / 2 <= e.theta_min < math.pi / 2
        assert float(quadrature_variance(cov, e.theta_min)) == pytest.approx(w[0], rel=1e-8, abs=1e-10)

    @given(covs, angles)
    def test_equivariance(self, cov, phi):
        e0 = noise_ellipse(cov)
        if e0.var_max - e0.var_min < 1e-3:
            return
        e1 = noise_ellipse(rotate_cov(cov, phi))
        d = (e1.theta_min - (e0.theta_min - phi)) % math.pi
        assert min(d, math.pi - d) < 1e-9


class TestSumRule:
    @given(covs, angles)
    def test_holds_on_model_quartets(self, cov, base):
        q = [float(quadrature_variance(cov, base + o)) for o in (-math.pi / 4, 0, math.pi / 4, math.pi / 2)]
        assert abs(sum_rule_residual(q)) <= 1e-12 * max(q)

    def test_gate(self):
        assert quartet_consistent((1, 1, 1, 1))
        assert not quartet_consistent((1.2, 1, 1, 1), stderrs=(0.01,) * 4)
        assert quartet_consistent((1.02, 1, 1, 1), stderrs=(0.01,) * 4)


class TestTwoMode:
    def test_vacuum(self):
        c = two_mode_cov(Cov2.identity(), Cov2.identity(), np.zeros((2, 2)))
        np.testing.assert_array_equal(c.matrix, np.eye(4))

    def test_blocks_and_symmetry(self):
        a, b = Cov2(0.625, 0, 2.5), Cov2(0.625, 0, 2.5)
        g = [[-0.375, 0.1], [0.2, 1.5]]
        c = two_mode_cov(a, b, g)
        np.testing.assert_array_equal(c.gamma, g)
        np.testing.assert_array_equal(c.matrix, c.matrix.T)
        np.testing.assert_array_equal(c.alpha, a.as_array())

    def test_identical_streams(self):
        a = Cov2(0.8, 0.1, 1.3)
        c = two_mode_cov(a, a, a.as_array())
        np.testing.assert_array_equal(c.gamma, c.alpha)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            two_mode_cov(Cov2.identity(), Cov2.identity(), np.zeros(3))

    def test_cov4_rejects_asymmetric(self):
        m = np.eye(4)
        m[0, 1] = 0.5
        with pytest.raises(DomainError):
            Cov4(m)

    def test_cov4_immutable(self):
        c = Cov4.identity()
        with pytest.raises(ValueError):
            c.matrix[0, 0] = 2.0
