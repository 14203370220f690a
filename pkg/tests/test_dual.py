import numpy as np
import pytest

from epgforge.dual import (Dual2, dconj, deinsum, dexp, droll, dsum,
                           seed_log_tangents)


def dual_var(x):
    """Scalar dual with a unit tangent on lane 1."""
    return Dual2(x, d1=1.0)


class TestChainRule:
    def test_product_rule(self):
        x = dual_var(1.3)
        y = x * x * x
        assert y.val == pytest.approx(1.3**3, abs=1e-15)
        assert y.d1 == pytest.approx(3 * 1.3**2, abs=1e-12)

    def test_quotient_rule(self):
        x = dual_var(0.7)
        y = (x * x + 2.0) / x
        # d/dx (x + 2/x) = 1 - 2/x^2
        assert y.d1 == pytest.approx(1 - 2 / 0.7**2, abs=1e-12)

    def test_exp_composition(self):
        x = dual_var(0.4)
        y = dexp(x * x)
        assert y.d1 == pytest.approx(2 * 0.4 * np.exp(0.16), abs=1e-12)

    def test_trig_composition(self):
        x = dual_var(1.1)
        y = x.sin() * x.cos()
        # d/dx sin x cos x = cos(2x)
        assert y.d1 == pytest.approx(np.cos(2.2), abs=1e-12)

    def test_sqrt_log_pow(self):
        x = dual_var(2.5)
        assert x.sqrt().d1 == pytest.approx(0.5 / np.sqrt(2.5), abs=1e-14)
        assert x.log().d1 == pytest.approx(1 / 2.5, abs=1e-14)
        assert (x**4).d1 == pytest.approx(4 * 2.5**3, abs=1e-10)

    def test_composite_matches_analytic(self):
        # f(t) = exp(-a/t) * sin(b t): closed-form derivative to 1e-12
        a, b, t0 = 3.0, 2.0, 1.7
        t = dual_var(t0)
        f = dexp(-a / t) * (t * b).sin()
        expect = np.exp(-a / t0) * (a / t0**2 * np.sin(b * t0)
                                    + b * np.cos(b * t0))
        assert f.d1 == pytest.approx(expect, abs=1e-12)

    def test_two_lane_independence(self):
        t1, t2 = seed_log_tangents(0.8, 0.08)
        y = dexp(-0.01 / t1) * dexp(-0.01 / t2)
        # d/dlog t of exp(-c/t) is exp(-c/t) * c/t
        v = np.exp(-0.01 / 0.8) * np.exp(-0.01 / 0.08)
        assert y.d1 == pytest.approx(v * 0.01 / 0.8, abs=1e-12)
        assert y.d2 == pytest.approx(v * 0.01 / 0.08, abs=1e-12)


class TestArrayMechanics:
    def test_broadcast_and_index(self):
        x = Dual2(np.arange(6.0).reshape(2, 3), d1=np.ones((2, 3)))
        y = x * np.array([1.0, 2.0, 3.0])
        assert y.val.shape == (2, 3)
        assert np.allclose(y.d1, [[1, 2, 3], [1, 2, 3]])
        sub = y[0, 1:]
        assert np.allclose(sub.val, [2, 6])

    def test_setitem_zeroes_tangent_for_plain_values(self):
        x = Dual2(np.ones(4), d1=np.ones(4))
        x[2] = 5.0
        assert x.val[2] == 5.0 and x.d1[2] == 0.0

    def test_ndarray_left_operand_defers(self):
        a = np.array([1.0, 2.0])
        x = Dual2(np.array([3.0, 4.0]), d1=np.ones(2))
        y = a * x
        assert isinstance(y, Dual2)
        assert np.allclose(y.d1, a)
        z = a - x
        assert isinstance(z, Dual2)
        assert np.allclose(z.d1, -1.0)

    def test_complex_conjugate_tangents(self):
        x = Dual2(np.array([1 + 2j]), d1=np.array([0.5 - 0.5j]))
        y = dconj(x)
        assert y.val[0] == 1 - 2j
        assert y.d1[0] == 0.5 + 0.5j

    def test_roll_and_sum(self):
        x = Dual2(np.arange(4.0), d1=np.arange(4.0) * 10)
        r = droll(x, 1, -1)
        assert np.allclose(r.val, [3, 0, 1, 2])
        assert np.allclose(r.d1, [30, 0, 10, 20])
        s = dsum(x, axis=0)
        assert s.val == 6.0 and s.d1 == 60.0

    def test_deinsum_product_rule(self):
        rng = np.random.default_rng(0)
        av, ad = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        bv, bd = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        a = Dual2(av, d1=ad)
        b = Dual2(bv, d1=bd)
        out = deinsum("ij,jk->ik", a, b)
        assert np.allclose(out.val, av @ bv)
        assert np.allclose(out.d1, av @ bd + ad @ bv)
        assert np.allclose(out.d2, 0.0)
        # mixed plain/dual operands
        out2 = deinsum("ij,jk->ik", av, b)
        assert np.allclose(out2.d1, av @ bd)
        out3 = deinsum("ij,jk->ik", av, bv)
        assert isinstance(out3, np.ndarray)

    def test_comparisons_use_value_lane(self):
        x = Dual2(2.0, d1=100.0)
        assert x > 1.0
        assert not (x < 1.0)
