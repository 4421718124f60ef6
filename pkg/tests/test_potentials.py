import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
import hypothesis.extra.numpy as hnp

from smdlab.errors import DomainError
from smdlab.potentials import Potential, entropy, qnorm

ALL_Q = (1.1, 1.5, 2.0, 3.0, 10.0)


def vectors(min_mag=0.0, max_mag=1e6, min_size=1, max_size=8, positive=False):
    low = 1e-3 if positive else -max_mag
    return hnp.arrays(
        np.float64,
        hnp.array_shapes(min_dims=1, max_dims=1, min_side=min_size, max_side=max_size),
        elements=st.floats(low, max_mag, allow_nan=False, allow_infinity=False),
    )


def representable_weights(max_mag=1e4, min_size=1, max_size=8):
    # |w|^(q-1) must stay inside float64 for the round trip to exist at all,
    # so keep magnitudes above 1e-25 (or exactly zero)
    elements = st.one_of(
        st.just(0.0),
        st.floats(1e-25, max_mag),
        st.floats(-max_mag, -1e-25),
    )
    return hnp.arrays(
        np.float64,
        hnp.array_shapes(min_dims=1, max_dims=1, min_side=min_size, max_side=max_size),
        elements=elements,
    )


class TestValues:
    def test_qnorm_examples(self):
        assert qnorm(2).value([3.0, 4.0]) == pytest.approx(12.5, abs=0)
        assert qnorm(3).value([2.0]) == pytest.approx(8.0 / 3.0, rel=1e-15)
        assert entropy().value([1.0, 1.0]) == 0.0

    def test_entropy_domain(self):
        with pytest.raises(DomainError):
            entropy().value([1.0, 0.0])
        with pytest.raises(DomainError):
            entropy().grad([-1.0])

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            qnorm(1.0)
        with pytest.raises(ValueError):
            Potential("qnorm", 0.5)
        with pytest.raises(ValueError):
            Potential("cubic")


class TestMirrorMaps:
    def test_examples(self):
        np.testing.assert_allclose(qnorm(3).grad([2.0, -1.0]), [4.0, -1.0], rtol=1e-15)
        np.testing.assert_allclose(qnorm(10).grad([0.5]), [0.5**9], rtol=1e-14)
        np.testing.assert_allclose(qnorm(3).grad_inv([4.0, -1.0]), [2.0, -1.0], rtol=1e-14)
        np.testing.assert_allclose(qnorm(10).grad_inv([0.5**9]), [0.5], rtol=1e-14)

    def test_q2_is_identity_bitwise(self):
        w = np.random.default_rng(0).standard_normal(20)
        assert np.array_equal(qnorm(2).grad(w), w)
        assert np.array_equal(qnorm(2).grad_inv(w), w)

    def test_zero_maps_to_zero(self):
        for q in ALL_Q:
            assert np.all(qnorm(q).grad(np.zeros(3)) == 0.0)
            assert np.all(qnorm(q).grad_inv(np.zeros(3)) == 0.0)

    @pytest.mark.parametrize("q", ALL_Q)
    @given(w=representable_weights())
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, q, w):
        pot = qnorm(q)
        back = pot.grad_inv(pot.grad(w))
        assert np.all(np.abs(back - w) <= 1e-10 * np.abs(w))

    @given(w=vectors(positive=True, max_mag=1e4))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_entropy(self, w):
        pot = entropy()
        back = pot.grad_inv(pot.grad(w))
        assert np.all(np.abs(back - w) <= 1e-10 * np.abs(w))

    def test_conjugate_is_inverse_gradient(self):
        # finite differences of psi* recover grad_inv
        rng = np.random.default_rng(3)
        for pot in (qnorm(1.5), qnorm(3), entropy()):
            z = rng.standard_normal(5)
            h = 1e-6
            fd = np.zeros(5)
            for j in range(5):
                zp, zm = z.copy(), z.copy()
                zp[j] += h
                zm[j] -= h
                fd[j] = (pot.conjugate_value(zp) - pot.conjugate_value(zm)) / (2 * h)
            np.testing.assert_allclose(fd, pot.grad_inv(z), rtol=1e-5, atol=1e-8)


class TestBregman:
    def test_examples(self):
        assert qnorm(2).bregman([1.0, 2.0], [0.0, 0.0]) == pytest.approx(2.5, abs=0)
        assert qnorm(3).bregman([2.0], [0.0]) == pytest.approx(8.0 / 3.0, rel=1e-15)
        assert entropy().bregman([1.0], [np.e]) == pytest.approx(np.e - 2.0, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            qnorm(2).bregman([1.0, 2.0], [1.0])

    @pytest.mark.parametrize("q", ALL_Q)
    @given(w=vectors(max_mag=100), v=vectors(max_mag=100))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative(self, q, w, v):
        if w.shape != v.shape:
            v = np.resize(v, w.shape)
        assert qnorm(q).bregman(w, v) >= 0.0

    @given(w=vectors(positive=True, max_mag=100), v=vectors(positive=True, max_mag=100))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative_entropy(self, w, v):
        if w.shape != v.shape:
            v = np.resize(v, w.shape)
        assert entropy().bregman(w, v) >= 0.0

    @pytest.mark.parametrize("pot", [qnorm(q) for q in ALL_Q] + [entropy()])
    def test_zero_iff_equal(self, pot):
        rng = np.random.default_rng(7)
        w = np.abs(rng.standard_normal(12)) + 0.1
        assert pot.bregman(w, w) == 0.0
        v = w.copy()
        v[3] += 0.5
        assert pot.bregman(w, v) > 0.0

    def test_q2_specialization(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            w = rng.standard_normal(30)
            v = rng.standard_normal(30)
            exact = 0.5 * np.sum((w - v) ** 2)
            assert qnorm(2).bregman(w, v) == pytest.approx(exact, rel=1e-12)

    @pytest.mark.parametrize("q", ALL_Q)
    @given(
        data=st.tuples(
            vectors(max_mag=50, min_size=4, max_size=4),
            vectors(max_mag=50, min_size=4, max_size=4),
            vectors(max_mag=50, min_size=4, max_size=4),
            st.floats(0.01, 0.99),
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_convex_in_first_argument(self, q, data):
        a, b, v, lam = data
        pot = qnorm(q)
        blend = pot.bregman(lam * a + (1 - lam) * b, v)
        assert blend <= lam * pot.bregman(a, v) + (1 - lam) * pot.bregman(b, v) + 1e-10


def test_labels():
    assert qnorm(1.1).label() == "q=1.1"
    assert qnorm(10).label() == "q=10"
    assert entropy().label() == "entropy"
