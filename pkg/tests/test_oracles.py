import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from smdlab.data import generate_synthetic
from smdlab.errors import DegenerateDataError, OracleError
from smdlab.models import Dataset, LinearModel, MLP, SquareLoss, residuals, teacher_weights
from smdlab.oracles import (
    OracleOptions,
    closest_interpolant_linear,
    closest_interpolant_nonlinear,
    distance_to_manifold_estimate,
)
from smdlab.potentials import entropy, qnorm
from smdlab.training import SMDConfig, train

LOSS = SquareLoss()


def brute_force_line(pot, particular, direction, lo=-3.0, hi=3.0):
    """Independent 1-D oracle: dense grid plus local refinement along a
    parameterized constraint line."""
    ts = np.linspace(lo, hi, 200_001)
    W = particular[None, :] + ts[:, None] * direction[None, :]
    if pot.kind == "entropy":
        ok = np.all(W > 0, axis=1)
        ts, W = ts[ok], W[ok]
    vals = np.array([pot.value(w) for w in W]) if pot.kind == "entropy" else (
        np.sum(np.abs(W) ** pot.q, axis=1) / pot.q
    )
    k = int(np.argmin(vals))
    ref = minimize_scalar(
        lambda t: pot.value(particular + t * direction),
        bracket=(ts[max(k - 1, 0)], ts[k], ts[min(k + 1, len(ts) - 1)]),
        options={"xtol": 1e-14},
    )
    return particular + ref.x * direction


class TestLinearOracle:
    def test_q2_closed_form_example(self):
        r = closest_interpolant_linear(qnorm(2), np.array([[1.0, 1.0]]), np.array([1.0]), np.zeros(2))
        np.testing.assert_allclose(r.w_star, [0.5, 0.5], atol=1e-12)
        assert r.divergence == pytest.approx(0.25, rel=1e-12)
        assert r.method == "closed-form"

    @pytest.mark.parametrize("q", [1.1, 3.0, 10.0])
    def test_interpolating_start_is_returned(self, q):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((2, 6))
        w_feasible = rng.standard_normal(6)
        y = X @ w_feasible
        r = closest_interpolant_linear(qnorm(q), X, y, w_feasible)
        assert r.divergence <= 1e-12
        np.testing.assert_allclose(r.w_star, w_feasible, rtol=1e-6)

    @pytest.mark.parametrize(
        "pot", [qnorm(1.5), qnorm(3.0), qnorm(10.0)], ids=["q1.5", "q3", "q10"]
    )
    def test_matches_brute_force_on_line(self, pot):
        # single constraint w1 + 2 w2 = 1 from w0 = 0
        X = np.array([[1.0, 2.0]])
        y = np.array([1.0])
        r = closest_interpolant_linear(pot, X, y, np.zeros(2))
        expected = brute_force_line(pot, np.array([1.0, 0.0]), np.array([-2.0, 1.0]))
        np.testing.assert_allclose(r.w_star, expected, rtol=1e-6, atol=1e-9)

    def test_q3_frozen_value(self):
        r = closest_interpolant_linear(qnorm(3), np.array([[1.0, 2.0]]), np.array([1.0]), np.zeros(2))
        np.testing.assert_allclose(r.w_star, [0.26120387, 0.36939806], atol=1e-7)

    def test_entropy_against_brute_force(self):
        pot = entropy()
        X = np.array([[1.0, 2.0]])
        y = np.array([1.0])
        w0 = np.array([0.5, 0.5])
        r = closest_interpolant_linear(pot, X, y, w0)
        assert np.all(r.w_star > 0)
        # entropy Bregman from w0: minimize over the feasible segment
        ts = np.linspace(-0.49, 0.49, 400_001)
        W = np.array([1.0, 0.0])[None, :] + ts[:, None] * np.array([-2.0, 1.0])[None, :]
        ok = np.all(W > 1e-9, axis=1)
        vals = [pot.bregman(w, w0) for w in W[ok]]
        best = W[ok][int(np.argmin(vals))]
        np.testing.assert_allclose(r.w_star, best, atol=1e-5)

    def test_dual_solution_in_row_space(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((4, 30))
        y = X @ rng.standard_normal(30)
        w0 = 0.01 * rng.standard_normal(30)
        for pot in (qnorm(1.1), qnorm(3), qnorm(10)):
            r = closest_interpolant_linear(pot, X, y, w0)
            delta = pot.grad(r.w_star) - pot.grad(w0)
            lam, res, *_ = np.linalg.lstsq(X.T, delta, rcond=None)
            residual = np.linalg.norm(X.T @ lam - delta)
            assert residual <= 1e-8 * max(1.0, np.linalg.norm(delta))

    def test_q2_nullspace_orthogonality(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((4, 30))
        y = X @ rng.standard_normal(30)
        w0 = 0.01 * rng.standard_normal(30)
        r = closest_interpolant_linear(qnorm(2), X, y, w0)
        N = null_space(X)
        proj = N.T @ (r.w_star - w0)
        assert np.linalg.norm(proj) <= 1e-8 * max(1.0, np.linalg.norm(r.w_star - w0))

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateDataError):
            closest_interpolant_linear(qnorm(2), np.ones((3, 2)), np.ones(3), np.zeros(2))
        X = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])  # dependent rows
        with pytest.raises(DegenerateDataError):
            closest_interpolant_linear(qnorm(2), X, np.ones(2), np.zeros(3))

    def test_newton_failure_is_loud(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((4, 30))
        y = X @ rng.standard_normal(30)
        with pytest.raises(OracleError):
            closest_interpolant_linear(qnorm(3), X, y, np.zeros(30), max_iter=1)


class TestNonlinearOracle:
    def test_linear_model_matches_linear_oracle(self):
        rng = np.random.default_rng(7)
        model = LinearModel(20)
        X = rng.standard_normal((3, 20))
        y = X @ rng.standard_normal(20)
        data = Dataset(X, y)
        w0 = 0.01 * rng.standard_normal(20)
        for pot in (qnorm(2), qnorm(3)):
            lin = closest_interpolant_linear(pot, X, y, w0)
            non = closest_interpolant_nonlinear(pot, model, data, w0, feasible=lin.w_star)
            assert non.divergence == pytest.approx(lin.divergence, rel=1e-5)

    def test_feasible_start_returns_itself(self):
        model = MLP((3, 6, 1))
        data, teacher = generate_synthetic(model, 4, seed=11)
        r = closest_interpolant_nonlinear(qnorm(2), model, data, teacher, feasible=teacher)
        assert r.divergence <= 1e-10
        assert r.constraint_violation <= 1e-6

    def test_one_sided_optimality_vs_smd_endpoints(self):
        model = MLP((4, 9, 1))
        data, teacher = generate_synthetic(model, 3, seed=12)
        pot = qnorm(2)
        rng = np.random.default_rng(8)
        w0 = 0.05 * rng.standard_normal(model.p)
        endpoints = []
        for eta in (0.05, 0.02):
            res = train(pot, model, LOSS, data, w0, SMDConfig(eta=eta, loss_threshold=1e-14, max_steps=200_000))
            assert res.converged
            endpoints.append(res.w_final)
        oracle = closest_interpolant_nonlinear(pot, model, data, w0, feasible=endpoints[0])
        for w_smd in endpoints:
            assert oracle.divergence <= pot.bregman(w_smd, w0) + 1e-6

    def test_penalty_path_monotone_after_activation(self):
        model = MLP((3, 6, 1))
        data, teacher = generate_synthetic(model, 4, seed=13)
        w0 = 0.05 * np.random.default_rng(9).standard_normal(model.p)
        r = closest_interpolant_nonlinear(qnorm(2), model, data, w0)
        path = np.array(r.violation_path)
        assert len(path) > 0
        k = int(np.argmax(path))
        assert np.all(np.diff(path[k:]) <= 1e-8)

    def test_failure_is_loud(self):
        model = MLP((3, 6, 1))
        data, _ = generate_synthetic(model, 4, seed=14)
        opts = OracleOptions(mu_max_exponent=0, inner_max_iter=1, polish_max_iter=0, restarts=0)
        with pytest.raises(OracleError):
            closest_interpolant_nonlinear(qnorm(2), model, data, np.zeros(model.p), opts=opts)


class TestDistanceEstimate:
    def test_exact_for_linear(self):
        rng = np.random.default_rng(15)
        model = LinearModel(40)
        X = rng.standard_normal((5, 40))
        y = X @ rng.standard_normal(40)
        data = Dataset(X, y)
        w0 = 0.01 * rng.standard_normal(40)
        est = distance_to_manifold_estimate(model, data, w0)
        r2 = closest_interpolant_linear(qnorm(2), X, y, w0)
        exact = float((r2.w_star - w0) @ (r2.w_star - w0))
        assert est == pytest.approx(exact, rel=1e-10)

    def test_zero_at_feasible_point(self):
        model = MLP((3, 6, 1))
        data, teacher = generate_synthetic(model, 4, seed=16)
        assert distance_to_manifold_estimate(model, data, teacher) <= 1e-20

    def test_singular_gram_raises(self):
        model = LinearModel(5)
        X = np.ones((2, 5))  # duplicate rows -> singular Gram
        data = Dataset(X, np.array([1.0, 1.0]))
        with pytest.raises(DegenerateDataError):
            distance_to_manifold_estimate(model, data, np.zeros(5))

    def test_trend_down_in_p(self):
        # medians over seeds decrease as width grows at fixed n
        n = 6
        meds = []
        for h in (8, 16, 32):
            model = MLP((10, h, 1), output_bias=False)
            vals = []
            for seed in range(8):
                data, _ = generate_synthetic(model, n, seed=100 + seed)
                w0 = 0.01 * np.random.default_rng(seed).standard_normal(model.p)
                vals.append(distance_to_manifold_estimate(model, data, w0))
            meds.append(np.median(vals))
        assert meds[0] > meds[1] > meds[2]
