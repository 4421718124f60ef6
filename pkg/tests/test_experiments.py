import numpy as np
import pytest

from smdlab.data import generate_synthetic
from smdlab.experiments import (
    ExperimentGrid,
    MirrorSpec,
    distance_matrix,
    generalization_eval,
    histogram,
    make_init,
    run_grid,
    run_single,
    theorem2_report,
)
from smdlab.models import LinearModel, MLP, SquareLoss
from smdlab.oracles import closest_interpolant_linear
from smdlab.potentials import qnorm
from smdlab.training import SMDConfig

LOSS = SquareLoss()


@pytest.fixture(scope="module")
def linear_grid_result():
    model = LinearModel(30)
    data, _ = generate_synthetic(model, 4, seed=21, n_test=50)
    grid = ExperimentGrid(
        model=model,
        loss=LOSS,
        data=data,
        inits=((101, 0.01), (102, 0.01)),
        mirrors=(MirrorSpec(qnorm(2), 0.02), MirrorSpec(qnorm(3), None)),
        base_cfg=SMDConfig(eta=1.0, loss_threshold=1e-14, max_steps=100_000),
    )
    return run_grid(grid)


class TestGrid:
    def test_single_cell_grid(self):
        model = LinearModel(12)
        data, _ = generate_synthetic(model, 3, seed=20)
        grid = ExperimentGrid(
            model=model,
            loss=LOSS,
            data=data,
            inits=((7, 0.01),),
            mirrors=(MirrorSpec(qnorm(2), 0.05),),
            base_cfg=SMDConfig(eta=1.0, loss_threshold=1e-12, max_steps=50_000),
        )
        result = run_grid(grid)
        assert len(result.runs) == 1
        assert result.runs[0].converged
        m = distance_matrix(result, qnorm(2), "by-mirror")
        assert m.values.shape == (1, 1)
        assert m.diagonal_pass

    def test_all_cells_converge(self, linear_grid_result):
        assert all(r.converged for r in linear_grid_result.runs)
        assert len(linear_grid_result.runs) == 4

    def test_grid_determinism(self, linear_grid_result):
        rerun = run_grid(linear_grid_result.grid)
        for a, b in zip(linear_grid_result.runs, rerun.runs):
            assert np.array_equal(a.result.w_final, b.result.w_final)

    def test_mistuned_cell_flagged_others_unaffected(self):
        model = LinearModel(12)
        data, _ = generate_synthetic(model, 3, seed=22)
        grid = ExperimentGrid(
            model=model,
            loss=LOSS,
            data=data,
            inits=((7, 0.01),),
            mirrors=(MirrorSpec(qnorm(2), 1e9), MirrorSpec(qnorm(2), 0.05)),
            base_cfg=SMDConfig(eta=1.0, loss_threshold=1e-12, max_steps=20_000),
        )
        with np.errstate(all="ignore"):
            result = run_grid(grid, eta_retries=0)
        flagged = result.cell(0, 0)
        healthy = result.cell(0, 1)
        assert flagged.error is not None or not flagged.converged
        assert healthy.converged

    def test_run_single_eta_retry_records_final_eta(self):
        model = LinearModel(12)
        data, _ = generate_synthetic(model, 3, seed=23)
        w0 = make_init(12, 3, 0.01)
        with np.errstate(all="ignore"):
            run = run_single(
                qnorm(2), model, LOSS, data, w0,
                SMDConfig(eta=1e4, loss_threshold=1e-12, max_steps=20_000),
                eta_retries=25,
            )
        assert run.converged
        assert run.eta < 1e4


class TestDistanceMatrix:
    def test_orientation_regression(self, linear_grid_result):
        result = linear_grid_result
        measure = qnorm(2)
        m = distance_matrix(result, measure, "full-cross")
        inits = [make_init(30, seed, scale) for seed, scale in result.grid.inits]
        # entry (r, c) is always D(final_c, init_r)
        for r in range(2):
            for c, (ci, cj) in enumerate((i, j) for i in range(2) for j in range(2)):
                run = result.cell(ci, cj)
                expected = measure.bregman(run.result.w_final, inits[r])
                assert m.values[r, c] == pytest.approx(expected, rel=1e-12)

    def test_modes_and_shapes(self, linear_grid_result):
        by_mirror = distance_matrix(linear_grid_result, qnorm(3), "by-mirror")
        assert by_mirror.values.shape == (2, 2)
        assert by_mirror.matched_cols == (1, 1)
        by_init = distance_matrix(linear_grid_result, qnorm(2), "by-init")
        assert by_init.values.shape == (2, 2)
        assert by_init.matched_cols == (0, 1)
        full = distance_matrix(linear_grid_result, qnorm(2), "full-cross")
        assert full.values.shape == (2, 4)
        assert full.matched_cols == (0, 2)

    def test_unknown_measure_rejected(self, linear_grid_result):
        with pytest.raises(ValueError):
            distance_matrix(linear_grid_result, qnorm(7), "by-mirror")

    def test_argmin_invariant_under_positive_scaling(self, linear_grid_result):
        m = distance_matrix(linear_grid_result, qnorm(2), "full-cross")
        scaled = 17.3 * m.values
        for r in range(scaled.shape[0]):
            assert int(np.nanargmin(scaled[r])) == m.argmins[r]

    def test_self_distance_floor(self, linear_grid_result):
        for measure_idx, pot in ((0, qnorm(2)), (1, qnorm(3))):
            m = distance_matrix(linear_grid_result, pot, "by-init")
            for r in range(2):
                assert m.values[r, m.matched_cols[r]] > 1e-14

    def test_nonconverged_cells_excluded(self):
        model = LinearModel(12)
        data, _ = generate_synthetic(model, 3, seed=24)
        grid = ExperimentGrid(
            model=model,
            loss=LOSS,
            data=data,
            inits=((7, 0.01), (8, 0.01)),
            mirrors=(MirrorSpec(qnorm(2), 0.05), MirrorSpec(qnorm(3), 1e9)),
            base_cfg=SMDConfig(eta=1.0, loss_threshold=1e-12, max_steps=5_000),
        )
        with np.errstate(all="ignore"):
            result = run_grid(grid, eta_retries=0)
        m = distance_matrix(result, qnorm(2), "full-cross")
        assert np.isnan(m.values[:, 1]).all() and np.isnan(m.values[:, 3]).all()
        assert all(a is not None for a in m.argmins)


class TestHistogram:
    def test_zero_vector(self):
        h = histogram(np.zeros(50), bins=10, tau=1e-3)
        assert h.near_zero_fraction == 1.0
        assert int(h.counts.sum()) == 50

    def test_half_and_half(self):
        w = np.r_[np.zeros(25), np.ones(25)]
        h = histogram(w, bins=4, tau=0.5)
        assert h.near_zero_fraction == 0.5

    def test_bins_validation(self):
        with pytest.raises(ValueError):
            histogram(np.ones(3), bins=0)


class TestGeneralization:
    def test_teacher_has_zero_test_error(self):
        model = MLP((3, 6, 1))
        data, teacher = generate_synthetic(model, 4, seed=25, n_test=64)
        rep = generalization_eval(model, teacher, data.X_test, data.y_test)
        assert rep.mse <= 1e-20

    def test_constant_predictor_matches_second_moment(self):
        model = LinearModel(5)
        rng = np.random.default_rng(3)
        X_test = rng.standard_normal((200, 5))
        y_test = rng.standard_normal(200)
        rep = generalization_eval(model, np.zeros(5), X_test, y_test)
        assert rep.mse == pytest.approx(float(np.mean(y_test**2)), rel=1e-12)

    def test_classification_accuracy(self):
        model = LinearModel(2)
        X_test = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]])
        y_test = np.array([1.0, -1.0, -1.0])
        rep = generalization_eval(model, np.array([1.0, 0.0]), X_test, y_test, classification=True)
        assert rep.accuracy == pytest.approx(2.0 / 3.0)

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            generalization_eval(LinearModel(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0))


class TestTheorem2Report:
    def test_linear_run_report(self):
        model = LinearModel(25)
        data, _ = generate_synthetic(model, 4, seed=26)
        w0 = make_init(25, 5, 0.01)
        run = run_single(
            qnorm(2), model, LOSS, data, w0,
            SMDConfig(eta=0.02, loss_threshold=1e-18, max_steps=200_000),
        )
        assert run.converged
        oracle = closest_interpolant_linear(qnorm(2), data.X, data.y, w0)
        rep = theorem2_report(run, oracle)
        assert rep.ratio <= 1e-3
        assert rep.identity_ok

    def test_partial_report_without_cross_check(self):
        model = LinearModel(25)
        data, _ = generate_synthetic(model, 4, seed=26)
        w0 = make_init(25, 5, 0.01)
        run = run_single(
            qnorm(2), model, LOSS, data, w0,
            SMDConfig(eta=0.02, loss_threshold=1e-18, max_steps=200_000),
        )
        oracle = closest_interpolant_linear(qnorm(2), data.X, data.y, w0)
        rep = theorem2_report(run, oracle, cross_check=False)
        assert rep.identity_gap is None and rep.identity_ok is None

    def test_feasible_start_gives_zero_divergences(self):
        model = MLP((3, 6, 1))
        data, teacher = generate_synthetic(model, 4, seed=27)
        run = run_single(
            qnorm(2), model, LOSS, data, teacher, SMDConfig(eta=0.01, max_steps=100)
        )
        assert run.result.steps_taken == 0
        from smdlab.oracles import closest_interpolant_nonlinear

        oracle = closest_interpolant_nonlinear(qnorm(2), model, data, teacher, feasible=teacher)
        rep = theorem2_report(run, oracle)
        assert rep.div_star_init <= 1e-10 and rep.div_star_final <= 1e-10
