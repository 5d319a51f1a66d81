"""Descent on the approximation objective: gradients, floors, traces."""
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from smoa import (
    AdapterInit,
    ConfigurationError,
    DimensionError,
    FitConfig,
    FitProblem,
    Matrix,
    NumericalError,
    build_plan,
    finite_difference_check,
    fit,
    gradient,
    init_lora,
    init_smoa,
    load_adapter,
    loss,
    lora_update,
    make_witness,
    save_trace,
    smoa_update,
    tail_energy,
    update,
)

from conftest import random_matrix


class TestProblemValidation:
    def test_smoa_needs_plan(self, rng):
        with pytest.raises(ConfigurationError):
            FitProblem(random_matrix(rng, 4, 4), "smoa", 2)

    def test_smoa_plan_shape_must_match(self, rng):
        plan = build_plan(random_matrix(rng, 4, 4), 2)
        with pytest.raises(DimensionError):
            FitProblem(random_matrix(rng, 6, 6), "smoa", 2, plan)

    def test_k_divides_r(self, rng):
        plan = build_plan(random_matrix(rng, 4, 4), 2)
        with pytest.raises(ConfigurationError):
            FitProblem(random_matrix(rng, 4, 4), "smoa", 3, plan)

    def test_unknown_kind(self, rng):
        with pytest.raises(ConfigurationError):
            FitProblem(random_matrix(rng, 4, 4), "prefix", 2)

    def test_config_guards(self):
        with pytest.raises(ConfigurationError):
            FitConfig(step_size=0.0)
        with pytest.raises(ConfigurationError):
            FitConfig(grad_tol=-1.0)


class TestLossAndGradient:
    def test_lora_loss_is_half_squared_residual(self, rng):
        target = random_matrix(rng, 5, 4)
        problem = FitProblem(target, "lora", 2)
        adapter = init_lora(5, 4, 2, AdapterInit("gaussian", seed=2))
        residual = lora_update(adapter) - target
        assert loss(problem, adapter) == pytest.approx(0.5 * residual.norm() ** 2, rel=1e-12)

    def test_smoa_loss_counts_off_block_energy(self, rng):
        """The update cannot touch off-diagonal blocks, so even a perfect
        block fit keeps that energy in the loss."""
        w = random_matrix(rng, 6, 6)
        plan = build_plan(w, 3)
        problem = FitProblem(w, "smoa", 3, plan)
        adapter = init_smoa(plan, 3, AdapterInit("gaussian", seed=5))
        residual = smoa_update(adapter) - w
        assert loss(problem, adapter) == pytest.approx(0.5 * residual.norm() ** 2, rel=1e-12)

    def test_zero_update_loss_is_half_target_energy(self, rng):
        target = random_matrix(rng, 4, 4)
        problem = FitProblem(target, "lora", 2)
        adapter = init_lora(4, 4, 2, AdapterInit("zero-update", seed=3))
        assert loss(problem, adapter) == pytest.approx(0.5 * target.norm() ** 2, rel=1e-12)

    def test_lora_gradient_closed_form(self, rng):
        target = random_matrix(rng, 5, 6)
        problem = FitProblem(target, "lora", 3)
        adapter = init_lora(5, 6, 3, AdapterInit("gaussian", seed=9))
        (da, db), = gradient(problem, adapter)
        residual = adapter.b.data @ adapter.a.data - target.data
        assert_allclose(da.data, adapter.b.data.T @ residual, rtol=1e-12)
        assert_allclose(db.data, residual @ adapter.a.data.T, rtol=1e-12)

    def test_gradient_matches_finite_differences_lora(self, rng):
        problem = FitProblem(random_matrix(rng, 6, 5), "lora", 2)
        adapter = init_lora(6, 5, 2, AdapterInit("gaussian", seed=11))
        assert finite_difference_check(problem, adapter) < 1e-5

    def test_gradient_matches_finite_differences_smoa(self, rng):
        w = random_matrix(rng, 6, 6)
        plan = build_plan(w, 2)
        problem = FitProblem(w, "smoa", 4, plan)
        adapter = init_smoa(plan, 4, AdapterInit("gaussian", seed=13))
        assert finite_difference_check(problem, adapter) < 1e-5

    def test_gradient_zero_at_exact_fit(self, rng):
        """At a perfectly fitted witness the analytic gradient vanishes."""
        from smoa import smoa_exact_fit

        plan = build_plan(random_matrix(rng, 8, 8), 2)
        witness = make_witness(plan, rho=2, seed=17)
        problem = FitProblem(witness.target, "smoa", 4, plan)
        adapter = smoa_exact_fit(witness)
        grads = gradient(problem, adapter)
        total = sum(da.norm() ** 2 + db.norm() ** 2 for da, db in grads)
        assert total < 1e-18 * witness.target.norm() ** 2

    def test_adapter_kind_mismatch(self, rng):
        problem = FitProblem(random_matrix(rng, 4, 4), "lora", 2)
        plan = build_plan(random_matrix(rng, 4, 4), 2)
        block = init_smoa(plan, 2, AdapterInit("gaussian"))
        with pytest.raises(ConfigurationError):
            loss(problem, block)

    def test_adapter_from_different_plan(self, rng):
        w = random_matrix(rng, 4, 4)
        plan = build_plan(w, 2)
        other = build_plan(random_matrix(rng, 4, 4), 2)
        problem = FitProblem(w, "smoa", 2, plan)
        adapter = init_smoa(other, 2, AdapterInit("gaussian"))
        if other.p_out == plan.p_out and other.p_in == plan.p_in:
            pytest.skip("random plans coincided")
        with pytest.raises(ConfigurationError):
            loss(problem, adapter)


class TestFit:
    def test_accepted_losses_never_increase(self, rng):
        target = random_matrix(rng, 6, 6)
        problem = FitProblem(target, "lora", 2)
        trace = fit(problem, AdapterInit("gaussian", seed=21), FitConfig(max_steps=200))
        losses = [s.loss for s in trace.steps]
        assert all(a >= b for a, b in zip(losses, losses[1:]))

    def test_lora_floor_holds_and_is_approached(self, rng):
        """Descent cannot beat the spectral floor and from spectral init
        it sits on it from step zero."""
        target = random_matrix(rng, 8, 8)
        problem = FitProblem(target, "lora", 3)
        trace = fit(problem, AdapterInit("spectral"), FitConfig(max_steps=100))
        assert trace.floor == pytest.approx(0.5 * tail_energy(target, 3), rel=1e-12)
        assert trace.final_loss >= trace.floor - 1e-9
        assert trace.final_loss == pytest.approx(trace.floor, rel=1e-6)

    def test_spectral_init_is_stationary(self, rng):
        target = random_matrix(rng, 6, 6)
        problem = FitProblem(target, "lora", 2)
        trace = fit(problem, AdapterInit("spectral"), FitConfig(max_steps=50))
        assert trace.step_count <= 1
        assert trace.steps[0].loss == pytest.approx(trace.floor, rel=1e-9)

    def test_witness_fit_reaches_exactness(self, rng):
        """Block descent drives the witness loss to numerical zero."""
        plan = build_plan(random_matrix(rng, 8, 8), 2)
        witness = make_witness(plan, rho=2, seed=31)
        problem = FitProblem(witness.target, "smoa", 4, plan)
        trace = fit(problem, AdapterInit("zero-update", seed=31),
                    FitConfig(step_size=2e-2, max_steps=30000, grad_tol=1e-12))
        assert trace.relative_loss < 1e-6

    def test_lora_on_witness_stalls_at_gap(self, rng):
        """Global descent on the same witness bottoms out at the
        spectral gap, not at zero."""
        from smoa import lora_gap

        plan = build_plan(random_matrix(rng, 8, 8), 2)
        witness = make_witness(plan, rho=2, seed=37)
        problem = FitProblem(witness.target, "lora", 4)
        trace = fit(problem, AdapterInit("spectral"), FitConfig(max_steps=2000))
        assert trace.final_loss >= 0.5 * lora_gap(witness, 4) - 1e-9
        assert trace.final_loss == pytest.approx(0.5 * lora_gap(witness, 4), rel=1e-6)

    def test_zero_target_smoa(self, rng):
        plan = build_plan(random_matrix(rng, 4, 4), 2)
        problem = FitProblem(Matrix.zeros(4, 4), "smoa", 2, plan)
        trace = fit(problem, AdapterInit("zero-update", seed=1), FitConfig(max_steps=100))
        assert trace.relative_loss == 0.0
        assert trace.converged

    def test_trace_records_step_zero(self, rng):
        problem = FitProblem(random_matrix(rng, 4, 4), "lora", 2)
        trace = fit(problem, AdapterInit("gaussian", seed=2), FitConfig(max_steps=0))
        assert trace.steps[0].step == 0
        assert len(trace.steps) == 1
        assert not trace.converged

    def test_divergent_step_raises_numerical_error(self, rng):
        target = random_matrix(rng, 4, 4)
        problem = FitProblem(target, "lora", 2)
        # large enough that the candidate loss overflows to inf and no
        # halvings remain to rescue it
        config = FitConfig(step_size=1e160, max_steps=10, max_halvings=0)
        with pytest.raises(NumericalError, match="step"):
            fit(problem, AdapterInit("gaussian", seed=3), config)

    def test_halvings_rescue_oversized_steps(self, rng):
        """With backtracking enabled the same oversized step is halved
        into an accepted one instead of diverging."""
        target = random_matrix(rng, 4, 4)
        problem = FitProblem(target, "lora", 2)
        config = FitConfig(step_size=1.0, max_steps=200, max_halvings=10)
        trace = fit(problem, AdapterInit("gaussian", seed=3), config)
        losses = [s.loss for s in trace.steps]
        assert all(a >= b for a, b in zip(losses, losses[1:]))
        assert trace.final_loss < losses[0]

    def test_deterministic_given_seed(self, rng):
        target = random_matrix(rng, 5, 5)
        problem = FitProblem(target, "lora", 2)
        first = fit(problem, AdapterInit("gaussian", seed=8), FitConfig(max_steps=50))
        second = fit(problem, AdapterInit("gaussian", seed=8), FitConfig(max_steps=50))
        assert first.final_loss == second.final_loss
        assert np.array_equal(first.adapter.a.data, second.adapter.a.data)

    def test_spectral_init_rejected_for_smoa(self, rng):
        w = random_matrix(rng, 4, 4)
        plan = build_plan(w, 2)
        problem = FitProblem(w, "smoa", 2, plan)
        with pytest.raises(ConfigurationError):
            fit(problem, AdapterInit("spectral"), FitConfig(max_steps=1))

    def test_spectral_init_needs_r_within_m(self, rng):
        problem = FitProblem(random_matrix(rng, 4, 4), "lora", 6)
        with pytest.raises(ConfigurationError):
            fit(problem, AdapterInit("spectral"), FitConfig(max_steps=1))

    def test_smoa_floor_is_none(self, rng):
        w = random_matrix(rng, 4, 4)
        plan = build_plan(w, 2)
        trace = fit(FitProblem(w, "smoa", 2, plan), AdapterInit("zero-update"), FitConfig(max_steps=5))
        assert trace.floor is None


class TestFiniteDifference:
    def test_over_random_instances(self, rng):
        worst = 0.0
        for trial in range(5):
            d = int(rng.integers(3, 7))
            target = random_matrix(rng, d, d)
            problem = FitProblem(target, "lora", 2)
            adapter = init_lora(d, d, 2, AdapterInit("gaussian", seed=trial))
            worst = max(worst, finite_difference_check(problem, adapter))
        assert worst < 1e-5

    def test_step_guard(self, rng):
        problem = FitProblem(random_matrix(rng, 4, 4), "lora", 2)
        adapter = init_lora(4, 4, 2, AdapterInit("gaussian"))
        with pytest.raises(ConfigurationError):
            finite_difference_check(problem, adapter, step=0.0)


class TestTraceFiles:
    def test_csv_and_summary(self, rng, tmp_path):
        target = random_matrix(rng, 4, 4)
        problem = FitProblem(target, "lora", 2)
        trace = fit(problem, AdapterInit("gaussian", seed=6), FitConfig(max_steps=20))
        csv_path = tmp_path / "trace.csv"
        summary_path = tmp_path / "summary.json"
        save_trace(trace, csv_path, summary_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "step,loss,grad_norm"
        assert len(lines) == len(trace.steps) + 1
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == trace.steps[0].loss
        summary = json.loads(summary_path.read_text())
        assert summary["final_loss"] == trace.final_loss
        assert summary["relative_loss"] == trace.relative_loss
        assert summary["steps"] == trace.step_count
        assert summary["converged"] == trace.converged
        assert summary["seed"] == 6
        assert summary["config"]["step_size"] == 1e-2
