"""Tests for candidate choice, the outer loop, restarts and sequential fits."""

import dataclasses

import numpy as np
from numpy.testing import assert_allclose
import pytest

from src.models import selector as selector_module
from src.models.families import working_response
from src.models.likelihood import candidate_deltas
from src.models.selector import (
    DELTA_GUARD,
    InitStrategy,
    SelectionMode,
    SelectorConfig,
    choose_candidate,
    correlated_neighbors,
    initialize_gamma,
    multi_run,
    run,
    sequential_fit,
)
from src.models.structures import MixtureAssignment
from src.simulation.scenarios import ScenarioSpec, generate
from src.utils.exceptions import ContractViolation, ValidationError
from src.utils.seed_utils import make_rng

from .conftest import make_dataset


def _fit(data, **settings):
    config = SelectorConfig(**settings)
    return run(data, config, initialize_gamma(data, config)), config


class TestChooseCandidate:
    def test_greedy_takes_largest(self):
        scores = np.array([[0.0, 1.0, 2.0], [0.0, 5.0, 0.0]])
        assert choose_candidate(scores, scores > 0, "greedy", make_rng(0)) == (1, 0)

    def test_greedy_ties_prefer_small_k_then_label_order(self):
        scores = np.array([[3.0, 0.0, 3.0], [3.0, 0.0, 0.0]])
        chosen = choose_candidate(scores, scores > 0, SelectionMode.GREEDY, make_rng(0))
        assert chosen == (0, -1)

    def test_empty_set_is_a_contract_violation(self):
        scores = np.zeros((2, 3))
        with pytest.raises(ContractViolation):
            choose_candidate(scores, scores > 0, "greedy", make_rng(0))

    def test_weighted_draws_proportionally(self):
        scores = np.array([[1.0, 0.0, 0.0], [0.0, -2.0, 3.0]])
        rng = make_rng(7)
        draws = [
            choose_candidate(scores, scores > 0, "weighted", rng) for _ in range(4000)
        ]
        assert set(draws) == {(0, -1), (1, 1)}
        share = sum(d == (1, 1) for d in draws) / len(draws)
        assert share == pytest.approx(0.75, abs=0.03)

    def test_weighted_is_reproducible(self):
        scores = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        first = [choose_candidate(scores, scores > 0, "weighted", make_rng(3))]
        second = [choose_candidate(scores, scores > 0, "weighted", make_rng(3))]
        assert first == second


class TestInitializeGamma:
    def test_all_null(self, normal_data):
        config = SelectorConfig(init_strategy=InitStrategy.ALL_NULL)
        assert initialize_gamma(normal_data, config).L == 0

    def test_user_provided(self, normal_data):
        config = SelectorConfig(init_strategy="user_provided")
        gamma = initialize_gamma(normal_data, config, [1, 0, 0, 0, 0, 0, 0, -1])
        assert gamma.counts == (1, 6, 1)

    def test_user_provided_needs_a_vector(self, normal_data):
        config = SelectorConfig(init_strategy="user_provided")
        with pytest.raises(ValidationError, match="needs a gamma"):
            initialize_gamma(normal_data, config)
        with pytest.raises(ValidationError, match="expected 8"):
            initialize_gamma(normal_data, config, [0, 1])

    def test_config_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="extra"):
            SelectorConfig(speed=3)


class TestRun:
    def test_recovers_support(self, normal_data):
        result, _ = _fit(normal_data)
        assert result.converged
        assert {0, 3} <= set(result.selected)
        assert result.gamma_final.gamma[0] == 1
        assert result.gamma_final.gamma[3] == -1
        assert result.effects["Z1"] > 0.0
        assert result.effects["Z4"] < 0.0
        assert set(result.selected_names) <= set(result.refit_summary.columns)

    def test_trace_increases_by_more_than_delta(self, normal_data):
        start = MixtureAssignment.zeros(normal_data.K).with_label(5, 1)
        config = SelectorConfig(delta=0.5, init_strategy="user_provided")
        result = run(normal_data, config, start)
        assert np.all(np.diff(result.loglik_trace) > config.delta)
        assert all(m.delta > config.delta for m in result.moves)

    def test_move_whose_refit_loses_the_gain_is_rejected(
        self, normal_data, monkeypatch
    ):
        real_m_step = selector_module.m_step

        def losing(data, working, gamma, theta, **settings):
            fit = real_m_step(data, working, gamma, theta, **settings)
            if gamma.gamma[3] == -1:
                return dataclasses.replace(fit, loglik=fit.loglik - 1e3)
            return fit

        monkeypatch.setattr(selector_module, "m_step", losing)
        start = MixtureAssignment.from_labels(normal_data.K, {0: 1})
        config = SelectorConfig(init_strategy="user_provided")
        result = run(normal_data, config, start)
        assert result.gamma_final.gamma[3] != -1
        assert not any(m.k == 3 and m.new == -1 for m in result.moves)
        assert any("Z4 -> -1: refitted gain" in w for w in result.warnings)
        assert np.all(np.diff(result.loglik_trace) > config.delta)

    def test_no_state_is_visited_twice(self, normal_data):
        config = SelectorConfig(mode="weighted", rng_seed=5)
        start = initialize_gamma(normal_data, config)
        result = run(normal_data, config, start)
        gamma, seen = start, {start.key()}
        for move in result.moves:
            assert int(gamma.gamma[move.k]) == move.old
            gamma = gamma.with_label(move.k, move.new)
            assert gamma.key() not in seen
            seen.add(gamma.key())
        assert gamma == result.gamma_final

    def test_final_state_is_stationary(self, normal_data):
        result, config = _fit(normal_data)
        working = working_response(normal_data.spec, normal_data.y, normal_data.y)
        deltas = candidate_deltas(
            normal_data, working, result.gamma_final, result.theta_final
        )
        assert np.all(deltas <= config.delta + DELTA_GUARD)

    def test_exact_probabilities_keep_all_null_fixed(self, normal_data):
        result, _ = _fit(normal_data, init_strategy="all_null")
        assert result.converged
        assert result.moves == ()
        assert result.selected == []

    def test_probability_floor_lets_all_null_move(self, normal_data):
        result, _ = _fit(normal_data, init_strategy="all_null", prob_floor=0.01)
        assert {0, 3} <= set(result.selected)

    def test_iteration_cap(self, normal_data):
        result, _ = _fit(
            normal_data, init_strategy="all_null", prob_floor=0.01, max_outer_iter=1
        )
        assert not result.converged
        assert result.n_outer == 1
        assert len(result.moves) == 1
        assert any("max_outer_iter" in w for w in result.warnings)

    def test_never_worse_than_start(self, normal_data):
        start = MixtureAssignment.from_labels(normal_data.K, {0: 1, 3: -1, 6: 1})
        config = SelectorConfig(init_strategy="user_provided")
        result = run(normal_data, config, start)
        assert result.loglik >= result.loglik_trace[0]

    def test_rejects_wrong_length(self, normal_data):
        with pytest.raises(ValidationError):
            run(normal_data, SelectorConfig(), MixtureAssignment.zeros(3))

    def test_weighted_runs_are_reproducible(self, normal_data):
        config = SelectorConfig(mode="weighted", rng_seed=11)
        start = initialize_gamma(normal_data, config)
        first = run(normal_data, config, start)
        second = run(normal_data, config, start)
        assert first.loglik_trace == second.loglik_trace
        assert first.gamma_final == second.gamma_final

    def test_binomial(self, binomial_data):
        result, _ = _fit(binomial_data)
        assert result.converged
        assert {0, 2} <= set(result.selected)
        assert result.theta_final.phi == 1.0

    def test_poisson(self, poisson_data):
        result, _ = _fit(poisson_data)
        assert result.converged
        assert {0, 1} <= set(result.selected)
        assert result.refit_summary.deviance is not None


class TestMultiRun:
    def test_single_restart_equals_run(self, normal_data):
        config = SelectorConfig()
        restarts = multi_run(normal_data, config, workers=1)
        single = run(normal_data, config, initialize_gamma(normal_data, config))
        assert len(restarts.results) == 1
        assert restarts.best.loglik_trace == single.loglik_trace
        assert restarts.best.restart_index == 0

    def test_weighted_restarts(self, normal_data):
        config = SelectorConfig(mode="weighted", n_restarts=3, rng_seed=2)
        first = multi_run(normal_data, config, workers=1)
        second = multi_run(normal_data, config, workers=1)
        aics = [r.refit_summary.aic for r in first.results]
        assert first.best_index == int(np.argmin(aics))
        assert [r.selected for r in first.results] == [
            r.selected for r in second.results
        ]
        assert set(first.frequencies) == set(first.union)
        assert all(0.0 < f <= 1.0 for f in first.frequencies.values())
        assert first.union_refit.columns[0] == "intercept"

    def test_restarts_agree_on_a_unimodal_instance(self, rng):
        n = 100
        Z = rng.uniform(-1.0, 1.0, size=(n, 10))
        y = 1.0 + 2.0 * Z[:, 0] - 1.8 * Z[:, 3] + rng.normal(0.0, 0.2, size=n)
        data = make_dataset(y, Z)
        config = SelectorConfig(
            mode="weighted",
            n_restarts=10,
            rng_seed=8,
            init_strategy="all_null",
            prob_floor=0.01,
        )
        restarts = multi_run(data, config, workers=1)
        assert len(restarts.results) == 10
        assert all(r.selected == [0, 3] for r in restarts.results)
        assert restarts.frequencies == {0: 1.0, 3: 1.0}


class TestSequentialFit:
    def test_rounds_refer_to_original_columns(self, normal_data):
        result = sequential_fit(normal_data, SelectorConfig(), max_rounds=2)
        assert result.gamma_final.K == normal_data.K
        assert {"Z1", "Z4"} <= set(result.selected_names)
        assert set(result.rounds) == set(result.selected_names)
        assert all(r in (1, 2) for r in result.rounds.values())
        assert all(m.round in (1, 2) for m in result.moves)
        assert all(0 <= m.k < normal_data.K for m in result.moves)

    def test_recovers_small_effects_next_to_large_ones(self):
        data, truth = generate(ScenarioSpec(id="N9", N=100, K=100, rng_seed=4), 0)
        result = sequential_fit(data, SelectorConfig(), max_rounds=3)
        assert truth <= set(result.selected)
        assert {data.z_names[k] for k in truth} <= set(result.rounds)

    def test_pure_noise_stops_after_an_empty_round(self, rng):
        Z = rng.uniform(-1.0, 1.0, size=(60, 12))
        data = make_dataset(rng.normal(size=60), Z)
        config = SelectorConfig(init_strategy="all_null")
        result = sequential_fit(data, config, max_rounds=5)
        assert result.selected == []
        assert result.rounds == {}
        assert result.moves == ()
        assert result.converged

    def test_rejects_zero_rounds(self, normal_data):
        with pytest.raises(ValidationError):
            sequential_fit(normal_data, SelectorConfig(), max_rounds=0)


class TestCorrelatedNeighbors:
    @pytest.fixture()
    def data(self, rng):
        n = 50
        Z = rng.normal(size=(n, 4))
        Z[:, 1] = Z[:, 0] + rng.normal(0.0, 0.1, size=n)
        Z[:, 2] = 1.0
        return make_dataset(rng.normal(size=n), Z)

    def test_reports_correlated_columns(self, data):
        gamma = MixtureAssignment.from_labels(data.K, {0: 1})
        report = correlated_neighbors(data, gamma, 0.75)
        assert [n.index for n in report.neighbors[0]] == [1]
        assert report.neighbors[0][0].correlation > 0.75
        assert report.excluded == ("Z3",)
        assert report.relevant == frozenset({0, 1})
        assert report.edges()[0][:2] == ("Z1", "Z2")

    def test_threshold_is_inclusive(self, data):
        gamma = MixtureAssignment.from_labels(data.K, {0: 1})
        corr = np.corrcoef(data.Z[:, 0], data.Z[:, 3])[0, 1]
        report = correlated_neighbors(data, gamma, abs(corr))
        assert 3 in [n.index for n in report.neighbors[0]]
        assert_allclose(
            [n.correlation for n in report.neighbors[0] if n.index == 3], [corr]
        )

    def test_perturbed_copies_keep_their_sign(self):
        data, _ = generate(ScenarioSpec(id="N3", N=100, K=20, rng_seed=1), 0)
        gamma = MixtureAssignment.from_labels(data.K, {0: 1})
        report = correlated_neighbors(data, gamma, 0.85)
        found = {n.name: n.correlation for n in report.neighbors[0]}
        assert set(found) == {"Z2", "Z3", "Z4"}
        assert found["Z2"] > 0.85
        assert found["Z3"] < -0.95
        assert found["Z4"] < -0.85

    def test_nothing_selected(self, data):
        report = correlated_neighbors(data, MixtureAssignment.zeros(data.K), 0.5)
        assert report.edges() == []

    def test_rejects_bad_threshold(self, data):
        with pytest.raises(ValidationError):
            correlated_neighbors(data, MixtureAssignment.zeros(data.K), 1.5)
