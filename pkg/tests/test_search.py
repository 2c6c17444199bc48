from collections import Counter

import numpy as np
import pytest

from oracles import unit_rows
from src.agents import search_agent
from src.agents.search_agent import (
    Candidate,
    ScoreMode,
    SearchAgent,
    SearchSpace,
    SkipPolicy,
    averaged_empirical_ntk,
    eigen_nas_score,
    pick_best,
    random_baseline,
    rank_candidates,
    sample,
)
from src.tools.activations import RELU, SIGMOID, ActivationTag
from src.tools.kernel import frobenius, min_eigenvalue, ntk_infinite, trace_over_d
from src.tools.network import Architecture
from src.utils.exceptions import ValidationError


def make_candidate(index, score, val_accuracy=None, failed=False):
    arch = Architecture.uniform(RELU, 3, 4, 2)
    return Candidate(arch, score, ScoreMode.TRACE_DIAG_EMPIRICAL, index, val_accuracy=val_accuracy, failed=failed)


class TestSearchSpace:

    def test_empty_kinds(self):
        with pytest.raises(ValidationError):
            SearchSpace(4, 8, 2, allowed_kinds=())

    def test_all_on(self):
        space = SearchSpace(5, 8, 2, skip_policy=SkipPolicy.ALL_ON)
        rng = np.random.default_rng(0)
        assert all(sample(space, rng).skips == (1, 1, 1) for _ in range(20))

    def test_all_off(self):
        space = SearchSpace(4, 8, 2, skip_policy=SkipPolicy.ALL_OFF)
        assert sample(space, np.random.default_rng(1)).skips == (0, 0)

    def test_single_kind(self):
        space = SearchSpace(5, 8, 2, allowed_kinds=(ActivationTag.RELU,))
        arch = sample(space, np.random.default_rng(2))
        assert arch.activations == (RELU,) * 4

    def test_leaky_slope_from_space(self):
        space = SearchSpace(3, 8, 2, allowed_kinds=(ActivationTag.LEAKY_RELU,), eta=0.3)
        arch = sample(space, np.random.default_rng(3))
        assert all(k.eta == 0.3 for k in arch.activations)

    def test_uniform_kinds(self):
        space = SearchSpace(4, 8, 2)
        rng = np.random.default_rng(4)
        layers = [Counter() for _ in range(3)]
        for _ in range(10_000):
            for counter, kind in zip(layers, sample(space, rng).activations):
                counter[kind.tag] += 1
        for counter in layers:
            assert len(counter) == 5
            assert all(0.17 <= count / 10_000 <= 0.23 for count in counter.values())

    def test_free_skips_are_fair_coins(self):
        space = SearchSpace(4, 8, 2)
        rng = np.random.default_rng(5)
        bits = np.array([sample(space, rng).skips for _ in range(4000)])
        np.testing.assert_allclose(bits.mean(axis=0), 0.5, atol=0.04)


class TestScoreMode:

    @pytest.mark.parametrize("name, mode", [
        ("eigen", ScoreMode.TRACE_DIAG_EMPIRICAL),
        ("KNAS", ScoreMode.FROBENIUS_EMPIRICAL),
        ("min_eig_analytic", ScoreMode.MIN_EIG_ANALYTIC),
    ])
    def test_parse(self, name, mode):
        assert ScoreMode.parse(name) is mode

    def test_unknown(self):
        with pytest.raises(ValidationError):
            ScoreMode.parse("naswot")

    def test_empirical_flag(self):
        assert ScoreMode.FROBENIUS_EMPIRICAL.is_empirical
        assert not ScoreMode.TRACE_DIAG_ANALYTIC.is_empirical


class TestScores:

    @pytest.mark.parametrize("skip", [0, 1])
    def test_ordering_chain(self, skip):
        X = unit_rows(32, 8, seed=1)
        arch = Architecture(4, 32, (RELU, SIGMOID, RELU), (skip, skip), 8)
        low = eigen_nas_score(arch, X, ScoreMode.MIN_EIG_EMPIRICAL, seed=3)
        mid = eigen_nas_score(arch, X, ScoreMode.TRACE_DIAG_EMPIRICAL, seed=3)
        high = eigen_nas_score(arch, X, ScoreMode.FROBENIUS_EMPIRICAL, seed=3)
        assert low <= mid * (1 + 1e-12)
        assert mid <= high * (1 + 1e-12)

    def test_trace_score_matches_averaged_kernel(self):
        X = unit_rows(10, 4, seed=2)
        arch = Architecture.uniform(SIGMOID, 3, 16, 4, skip=1)
        K = averaged_empirical_ntk(arch, X, seed=5, draws=2)
        score = eigen_nas_score(arch, X, ScoreMode.TRACE_DIAG_EMPIRICAL, seed=5, draws=2)
        assert score == pytest.approx(trace_over_d(K, 4), rel=1e-12)
        assert eigen_nas_score(arch, X, ScoreMode.FROBENIUS_EMPIRICAL, seed=5, draws=2) == pytest.approx(frobenius(K))

    def test_analytic_trace_ordering(self):
        X = unit_rows(64, 16, seed=3)
        relu = Architecture.uniform(RELU, 5, 1, 16, skip=1)
        sigmoid = Architecture.uniform(SIGMOID, 5, 1, 16, skip=0)
        mode = ScoreMode.TRACE_DIAG_ANALYTIC
        assert eigen_nas_score(relu, X, mode) > eigen_nas_score(sigmoid, X, mode)

    def test_analytic_min_eig(self):
        X = unit_rows(12, 4, seed=4)
        arch = Architecture.uniform(RELU, 3, 1, 4)
        expected = min_eigenvalue(ntk_infinite(X, arch).K)
        assert eigen_nas_score(arch, X, ScoreMode.MIN_EIG_ANALYTIC) == expected

    def test_deterministic(self):
        X = unit_rows(16, 4, seed=5)
        arch = Architecture.uniform(RELU, 4, 16, 4, skip=1)
        for mode in ScoreMode:
            assert eigen_nas_score(arch, X, mode, seed=2) == eigen_nas_score(arch, X, mode, seed=2)

    def test_trace_score_never_forms_kernel(self, monkeypatch):
        def forbidden(*args, **kwargs):
            raise AssertionError("an N x N kernel was materialised")

        monkeypatch.setattr(search_agent, "ntk_empirical", forbidden)
        monkeypatch.setattr(search_agent, "ntk_infinite", forbidden)
        X = unit_rows(300, 4, seed=6)
        arch = Architecture.uniform(RELU, 3, 8, 4)
        assert eigen_nas_score(arch, X, ScoreMode.TRACE_DIAG_EMPIRICAL) > 0.0
        assert eigen_nas_score(arch, X, ScoreMode.TRACE_DIAG_ANALYTIC) > 0.0

    def test_requires_unit_rows(self):
        with pytest.raises(ValidationError):
            eigen_nas_score(Architecture.uniform(RELU, 3, 4, 2), np.ones((3, 2)))


class TestRanking:

    def test_rank_by_score_then_index(self):
        ranked = rank_candidates([make_candidate(0, 1.0), make_candidate(1, 3.0), make_candidate(2, 3.0)])
        assert [c.index for c in ranked] == [1, 2, 0]
        assert [c.rank for c in ranked] == [1, 2, 3]

    def test_pick_best_tie_break(self):
        candidates = [
            make_candidate(0, 2.0, 0.9),
            make_candidate(1, 5.0, 0.9),
            make_candidate(2, 5.0, 0.9),
            make_candidate(3, 9.0, 0.8),
            make_candidate(4, 99.0, None, failed=True),
        ]
        assert pick_best(candidates).index == 1

    def test_pick_best_none(self):
        assert pick_best([make_candidate(0, 1.0, None, failed=True)]) is None


class TestSearchAgent:

    def test_threads_do_not_change_scores(self):
        X = unit_rows(16, 4, seed=7)
        space = SearchSpace(4, 8, 4)
        rng = np.random.default_rng(0)
        archs = [sample(space, rng) for _ in range(6)]
        serial = SearchAgent(ScoreMode.TRACE_DIAG_EMPIRICAL, seed=1).score_all(archs, X)
        pooled = SearchAgent(ScoreMode.TRACE_DIAG_EMPIRICAL, seed=1, threads=3).score_all(archs, X)
        assert [c.score for c in serial] == [c.score for c in pooled]
        assert [c.index for c in pooled] == list(range(6))

    def test_train_and_validate(self, search_data):
        train, val = search_data
        agent = SearchAgent(seed=0, gamma=0.5, epochs=2)
        candidate = Candidate(Architecture.uniform(RELU, 3, 16, 8), 1.0, agent.mode, 0)
        agent.train_and_validate(candidate, train, val)
        assert 0.0 <= candidate.val_accuracy <= 1.0
        assert not candidate.failed

    def test_divergence_marks_failure(self, search_data):
        train, val = search_data
        agent = SearchAgent(seed=0, gamma=1e9, epochs=1)
        candidate = agent.train_and_validate(Candidate(Architecture.uniform(RELU, 3, 16, 8), 1.0, agent.mode, 0),
                                             train, val)
        assert candidate.failed and candidate.val_accuracy is None
        assert candidate.failure_reason.startswith("diverged at iteration")

    def test_random_baseline(self, search_data):
        train, val = search_data
        trained = random_baseline(SearchSpace(3, 8, 8), train, val, k=3, seed=2, gamma=0.5, epochs=1)
        assert len(trained) == 3
        assert all(c.val_accuracy is not None for c in trained)
