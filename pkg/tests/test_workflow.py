import numpy as np
import pytest

from src.agents.search_agent import ScoreMode, SearchSpace, random_baseline
from src.agents.tracking_agent import RunTracker
from src.database.models import RunStatus
from src.utils.datasets import LabelRule, SynthSpec, generate, train_val_split
from src.utils.exceptions import SearchError, ValidationError
from src.utils.ranking import kendall_null_threshold, kendall_tau
from src.workflows.eigen_nas_graph import EigenNASWorkflow, eigen_nas, run_eigen_nas_workflow

FAST = dict(mode=ScoreMode.TRACE_DIAG_ANALYTIC, train_budget=1, gamma=0.5)


@pytest.fixture
def space():
    return SearchSpace(depth=3, width=8, input_dim=8)


class TestEigenNAS:

    def test_single_sample(self, space, search_data):
        train, val = search_data
        best, ranked = eigen_nas(space, train, val, M=1, k=1, seed=3, **FAST)
        assert len(ranked) == 1
        assert best == ranked[0]
        assert best.rank == 1 and best.val_accuracy is not None

    def test_ranked_by_score(self, space, search_data):
        train, val = search_data
        result = run_eigen_nas_workflow(space, train, val, M=8, k=3, seed=4, **FAST)
        scores = [c.score for c in result.ranked]
        assert scores == sorted(scores, reverse=True)
        assert [c.rank for c in result.ranked] == list(range(1, 9))
        assert result.shortlist == result.ranked[:3]
        assert all(c.val_accuracy is None for c in result.ranked[3:])
        assert result.best in result.shortlist

    def test_k_equals_m_is_validation_search(self, space, search_data):
        train, val = search_data
        best, ranked = eigen_nas(space, train, val, M=4, k=4, seed=5, **FAST)
        assert best.val_accuracy == max(c.val_accuracy for c in ranked if not c.failed)

    def test_deterministic(self, space, search_data):
        train, val = search_data
        first = run_eigen_nas_workflow(space, train, val, M=6, k=2, seed=6, mode=ScoreMode.TRACE_DIAG_EMPIRICAL,
                                       train_budget=1, gamma=0.5, draws=1)
        second = run_eigen_nas_workflow(space, train, val, M=6, k=2, seed=6, mode=ScoreMode.TRACE_DIAG_EMPIRICAL,
                                        train_budget=1, gamma=0.5, draws=1)
        assert [c.to_record() for c in first.ranked] == [c.to_record() for c in second.ranked]

    def test_threads_match_serial(self, space, search_data):
        train, val = search_data
        serial = run_eigen_nas_workflow(space, train, val, M=6, k=2, seed=7, **FAST)
        pooled = run_eigen_nas_workflow(space, train, val, M=6, k=2, seed=7, threads=3, **FAST)
        assert [c.to_record() for c in serial.ranked] == [c.to_record() for c in pooled.ranked]

    @pytest.mark.parametrize("M, k", [(3, 0), (3, 4)])
    def test_invalid_k(self, space, search_data, M, k):
        train, val = search_data
        with pytest.raises(ValidationError):
            EigenNASWorkflow().run(space, train, val, M, k)

    def test_dimension_mismatch(self, search_data):
        train, val = search_data
        with pytest.raises(ValidationError):
            eigen_nas(SearchSpace(3, 8, 4), train, val, M=2, k=1, **FAST)

    def test_all_diverged(self, space, search_data):
        train, val = search_data
        with pytest.raises(SearchError):
            eigen_nas(space, train, val, M=3, k=2, mode=ScoreMode.TRACE_DIAG_ANALYTIC, train_budget=1, gamma=1e9)

    def test_progress_callback(self, space, search_data):
        train, val = search_data
        steps = []
        run_eigen_nas_workflow(space, train, val, M=2, k=1, progress_callback=lambda **kw: steps.append(kw["step"]),
                               **FAST)
        assert steps[0] == "sample_architectures"
        assert steps[-1] == "complete"


class TestTracking:

    def test_completed_run_is_recorded(self, space, search_data, database_url):
        train, val = search_data
        tracker = RunTracker(database_url)
        result = run_eigen_nas_workflow(space, train, val, M=5, k=2, seed=1, tracker=tracker, **FAST)
        assert result.run_id is not None

        summary = tracker.get_run_summary(result.run_id)
        assert summary.status == RunStatus.COMPLETED.value
        assert summary.n_candidates == 5
        assert summary.n_trained == 2
        assert summary.best_arch == f"{result.best.arch.activation_code}|{result.best.arch.skip_code}"
        assert summary.best_val_accuracy == pytest.approx(result.best.val_accuracy)

    def test_failed_run_is_recorded(self, space, search_data, database_url):
        train, val = search_data
        tracker = RunTracker(database_url)
        with pytest.raises(SearchError):
            eigen_nas(space, train, val, M=2, k=1, mode=ScoreMode.TRACE_DIAG_ANALYTIC, train_budget=1, gamma=1e9,
                      tracker=tracker)
        runs = tracker.list_runs(status=RunStatus.FAILED)
        assert len(runs) == 1
        assert runs[0].error


@pytest.mark.slow
def test_score_selection_beats_random_pick():
    wins = 0
    for seed in range(5):
        data = generate(SynthSpec(768, 16, label_rule=LabelRule.LINEAR_TEACHER, margin=0.2, seed=seed))
        train, val = train_val_split(data, 1.0 / 3.0, seed=seed)
        space = SearchSpace(depth=4, width=64, input_dim=16)
        result = run_eigen_nas_workflow(space, train, val, M=30, k=5, seed=seed, train_budget=20, gamma=0.5)
        chosen = [c.val_accuracy or 0.0 for c in result.shortlist]
        baseline = [c.val_accuracy or 0.0 for c in random_baseline(space, train, val, 5, seed, gamma=0.5, epochs=20)]
        if np.mean(chosen) >= np.mean(baseline):
            wins += 1
    assert wins >= 4


@pytest.mark.slow
def test_analytic_score_ranks_trained_accuracy():
    threshold = kendall_null_threshold(30)
    significant = 0
    for seed in range(5):
        data = generate(SynthSpec(768, 16, label_rule=LabelRule.LINEAR_TEACHER, margin=0.2, seed=seed))
        train, val = train_val_split(data, 1.0 / 3.0, seed=seed)
        space = SearchSpace(depth=4, width=64, input_dim=16)
        result = run_eigen_nas_workflow(space, train, val, M=30, k=30, seed=seed, mode=ScoreMode.TRACE_DIAG_ANALYTIC,
                                        train_budget=1, gamma=0.1)
        trained = [c for c in result.ranked if c.val_accuracy is not None]
        tau = kendall_tau([c.score for c in trained], [c.val_accuracy for c in trained])
        assert tau == pytest.approx(result.kendall_tau)
        if abs(tau) > threshold:
            significant += 1
    assert significant >= 3
