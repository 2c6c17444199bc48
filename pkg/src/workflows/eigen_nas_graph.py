import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, TypedDict

import numpy as np
from langgraph.graph import StateGraph, END

from src.agents.search_agent import (
    Candidate,
    ScoreMode,
    SearchAgent,
    SearchSpace,
    pick_best,
    rank_candidates,
    sample,
)
from src.agents.tracking_agent import RunTracker
from src.config import config
from src.tools.network import Architecture
from src.utils.datasets import Dataset
from src.utils.exceptions import SearchError, ValidationError
from src.utils.ranking import kendall_tau

logger = logging.getLogger(__name__)


class SearchStatus(Enum):
    INITIALIZED = "initialized"
    SAMPLED = "sampled"
    SCORED = "scored"
    SHORTLISTED = "shortlisted"
    TRAINED = "trained"
    COMPLETED = "completed"
    FAILED = "failed"


class SearchState(TypedDict):
    space: SearchSpace
    train: Dataset
    val: Dataset
    n_samples: int
    top_k: int
    seed: int
    architectures: List[Architecture]
    ranked: List[Candidate]
    shortlist: List[Candidate]
    best: Optional[Candidate]
    kendall_tau: Optional[float]
    tracking_result: Optional[Dict]
    status: str
    error: Optional[str]
    exception: Optional[Exception]
    metadata: Dict


@dataclass
class EigenNASResult:
    best: Candidate
    ranked: List[Candidate]
    shortlist: List[Candidate]
    kendall_tau: Optional[float] = None
    run_id: Optional[int] = None
    metadata: Dict = field(default_factory=dict)


class EigenNASWorkflow:
    """
    Sample -> score -> keep top-k -> train -> pick the best on validation

    Numpy state is not checkpointed; the graph is compiled without a saver.
    """

    def __init__(
        self,
        agent: Optional[SearchAgent] = None,
        tracker: Optional[RunTracker] = None,
        progress_callback: Optional[Callable] = None
    ):
        self.agent = agent or SearchAgent()
        self.tracker = tracker
        self.progress_callback = progress_callback
        self.workflow = self._build_workflow()
        self.app = self.workflow.compile()

    def _report_progress(self, step: str, progress: float, status: str):
        """Report progress to callback if provided"""
        if self.progress_callback:
            try:
                self.progress_callback(step=step, progress=progress, status=status)
            except Exception as e:
                logger.warning(f"Progress callback error: {e}")

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(SearchState)
        workflow.add_node('sample_architectures', self._sample_node)
        workflow.add_node('score_candidates', self._score_node)
        workflow.add_node('select_top_k', self._select_node)
        workflow.add_node('train_shortlist', self._train_node)
        workflow.add_node('pick_best', self._pick_best_node)
        workflow.add_node('record_run', self._record_run_node)
        workflow.add_node('handle_failure', self._handle_failure_node)

        workflow.set_entry_point('sample_architectures')
        workflow.add_edge('sample_architectures', 'score_candidates')
        workflow.add_conditional_edges(
            'score_candidates', self._scoring_succeeded, {
                'continue': 'select_top_k',
                'fail': 'handle_failure'
            }
        )
        workflow.add_edge('select_top_k', 'train_shortlist')
        workflow.add_conditional_edges(
            'train_shortlist', self._any_trained, {
                'pick': 'pick_best',
                'fail': 'handle_failure'
            }
        )
        workflow.add_conditional_edges(
            'pick_best', self._should_record, {
                'record': 'record_run',
                'skip': END
            }
        )
        workflow.add_edge('record_run', END)
        workflow.add_conditional_edges(
            'handle_failure', self._should_record, {
                'record': 'record_run',
                'skip': END
            }
        )
        return workflow

    def _sample_node(self, state: SearchState) -> SearchState:
        self._report_progress('sample_architectures', 0.05, f"Sampling {state['n_samples']} architectures")
        rng = np.random.default_rng(state['seed'])
        state['architectures'] = [sample(state['space'], rng) for _ in range(state['n_samples'])]
        state['status'] = SearchStatus.SAMPLED.value
        logger.info(f"Sampled {len(state['architectures'])} architectures")
        return state

    def _score_node(self, state: SearchState) -> SearchState:
        self._report_progress('score_candidates', 0.2, f"Scoring with {self.agent.mode.value}")
        try:
            candidates = self.agent.score_all(state['architectures'], state['train'].X)
            state['ranked'] = rank_candidates(candidates)
            state['status'] = SearchStatus.SCORED.value
        except Exception as e:
            logger.error(f"Scoring failed: {e}")
            state['status'] = SearchStatus.FAILED.value
            state['error'] = f"Scoring failed: {e}"
            state['exception'] = e
        return state

    def _select_node(self, state: SearchState) -> SearchState:
        state['shortlist'] = state['ranked'][:state['top_k']]
        state['status'] = SearchStatus.SHORTLISTED.value
        state['metadata']['shortlist'] = [c.arch.encode() for c in state['shortlist']]
        logger.info(f"Kept top {len(state['shortlist'])} of {len(state['ranked'])} candidates")
        return state

    def _train_node(self, state: SearchState) -> SearchState:
        self._report_progress('train_shortlist', 0.5, f"Training {len(state['shortlist'])} candidates")
        self.agent.train_all(state['shortlist'], state['train'], state['val'])
        failed = [c for c in state['shortlist'] if c.failed]
        state['metadata']['n_failed'] = len(failed)
        if len(failed) == len(state['shortlist']):
            state['status'] = SearchStatus.FAILED.value
            state['error'] = f"All {len(failed)} shortlisted candidates diverged during training"
        else:
            state['status'] = SearchStatus.TRAINED.value
        return state

    def _pick_best_node(self, state: SearchState) -> SearchState:
        self._report_progress('pick_best', 0.9, "Selecting on validation accuracy")
        state['best'] = pick_best(state['shortlist'])
        trained = [c for c in state['shortlist'] if c.val_accuracy is not None]
        if len(trained) >= 2:
            state['kendall_tau'] = kendall_tau([c.score for c in trained], [c.val_accuracy for c in trained])
        state['status'] = SearchStatus.COMPLETED.value
        logger.info(f"Best architecture {state['best'].arch.encode()} "
                    f"(val accuracy {state['best'].val_accuracy:.4f}, score {state['best'].score:.6g})")
        self._report_progress('complete', 1.0, "Complete")
        return state

    def _record_run_node(self, state: SearchState) -> SearchState:
        try:
            result = self.tracker.record_search(
                space=state['space'],
                mode=self.agent.mode.value,
                ranked=state['ranked'],
                best=state.get('best'),
                top_k=state['top_k'],
                train_epochs=self.agent.epochs,
                seed=state['seed'],
                n_train=state['train'].n,
                n_val=state['val'].n,
                kendall_tau=state.get('kendall_tau'),
                settings={
                    'gamma': self.agent.gamma,
                    'score_draws': self.agent.draws,
                    'quad_order': self.agent.quad_order,
                    'eta': state['space'].eta
                },
                error=state.get('error')
            )
            state['tracking_result'] = {
                'success': result.success,
                'run_id': result.run_id,
                'n_candidates': result.n_candidates,
                'recorded_at': datetime.utcnow().isoformat()
            }
        except Exception as e:
            # a storage problem never discards a finished search
            logger.error(f"Recording failed: {e}")
            state['tracking_result'] = {'success': False, 'error': str(e)}
        return state

    def _handle_failure_node(self, state: SearchState) -> SearchState:
        logger.error(f"Search failed: {state.get('error', 'Unknown error')}")
        state['status'] = SearchStatus.FAILED.value
        return state

    def _scoring_succeeded(self, state: SearchState) -> str:
        if state.get('status') == SearchStatus.FAILED.value or not state.get('ranked'):
            return "fail"
        return "continue"

    def _any_trained(self, state: SearchState) -> str:
        if state.get('status') == SearchStatus.FAILED.value:
            return "fail"
        return "pick"

    def _should_record(self, state: SearchState) -> str:
        if self.tracker is None or not state.get('ranked'):
            return "skip"
        return "record"

    def run(
        self,
        space: SearchSpace,
        train: Dataset,
        val: Dataset,
        n_samples: int,
        top_k: int,
        seed: int = 0
    ) -> SearchState:
        if not 1 <= top_k <= n_samples:
            raise ValidationError(f"Need 1 <= k <= M, got k={top_k}, M={n_samples}")
        if train.d != space.input_dim or val.d != space.input_dim:
            raise ValidationError(f"Data dimension does not match search space input_dim {space.input_dim}")

        initial_state: SearchState = {
            'space': space,
            'train': train,
            'val': val,
            'n_samples': n_samples,
            'top_k': top_k,
            'seed': seed,
            'architectures': [],
            'ranked': [],
            'shortlist': [],
            'best': None,
            'kendall_tau': None,
            'tracking_result': None,
            'status': SearchStatus.INITIALIZED.value,
            'error': None,
            'exception': None,
            'metadata': {'score_mode': self.agent.mode.value, 'train_epochs': self.agent.epochs}
        }

        logger.info(f"Starting Eigen-NAS search: M={n_samples}, k={top_k}, mode={self.agent.mode.value}")
        final_state = self.app.invoke(initial_state)
        logger.info(f"Search finished with status: {final_state['status']}")
        return final_state


def eigen_nas(
    space: SearchSpace,
    train: Dataset,
    val: Dataset,
    M: int = None,
    k: int = None,
    mode: ScoreMode = None,
    train_budget: int = None,
    seed: int = 0,
    gamma: float = None,
    quad_order: int = None,
    draws: int = None,
    threads: int = 1,
    tracker: Optional[RunTracker] = None
) -> Tuple[Candidate, List[Candidate]]:
    """
    Train-free architecture search

    Args:
        space: Search space to sample from
        train: Training data (its inputs are also the scoring inputs)
        val: Validation data used to pick among the top-k
        M: Number of sampled architectures
        k: Number of top-scored candidates to train
        mode: Score used for ranking
        train_budget: Training epochs per shortlisted candidate

    Returns:
        (best candidate, all candidates ranked by score)

    Raises:
        SearchError: every shortlisted candidate diverged
    """
    result = run_eigen_nas_workflow(space, train, val, M, k, mode, train_budget, seed, gamma, quad_order,
                                    draws, threads, tracker)
    return result.best, result.ranked


def run_eigen_nas_workflow(
    space: SearchSpace,
    train: Dataset,
    val: Dataset,
    M: int = None,
    k: int = None,
    mode: ScoreMode = None,
    train_budget: int = None,
    seed: int = 0,
    gamma: float = None,
    quad_order: int = None,
    draws: int = None,
    threads: int = 1,
    tracker: Optional[RunTracker] = None,
    progress_callback: Optional[Callable] = None
) -> EigenNASResult:
    M = M or config.search.n_samples
    k = k or min(config.search.top_k, M)
    agent = SearchAgent(mode, seed, quad_order, draws, threads, gamma, train_budget)
    workflow = EigenNASWorkflow(agent, tracker, progress_callback)
    state = workflow.run(space, train, val, M, k, seed)

    if state['status'] == SearchStatus.FAILED.value:
        if state.get('exception') is not None:
            raise state['exception']
        raise SearchError(state.get('error') or "Search failed")

    tracking = state.get('tracking_result') or {}
    return EigenNASResult(
        best=state['best'],
        ranked=state['ranked'],
        shortlist=state['shortlist'],
        kendall_tau=state.get('kendall_tau'),
        run_id=tracking.get('run_id'),
        metadata=dict(state['metadata'])
    )
