import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import config
from src.agents.trainer_agent import SGDTrainer, TrainMode, evaluate_accuracy
from src.tools.activations import ActivationKind, ActivationTag
from src.tools.kernel import frobenius, min_eigenvalue, ntk_diagonal, ntk_infinite
from src.tools.network import Architecture, InitConvention, grad_norm_diag, init, ntk_empirical
from src.utils.datasets import Dataset
from src.utils.exceptions import DivergenceError, ValidationError
from src.utils.validators import require, validate_positive_int, validate_unit_rows

logger = logging.getLogger(__name__)


class SkipPolicy(Enum):
    FREE = "free"
    ALL_ON = "all_on"
    ALL_OFF = "all_off"


class ScoreMode(Enum):
    """Train-free architecture scores; the default trace score is the Eigen-NAS metric"""
    TRACE_DIAG_EMPIRICAL = "trace_diag_empirical"
    TRACE_DIAG_ANALYTIC = "trace_diag_analytic"
    MIN_EIG_ANALYTIC = "min_eig_analytic"
    MIN_EIG_EMPIRICAL = "min_eig_empirical"
    FROBENIUS_EMPIRICAL = "frobenius_empirical"

    @classmethod
    def parse(cls, name: str) -> "ScoreMode":
        aliases = {"eigen": cls.TRACE_DIAG_EMPIRICAL, "frobenius": cls.FROBENIUS_EMPIRICAL,
                   "knas": cls.FROBENIUS_EMPIRICAL}
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join([m.value for m in cls] + sorted(aliases))
            raise ValidationError(f"Unknown score mode '{name}' (expected one of: {valid})")

    @property
    def is_empirical(self) -> bool:
        return self in (ScoreMode.TRACE_DIAG_EMPIRICAL, ScoreMode.MIN_EIG_EMPIRICAL, ScoreMode.FROBENIUS_EMPIRICAL)


ALL_KINDS = tuple(ActivationTag)


@dataclass(frozen=True)
class SearchSpace:
    """Fixed depth/width/input size with free activations and skips"""
    depth: int
    width: int
    input_dim: int
    allowed_kinds: Tuple[ActivationTag, ...] = ALL_KINDS
    skip_policy: SkipPolicy = SkipPolicy.FREE
    eta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "allowed_kinds", tuple(self.allowed_kinds))
        if not self.allowed_kinds:
            raise ValidationError("allowed_kinds must not be empty")
        require(validate_positive_int(self.depth, "depth", 2))
        require(validate_positive_int(self.width, "width", 1))
        require(validate_positive_int(self.input_dim, "input_dim", 1))
        if self.depth < 3 and self.skip_policy is SkipPolicy.FREE:
            logger.warning(f"Depth {self.depth} has no skip positions; skip search is a no-op")

    def kinds(self) -> List[ActivationKind]:
        return [ActivationKind(tag, self.eta if tag is ActivationTag.LEAKY_RELU else 0.0)
                for tag in self.allowed_kinds]


@dataclass
class Candidate:
    """A sampled architecture with its score and, if trained, validation accuracy"""
    arch: Architecture
    score: float
    score_mode: ScoreMode
    index: int
    val_accuracy: Optional[float] = None
    rank: int = 0
    failed: bool = False
    failure_reason: Optional[str] = None

    def to_record(self) -> Dict:
        return {
            "rank": self.rank,
            "index": self.index,
            "arch": self.arch.activation_code,
            "skips": self.arch.skip_code,
            "score": self.score,
            "score_mode": self.score_mode.value,
            "val_accuracy": self.val_accuracy,
            "failed": self.failed,
            "failure_reason": self.failure_reason,
        }


def sample(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    """Draw activations uniformly per layer and skips per the space's policy"""
    kinds = space.kinds()
    picks = rng.integers(0, len(kinds), size=space.depth - 1)
    n_skips = max(space.depth - 2, 0)
    if space.skip_policy is SkipPolicy.ALL_ON:
        skips = (1,) * n_skips
    elif space.skip_policy is SkipPolicy.ALL_OFF:
        skips = (0,) * n_skips
    else:
        skips = tuple(int(b) for b in rng.integers(0, 2, size=n_skips))
    return Architecture(space.depth, space.width, tuple(kinds[i] for i in picks), skips, space.input_dim)


def _draw_seed(seed: int, draw: int) -> int:
    return int(np.random.SeedSequence([seed, draw]).generate_state(1)[0])


def averaged_empirical_ntk(arch: Architecture, X: np.ndarray, seed: int = 0, draws: int = None) -> np.ndarray:
    """Empirical NTK averaged over independent paper_init draws"""
    draws = draws or config.search.score_draws
    total = np.zeros((X.shape[0], X.shape[0]))
    for k in range(draws):
        total += ntk_empirical(init(arch, InitConvention.PAPER_INIT, _draw_seed(seed, k)), arch, X)
    return total / draws


def eigen_nas_score(arch: Architecture, X: np.ndarray, mode: ScoreMode = ScoreMode.TRACE_DIAG_EMPIRICAL,
                    seed: int = 0, quad_order: int = None, draws: int = None) -> float:
    """
    Train-free score of an architecture on unit-norm inputs

    Args:
        arch: Architecture to score
        X: N x d inputs with unit-norm rows
        mode: Which kernel statistic to return
        seed: Base seed of the paper_init draws (empirical modes)
        quad_order: Quadrature order (analytic modes)
        draws: Number of initialisations averaged (empirical modes)
    """
    X = np.asarray(X, dtype=np.float64)
    require(validate_unit_rows(X, config.kernel.unit_norm_tol))
    d = X.shape[1]
    draws = draws or config.search.score_draws

    if mode is ScoreMode.TRACE_DIAG_EMPIRICAL:
        total = 0.0
        for k in range(draws):
            params = init(arch, InitConvention.PAPER_INIT, _draw_seed(seed, k))
            total += float(np.sum(grad_norm_diag(params, arch, X))) / d
        return total / draws

    if mode is ScoreMode.TRACE_DIAG_ANALYTIC:
        # unit-norm rows share one diagonal value
        return X.shape[0] * ntk_diagonal(arch, quad_order) / d

    if mode is ScoreMode.MIN_EIG_ANALYTIC:
        return min_eigenvalue(ntk_infinite(X, arch, quad_order).K)

    K = averaged_empirical_ntk(arch, X, seed, draws)
    if mode is ScoreMode.MIN_EIG_EMPIRICAL:
        return min_eigenvalue(K)
    return frobenius(K)


def rank_candidates(candidates: Sequence[Candidate]) -> List[Candidate]:
    """Sort by score descending (ties by sample index) and assign ranks 1..M"""
    ordered = sorted(candidates, key=lambda c: (-c.score, c.index))
    for rank, candidate in enumerate(ordered, start=1):
        candidate.rank = rank
    return ordered


def pick_best(candidates: Sequence[Candidate]) -> Optional[Candidate]:
    """Highest validation accuracy, then higher score, then earlier sample index"""
    trained = [c for c in candidates if not c.failed and c.val_accuracy is not None]
    if not trained:
        return None
    return min(trained, key=lambda c: (-c.val_accuracy, -c.score, c.index))


class SearchAgent:
    """
    Scores sampled architectures and trains shortlisted ones

    Scoring runs over a thread pool when threads > 1; results are gathered
    in sample order so rankings do not depend on the pool.
    """

    def __init__(
        self,
        mode: ScoreMode = None,
        seed: int = 0,
        quad_order: int = None,
        draws: int = None,
        threads: int = 1,
        gamma: float = None,
        epochs: int = None
    ):
        self.mode = mode or ScoreMode.parse(config.search.score_mode)
        self.seed = seed
        self.quad_order = quad_order
        self.draws = draws or config.search.score_draws
        self.threads = max(1, threads)
        self.gamma = config.search.learning_rate if gamma is None else gamma
        self.epochs = epochs or config.search.train_epochs

    def score(self, arch: Architecture, X: np.ndarray) -> float:
        return eigen_nas_score(arch, X, self.mode, self.seed, self.quad_order, self.draws)

    def score_all(self, archs: Sequence[Architecture], X: np.ndarray) -> List[Candidate]:
        """Score every architecture; returns candidates in sample order"""
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                scores = list(pool.map(lambda a: self.score(a, X), archs))
        else:
            scores = [self.score(a, X) for a in archs]

        candidates = []
        for index, (arch, value) in enumerate(zip(archs, scores)):
            logger.info(f"Candidate {index}: {arch.encode()} {self.mode.value}={value:.6g}")
            candidates.append(Candidate(arch, float(value), self.mode, index))
        return candidates

    def train_and_validate(self, candidate: Candidate, train: Dataset, val: Dataset) -> Candidate:
        """Train one candidate (practical SGD) and record its validation accuracy"""
        trainer = SGDTrainer(self.gamma, TrainMode.PRACTICAL, self.epochs, _draw_seed(self.seed, 1000 + candidate.index))
        try:
            result = trainer.train(candidate.arch, train)
            candidate.val_accuracy = evaluate_accuracy(result.params, candidate.arch, val)
            logger.info(f"Candidate {candidate.index} validation accuracy {candidate.val_accuracy:.4f}")
        except DivergenceError as e:
            candidate.failed = True
            candidate.val_accuracy = None
            candidate.failure_reason = f"diverged at iteration {e.iteration}"
            logger.warning(f"Candidate {candidate.index} ({candidate.arch.encode()}) diverged: {e}")
        return candidate

    def train_all(self, candidates: Sequence[Candidate], train: Dataset, val: Dataset) -> List[Candidate]:
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(lambda c: self.train_and_validate(c, train, val), candidates))
        return [self.train_and_validate(c, train, val) for c in candidates]


def random_baseline(space: SearchSpace, train: Dataset, val: Dataset, k: int, seed: int = 0,
                    gamma: float = None, epochs: int = None) -> List[Candidate]:
    """Train k uniformly sampled architectures without scoring them"""
    rng = np.random.default_rng([seed, 7])
    agent = SearchAgent(ScoreMode.TRACE_DIAG_ANALYTIC, seed, gamma=gamma, epochs=epochs)
    candidates = [Candidate(sample(space, rng), 0.0, agent.mode, i) for i in range(k)]
    return agent.train_all(candidates, train, val)
