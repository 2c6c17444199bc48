import json
import os
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from sqlalchemy.orm import joinedload

from src.agents.search_agent import Candidate, SearchSpace
from src.config import config
from src.database.models import SearchRun, RunStatus, create_database
from src.database.crud import SearchRunCRUD, CandidateCRUD

logger = logging.getLogger(__name__)


@dataclass
class RunStats:
    run_id: int
    status: str
    score_mode: str
    n_candidates: int
    n_trained: int
    n_failed: int
    best_arch: Optional[str]
    best_val_accuracy: Optional[float]
    mean_shortlist_accuracy: Optional[float]
    kendall_tau: Optional[float]


@dataclass
class TrackingResult:
    success: bool
    run_id: Optional[int]
    n_candidates: int
    error: Optional[str]


class RunTracker:
    """Stores search runs and their ranked candidates in SQLite"""

    def __init__(self, database_url: Optional[str] = None):
        if database_url is None:
            os.makedirs(os.path.dirname(config.database.path) or ".", exist_ok=True)
        self.engine, self.SessionLocal = create_database(database_url)

    def record_search(
            self,
            space: SearchSpace,
            mode: str,
            ranked: Sequence[Candidate],
            best: Optional[Candidate],
            top_k: int,
            train_epochs: int,
            seed: int = 0,
            n_train: Optional[int] = None,
            n_val: Optional[int] = None,
            kendall_tau: Optional[float] = None,
            settings: Optional[Dict] = None,
            error: Optional[str] = None
    ) -> TrackingResult:
        if not ranked:
            return TrackingResult(success=False, run_id=None, n_candidates=0, error="No candidates to record")

        session = self.SessionLocal()
        try:
            run = SearchRunCRUD.create(
                session=session,
                score_mode=mode,
                depth=space.depth,
                width=space.width,
                input_dim=space.input_dim,
                allowed_kinds=",".join(tag.value for tag in space.allowed_kinds),
                skip_policy=space.skip_policy.value,
                n_samples=len(ranked),
                top_k=top_k,
                train_epochs=train_epochs,
                seed=seed,
                n_train=n_train,
                n_val=n_val,
                config_json=json.dumps(settings, sort_keys=True) if settings else None
            )
            if run is None:
                return TrackingResult(success=False, run_id=None, n_candidates=0, error="Could not create run")

            written = CandidateCRUD.bulk_create(session, run.id, [c.to_record() for c in ranked], top_k)

            if error is not None or best is None:
                SearchRunCRUD.mark_failed(session, run.id, error or "No candidate finished training")
            else:
                SearchRunCRUD.complete(
                    session,
                    run.id,
                    best_activation_code=best.arch.activation_code,
                    best_skip_code=best.arch.skip_code,
                    best_val_accuracy=best.val_accuracy,
                    best_score=best.score,
                    kendall_tau=kendall_tau
                )

            logger.info(f"Recorded search run {run.id} with {written} candidates")
            return TrackingResult(success=True, run_id=run.id, n_candidates=written, error=None)

        except Exception as e:
            session.rollback()
            logger.error(f"Failed to record search run: {e}")
            return TrackingResult(success=False, run_id=None, n_candidates=0, error=str(e))
        finally:
            session.close()

    def get_run_summary(self, run_id: int) -> Optional[RunStats]:
        session = self.SessionLocal()
        try:
            run = SearchRunCRUD.get_by_id(session, run_id)
            if run is None:
                return None

            candidates = CandidateCRUD.get_by_run(session, run_id)
            trained = [c.val_accuracy for c in candidates if c.val_accuracy is not None and not c.failed]
            best_arch = (f"{run.best_activation_code}|{run.best_skip_code}"
                         if run.best_activation_code is not None else None)

            return RunStats(
                run_id=run.id,
                status=run.status.value,
                score_mode=run.score_mode,
                n_candidates=len(candidates),
                n_trained=len(trained),
                n_failed=sum(1 for c in candidates if c.failed),
                best_arch=best_arch,
                best_val_accuracy=run.best_val_accuracy,
                mean_shortlist_accuracy=(sum(trained) / len(trained)) if trained else None,
                kendall_tau=run.kendall_tau
            )

        except Exception as e:
            logger.error(f"Failed to summarise run {run_id}: {e}")
            return None
        finally:
            session.close()

    def list_runs(self, status: Optional[RunStatus] = None, limit: int = 20) -> List[SearchRun]:
        session = self.SessionLocal()
        try:
            # eager load candidates to avoid DetachedInstanceError
            query = session.query(SearchRun).options(joinedload(SearchRun.candidates))
            if status:
                query = query.filter(SearchRun.status == status)
            return query.order_by(SearchRun.created_at.desc(), SearchRun.id.desc()).limit(limit).all()

        except Exception as e:
            logger.error(f"Failed to list runs: {e}")
            return []
        finally:
            session.close()
