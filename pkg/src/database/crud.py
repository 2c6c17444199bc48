from datetime import datetime
from typing import Any, Dict, List, Optional
from sqlalchemy.orm import Session
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy import desc
import logging

from .models import (
    SearchRun,
    CandidateRecord,
    RunStatus
)
from src.utils.validators import validate_positive_int

logger = logging.getLogger(__name__)


class SearchRunCRUD:
    """
    CRUD operations for SearchRun model
    """

    @staticmethod
    def create(session: Session, score_mode: str, depth: int, width: int, input_dim: int, allowed_kinds: str,
               skip_policy: str, n_samples: int, top_k: int, train_epochs: int, seed: int = 0,
               n_train: Optional[int] = None, n_val: Optional[int] = None,
               config_json: Optional[str] = None) -> Optional[SearchRun]:
        """
        Create a new search run record with validation
        """
        try:
            for value, name in ((depth, "depth"), (width, "width"), (n_samples, "n_samples"), (top_k, "top_k")):
                is_valid, error = validate_positive_int(value, name)
                if not is_valid:
                    logger.error(f"Invalid search run: {error}")
                    return None
            if top_k > n_samples:
                logger.error(f"Invalid search run: top_k {top_k} exceeds n_samples {n_samples}")
                return None

            run = SearchRun(score_mode=score_mode,
                            depth=depth,
                            width=width,
                            input_dim=input_dim,
                            allowed_kinds=allowed_kinds,
                            skip_policy=skip_policy,
                            n_samples=n_samples,
                            top_k=top_k,
                            train_epochs=train_epochs,
                            seed=seed,
                            n_train=n_train,
                            n_val=n_val,
                            config_json=config_json,
                            status=RunStatus.RUNNING)
            session.add(run)
            session.commit()
            session.refresh(run)

            logger.info(f'Created search run {run.id} ({score_mode}, M={n_samples}, k={top_k})')
            return run

        except SQLAlchemyError as e:
            session.rollback()
            logger.error(f"Database error creating search run: {e}")
            return None

    @staticmethod
    def get_by_id(session: Session, run_id: int) -> Optional[SearchRun]:
        """
        Get search run by ID
        """
        try:
            return session.query(SearchRun).filter(SearchRun.id == run_id).first()
        except SQLAlchemyError as e:
            logger.error(f"Error fetching search run {run_id}: {e}")
            return None

    @staticmethod
    def complete(session: Session, run_id: int, best_activation_code: Optional[str], best_skip_code: Optional[str],
                 best_val_accuracy: Optional[float], best_score: Optional[float],
                 kendall_tau: Optional[float] = None) -> Optional[SearchRun]:
        """
        Mark a run completed and store its winner
        """
        try:
            run = session.query(SearchRun).filter(SearchRun.id == run_id).first()
            if not run:
                logger.warning(f"Search run {run_id} not found for completion")
                return None

            run.status = RunStatus.COMPLETED
            run.best_activation_code = best_activation_code
            run.best_skip_code = best_skip_code
            run.best_val_accuracy = best_val_accuracy
            run.best_score = best_score
            run.kendall_tau = kendall_tau
            run.completed_at = datetime.utcnow()
            session.commit()
            session.refresh(run)
            logger.info(f"Completed search run {run_id}")
            return run

        except SQLAlchemyError as e:
            session.rollback()
            logger.error(f"Error completing search run {run_id}: {e}")
            return None

    @staticmethod
    def mark_failed(session: Session, run_id: int, error: str) -> bool:
        """
        Mark a run failed with its error message
        """
        try:
            run = session.query(SearchRun).filter(SearchRun.id == run_id).first()
            if not run:
                return False
            run.status = RunStatus.FAILED
            run.error = error
            run.completed_at = datetime.utcnow()
            session.commit()
            logger.info(f"Marked search run {run_id} failed")
            return True

        except SQLAlchemyError as e:
            session.rollback()
            logger.error(f"Error marking search run {run_id} failed: {e}")
            return False

    @staticmethod
    def list_recent(session: Session, limit: int = 20, status: Optional[RunStatus] = None) -> List[SearchRun]:
        """
        List runs, newest first
        """
        try:
            query = session.query(SearchRun)
            if status is not None:
                query = query.filter(SearchRun.status == status)
            return query.order_by(desc(SearchRun.created_at), desc(SearchRun.id)).limit(limit).all()

        except SQLAlchemyError as e:
            logger.error(f"Error listing search runs: {e}")
            return []

    @staticmethod
    def delete(session: Session, run_id: int) -> bool:
        """
        Delete a run and its candidates
        """
        try:
            run = session.query(SearchRun).filter(SearchRun.id == run_id).first()
            if not run:
                return False
            session.delete(run)
            session.commit()
            logger.info(f"Deleted search run {run_id}")
            return True

        except SQLAlchemyError as e:
            session.rollback()
            logger.error(f"Error deleting search run {run_id}: {e}")
            return False


class CandidateCRUD:
    """
    CRUD operations for CandidateRecord model
    """

    @staticmethod
    def bulk_create(session: Session, run_id: int, records: List[Dict[str, Any]],
                    shortlist_size: int = 0) -> int:
        """
        Store ranked candidate records (as produced by Candidate.to_record)

        Returns:
            Number of rows written, 0 on failure
        """
        try:
            rows = [
                CandidateRecord(run_id=run_id,
                                sample_index=record["index"],
                                rank=record["rank"],
                                activation_code=record["arch"],
                                skip_code=record["skips"],
                                score=record["score"],
                                val_accuracy=record.get("val_accuracy"),
                                shortlisted=record["rank"] <= shortlist_size,
                                failed=bool(record.get("failed", False)),
                                failure_reason=record.get("failure_reason"))
                for record in records
            ]
            session.add_all(rows)
            session.commit()
            logger.info(f"Stored {len(rows)} candidates for run {run_id}")
            return len(rows)

        except (SQLAlchemyError, KeyError) as e:
            session.rollback()
            logger.error(f"Error storing candidates for run {run_id}: {e}")
            return 0

    @staticmethod
    def get_by_run(session: Session, run_id: int) -> List[CandidateRecord]:
        """
        Candidates of one run in rank order
        """
        try:
            return (session.query(CandidateRecord)
                    .filter(CandidateRecord.run_id == run_id)
                    .order_by(CandidateRecord.rank)
                    .all())
        except SQLAlchemyError as e:
            logger.error(f"Error fetching candidates for run {run_id}: {e}")
            return []

    @staticmethod
    def get_trained(session: Session, run_id: int) -> List[CandidateRecord]:
        """
        Shortlisted candidates that finished training
        """
        try:
            return (session.query(CandidateRecord)
                    .filter(CandidateRecord.run_id == run_id,
                            CandidateRecord.val_accuracy.isnot(None),
                            CandidateRecord.failed == False)
                    .order_by(CandidateRecord.rank)
                    .all())
        except SQLAlchemyError as e:
            logger.error(f"Error fetching trained candidates for run {run_id}: {e}")
            return []
