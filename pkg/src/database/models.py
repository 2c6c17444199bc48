from datetime import datetime
from sqlalchemy import create_engine, Column, Integer, String, Text, DateTime, Boolean, Float, ForeignKey, Enum as SQLEnum
from sqlalchemy.orm import declarative_base, relationship, sessionmaker
import enum

from src.config import config

Base = declarative_base()


class RunStatus(enum.Enum):
    """
    Lifecycle of a recorded search run
    """
    RUNNING = 'running'
    COMPLETED = 'completed'
    FAILED = 'failed'


class SearchRun(Base):
    """
    One Eigen-NAS search: the search space, the budget and the outcome
    """
    __tablename__ = 'search_runs'
    id = Column(Integer, primary_key=True, autoincrement=True)
    status = Column(SQLEnum(RunStatus), nullable=False, default=RunStatus.RUNNING, index=True)
    score_mode = Column(String(64), nullable=False)
    depth = Column(Integer, nullable=False)
    width = Column(Integer, nullable=False)
    input_dim = Column(Integer, nullable=False)
    allowed_kinds = Column(String(255), nullable=False)
    skip_policy = Column(String(32), nullable=False)
    n_samples = Column(Integer, nullable=False)
    top_k = Column(Integer, nullable=False)
    train_epochs = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False, default=0)
    n_train = Column(Integer, nullable=True)
    n_val = Column(Integer, nullable=True)

    best_activation_code = Column(String(512), nullable=True)
    best_skip_code = Column(String(64), nullable=True)
    best_val_accuracy = Column(Float, nullable=True)
    best_score = Column(Float, nullable=True)
    kendall_tau = Column(Float, nullable=True)
    config_json = Column(Text, nullable=True)
    error = Column(Text, nullable=True)

    created_at = Column(DateTime, nullable=False, default=datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)

    candidates = relationship("CandidateRecord", back_populates="run", cascade="all, delete-orphan",
                              order_by="CandidateRecord.rank")

    def __repr__(self):
        return f"<SearchRun(id={self.id}, mode='{self.score_mode}', status='{self.status.value}')>"


class CandidateRecord(Base):
    """
    A scored architecture within a search run
    """
    __tablename__ = 'candidates'
    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('search_runs.id'), nullable=False, index=True)
    sample_index = Column(Integer, nullable=False)
    rank = Column(Integer, nullable=False)
    activation_code = Column(String(512), nullable=False)
    skip_code = Column(String(64), nullable=False, default='')
    score = Column(Float, nullable=False)
    val_accuracy = Column(Float, nullable=True)
    shortlisted = Column(Boolean, default=False)
    failed = Column(Boolean, default=False)
    failure_reason = Column(Text, nullable=True)

    run = relationship("SearchRun", back_populates="candidates")

    def __repr__(self):
        return f"<CandidateRecord(id={self.id}, rank={self.rank}, arch='{self.activation_code}|{self.skip_code}')>"


def default_database_url() -> str:
    return f"sqlite:///{config.database.path}"


def create_database(database_url: str = None):
    """
    Create all tables in the database
    """
    database_url = database_url or default_database_url()
    engine = create_engine(
        database_url,
        connect_args={'check_same_thread': False} if database_url.startswith('sqlite') else {},
        echo=config.database.echo
    )
    Base.metadata.create_all(bind=engine)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return engine, SessionLocal


def get_session(database_url: str = None):
    """
    Get a database session
    """
    _, SessionLocal = create_database(database_url)
    return SessionLocal()
