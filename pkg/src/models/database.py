"""
Run ledger: training runs and their evaluation logs in SQLite
"""
import json
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Optional

from sqlalchemy import Boolean, Column, DateTime, Float, Integer, String, Text, create_engine, text
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from src.config.settings import settings
from src.models.schemas import MetricsReport, RunReport, TrainConfig

Base = declarative_base()


class TrainingRun(Base):
    """One training or baseline run"""
    __tablename__ = 'training_runs'

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String(100), unique=True, index=True, nullable=False)
    label = Column(String(100), nullable=False, index=True)
    kind = Column(String(20), nullable=False)  # captioner, knn, random
    status = Column(String(20), default='running', index=True)  # running, completed, aborted, failed
    config_json = Column(Text)

    # Outcome
    best_epoch = Column(Integer)
    best_val_score = Column(Float)
    test_normalized = Column(Float)
    aborted = Column(Boolean, default=False)
    error_message = Column(Text)

    # Timestamps
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    completed_at = Column(DateTime)

    def __repr__(self):
        return f"<TrainingRun(run_id={self.run_id}, label={self.label}, status={self.status})>"


class EvaluationLog(Base):
    """Metrics of one evaluated checkpoint"""
    __tablename__ = 'evaluation_logs'

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String(100), index=True, nullable=False)
    epoch = Column(Integer, nullable=False)
    split = Column(String(10), nullable=False)  # val, test
    train_loss = Column(Float)

    b1 = Column(Float)
    b2 = Column(Float)
    b3 = Column(Float)
    b4 = Column(Float)
    cider = Column(Float)
    sw_precision = Column(Float)
    sw_recall = Column(Float)
    diversity = Column(Float)
    normalized = Column(Float, index=True)

    recorded_at = Column(DateTime, default=datetime.utcnow, index=True)

    def __repr__(self):
        return f"<EvaluationLog(run_id={self.run_id}, epoch={self.epoch}, normalized={self.normalized})>"


@lru_cache(maxsize=8)
def get_engine(url: Optional[str] = None) -> Engine:
    url = url or settings.database_url
    if url.startswith('sqlite:///'):
        Path(url[len('sqlite:///'):]).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(url, echo=settings.debug)


def get_session_factory(url: Optional[str] = None) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))


def init_database(url: Optional[str] = None) -> None:
    """Create the ledger tables"""
    Base.metadata.create_all(bind=get_engine(url))


def verify_connection(url: Optional[str] = None) -> None:
    with get_engine(url).connect() as connection:
        connection.execute(text('SELECT 1'))


class RunLedger:
    """Writes run progress into the ledger tables through one session"""

    def __init__(self, session: Session):
        self.session = session

    def start(self, run_id: str, config: TrainConfig) -> TrainingRun:
        """Register a run; re-running the same run_id replaces its previous record and logs"""
        self.session.query(EvaluationLog).filter_by(run_id=run_id).delete()
        self.session.query(TrainingRun).filter_by(run_id=run_id).delete()
        run = TrainingRun(run_id=run_id, label=config.label, kind=config.kind,
                          config_json=json.dumps(config.model_dump(mode='json'), sort_keys=True))
        self.session.add(run)
        self.session.commit()
        return run

    def log_eval(self, run_id: str, epoch: int, split: str, metrics: MetricsReport,
                 train_loss: Optional[float] = None) -> None:
        self.session.add(EvaluationLog(run_id=run_id, epoch=epoch, split=split, train_loss=train_loss,
                                       **metrics.model_dump()))
        self.session.commit()

    def _run(self, run_id: str) -> TrainingRun:
        run = self.session.query(TrainingRun).filter_by(run_id=run_id).one_or_none()
        if run is None:
            raise KeyError(f"No training run '{run_id}' in the ledger")
        return run

    def finish(self, report: RunReport) -> None:
        run = self._run(report.run_id)
        run.status = 'aborted' if report.aborted else 'completed'
        run.aborted = report.aborted
        run.best_epoch = report.best_epoch
        best = [p.metrics.normalized for p in report.history if p.epoch == report.best_epoch]
        run.best_val_score = best[0] if best else None
        run.test_normalized = report.test_metrics.normalized if report.test_metrics else None
        run.completed_at = datetime.utcnow()
        self.session.commit()

    def fail(self, run_id: str, error: str) -> None:
        run = self._run(run_id)
        run.status = 'failed'
        run.error_message = error
        run.completed_at = datetime.utcnow()
        self.session.commit()
