from typing import Dict, Iterable

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy import (
    Column,
    Float,
    Integer,
    String,
    UniqueConstraint,
)


Base = declarative_base()


# Stored beta of samples without a free energy.
NO_BETA = -1.0


class OracleSample(Base):
    """One disorder sample of one model and size."""
    __tablename__ = "oracle_samples"
    __table_args__ = (UniqueConstraint("model", "n", "seed", "beta"),)

    id = Column(Integer, primary_key=True, autoincrement=True)
    model = Column(String, index=True)
    n = Column(Integer, index=True)
    # Seeds reach 2^64, past sqlite's signed integers.
    seed = Column(String)
    beta = Column(Float)
    ground_state = Column(Float)
    free_energy = Column(Float, nullable=True)
    method = Column(String)


def _engine(path: str):
    return create_engine(f"sqlite:///{path}", echo=False)


def init_db(path: str) -> Session:
    """
    Connect to the sqlite file at path and if necessary initialise the schema.
    """
    engine = _engine(path)

    Base.metadata.create_all(engine)

    return sessionmaker(bind=engine)()


def drop_all(path: str) -> None:
    """
    Delete all structures in this database.
    """
    Base.metadata.drop_all(_engine(path))


def load_samples(session: Session, model: str, n: int, beta: float) -> Dict[int, OracleSample]:
    """Stored samples of one (model, N, beta), keyed by seed."""
    rows = session.query(OracleSample).filter(
        OracleSample.model == model, OracleSample.n == n, OracleSample.beta == beta
    ).all()
    return {int(row.seed): row for row in rows}


def store_samples(session: Session, rows: Iterable[OracleSample]) -> None:
    session.add_all(list(rows))
    session.commit()
