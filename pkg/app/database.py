from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, DeclarativeBase

from app.config import settings


def _connect_args(url: str) -> dict:
    # SQLite connections are shared across the FastAPI threadpool
    return {"check_same_thread": False} if url.startswith("sqlite") else {}


# The engine manages connections to the run registry
engine = create_engine(
    settings.database_url,
    echo=settings.debug,  # Log SQL queries when debug=True
    connect_args=_connect_args(settings.database_url),
)

# Session factory for registry reads and writes
SessionLocal = sessionmaker(
    autocommit=False,
    autoflush=False,
    bind=engine,
)


# Base class for all registry models
class Base(DeclarativeBase):
    pass


def init_db() -> None:
    """Create registry tables if they do not exist yet."""
    import app.models  # noqa: F401  (registers the models on Base)

    Base.metadata.create_all(bind=engine)


def get_db():
    """
    Dependency that provides a database session.
    Automatically closes the session when the request is done.
    """
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
