import os
import tempfile

# Point the registry and run outputs at a scratch directory before app.config is imported
_SCRATCH = tempfile.mkdtemp(prefix="hypdamp-tests-")
os.environ["HYPDAMP_DATABASE_URL"] = f"sqlite:///{os.path.join(_SCRATCH, 'registry.db')}"
os.environ["HYPDAMP_OUTPUT_DIR"] = os.path.join(_SCRATCH, "runs")
os.environ["HYPDAMP_JOBS"] = "1"

import pytest  # noqa: E402

from app.database import SessionLocal, init_db  # noqa: E402


@pytest.fixture
def output_dir(tmp_path):
    return str(tmp_path / "out")


@pytest.fixture
def db():
    init_db()
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()
