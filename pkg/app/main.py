from fastapi import FastAPI

from app import __version__
from app.database import init_db
from app.log import configure_logging
from app.routers import runs_router, scenarios_router

# Create the FastAPI application instance
app = FastAPI(
    title="hypdamp",
    description="Spectral simulator and estimate verifier for the strongly damped wave equation",
    version=__version__,
)

# Register routers
app.include_router(scenarios_router)
app.include_router(runs_router)


@app.get("/health")
def health_check():
    """
    Health check endpoint.
    Used to verify the service is running.
    """
    return {"status": "healthy", "version": __version__}


@app.on_event("startup")
def on_startup():
    """
    Runs when the application starts.
    Configures logging and creates the run registry tables.
    """
    configure_logging()
    init_db()
