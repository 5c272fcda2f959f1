from app.routers.runs import router as runs_router
from app.routers.scenarios import router as scenarios_router
