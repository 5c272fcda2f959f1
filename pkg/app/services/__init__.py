from app.services.runs import RunService
