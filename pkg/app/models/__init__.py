# Import all models here so they're registered with SQLAlchemy
from app.models.run import Run
from app.models.audit_entry import AuditEntry
