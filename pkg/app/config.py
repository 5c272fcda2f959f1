from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Engine settings.
    Values are loaded from HYPDAMP_* environment variables or the .env file.
    """

    model_config = SettingsConfigDict(env_prefix="HYPDAMP_", env_file=".env", extra="ignore")

    # Storage
    database_url: str = "sqlite:///./hypdamp.db"
    output_dir: str = "runs"

    # Execution
    jobs: int = 1  # Worker processes for per-mode and per-cell maps

    # Logging
    log_level: str = "INFO"
    debug: bool = False  # Echo SQL when True

    # Mode solver
    solver_tol: float = 1e-10
    max_steps: int = 2_000_000
    min_step: float = 1e-14  # Relative to the integration span

    # Synthetic Hoelder coefficients
    hoelder_truncation: float = 1e-14  # Drop lacunary terms below this weight
    hoelder_octaves: int = 10  # Highest octave kept, so the integrator can resolve c

    # Audits
    audit_slack: float = 1e-7  # Log-space slack for per-mode bounds
    family_slack: float = 1e-6  # Log-space slack for aggregated bounds
    modulus_grid_size: int = 10_000
    modulus_grid_min: float = 1e-8
    modulus_grid_max: float = 1e2
    sample_count: int = 256
    continuity_pairs: int = 100_000

    # Counterexample construction
    dgcs_dps: int = 30  # mpmath working precision in decimal digits
    dgcs_sup_points: int = 1_000
    dgcs_cross_check_periods: int = 6
    dgcs_oscillation_budget: float = 2_000.0  # Max mode periods handed to the numeric engine

    # Phase sweep
    resonance_threshold: float = 1e-3
    borderline_band: float = 0.02
    window_periods: int = 40


# Single instance to import elsewhere
settings = Settings()
