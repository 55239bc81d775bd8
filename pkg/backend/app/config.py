from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Execution
    SUBDIFF_THREADS: int = 1
    SUBDIFF_OUTPUT_DIR: str = "results"
    BLOCK_STEPS: int = 4096  # internal steps generated per vectorised block
    MAX_FINISHED_JOBS: int = 256  # finished API jobs kept for status queries

    # Numerical guards
    OVERFLOW_CAP: float = 1e300
    ALPHA_FLOOR: float = 0.05
    ALPHA_CEILING: float = 0.95

    # Observability
    LOG_LEVEL: str = "INFO"
    SENTRY_DSN: str = ""
    DEBUG: bool = False

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()
