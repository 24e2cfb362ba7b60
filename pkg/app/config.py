from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuration settings for the toolkit."""

    SERVICE_NAME: str = "equivocal-commit"
    SERVICE_DESCRIPTION: str = "Discrete-log equivocal commitment toolkit"

    LOG_LEVEL: str = "INFO"

    # --- Group generation ---
    # Miller-Rabin rounds, error bound 4^-rounds (33 rounds is below 2^-64)
    PRIMALITY_ROUNDS: int = 33
    SAFE_PRIME_MAX_ATTEMPTS: int = 2_000_000

    # --- Exhaustive checks ---
    HIDING_ENUMERATION_LIMIT: int = 2**16
    MAX_ENUMERATED_SESSIONS: int = 3

    # --- Protocol demo ---
    DEMO_HOST: str = "127.0.0.1"
    DEMO_PORT: int = 0
    DEMO_TIMEOUT_SECONDS: float = 30.0
    TRANSCRIPT_SUFFIX: str = ".eqct"

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=True, extra="ignore"
    )


settings = Settings()
