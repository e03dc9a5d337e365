"""
Application Configuration
Process-level settings managed with pydantic-settings (env vars / .env)

Experiment settings (models, cascade, run defaults) live in a YAML file and
are loaded by app.repositories.task; this module only covers the ambient
knobs that are the same for every experiment.
"""
from typing import List, Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
import logging


class GatewaySettings(BaseSettings):
    """Model gateway settings"""
    model_config = SettingsConfigDict(
        env_file='.env',
        env_file_encoding='utf-8',
        env_prefix='GATEWAY_',
        extra='ignore'
    )

    timeout_s: float = Field(default=120.0, gt=0, description='Per-call timeout in seconds')
    max_output_tokens: int = Field(default=4096, ge=1, description='Default completion length cap')
    rate_limit_retries: int = Field(default=3, ge=0, le=10, description='Retries on rate limiting')
    backoff_base_s: float = Field(default=1.0, ge=0, description='Exponential backoff multiplier')
    backoff_max_s: float = Field(default=30.0, ge=0, description='Backoff ceiling')


class CircuitBreakerSettings(BaseSettings):
    """Circuit Breaker settings"""
    model_config = SettingsConfigDict(
        env_file='.env',
        env_file_encoding='utf-8',
        env_prefix='CIRCUIT_BREAKER_',
        extra='ignore'
    )

    fail_threshold: int = Field(default=5, ge=1, le=20, description='Failure threshold')
    recovery_timeout: int = Field(default=30, ge=1, le=300, description='Recovery timeout in seconds')


class EnvironmentSettings(BaseSettings):
    """Action environment settings"""
    model_config = SettingsConfigDict(
        env_file='.env',
        env_file_encoding='utf-8',
        env_prefix='ENV_',
        extra='ignore'
    )

    observation_cap: int = Field(default=5000, ge=100, description='Max observation length in characters')
    execute_timeout_s: int = Field(default=900, ge=1, description='Default Execute Script timeout')
    understand_chunk_chars: int = Field(default=12000, ge=100, description='Understand File prompt budget')
    passthrough_vars: str = Field(
        default='PATH,LANG,LC_ALL,HOME,TMPDIR',
        description='Environment variables a script subprocess may inherit'
    )

    def get_passthrough_vars_list(self) -> List[str]:
        """Get passthrough variable names as list"""
        return [v.strip() for v in self.passthrough_vars.split(',') if v.strip()]


class LoggingSettings(BaseSettings):
    """Logging settings"""
    model_config = SettingsConfigDict(
        env_file='.env',
        env_file_encoding='utf-8',
        env_prefix='LOG_',
        extra='ignore'
    )

    level: str = Field(default='INFO', description='Logging level')
    format: str = Field(default='text', description='Log format: json or text')
    file: Optional[str] = Field(default=None, description='Log file path')

    @property
    def log_level(self) -> int:
        """Convert string level to logging constant"""
        return getattr(logging, self.level.upper(), logging.INFO)


class Settings(BaseSettings):
    """Main application settings"""
    model_config = SettingsConfigDict(
        env_file='.env',
        env_file_encoding='utf-8',
        case_sensitive=False,
        extra='ignore'
    )

    app_name: str = Field(default='cascade-bench', description='Application name')
    app_env: str = Field(default='development', description='Environment: development, production')

    # Sub-configurations
    gateway: GatewaySettings = Field(default_factory=GatewaySettings)
    circuit_breaker: CircuitBreakerSettings = Field(default_factory=CircuitBreakerSettings)
    environment: EnvironmentSettings = Field(default_factory=EnvironmentSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    @property
    def is_production(self) -> bool:
        """Check if running in production"""
        return self.app_env.lower() == 'production'


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance

    Returns:
        Settings: Application settings
    """
    return Settings()


# Export for convenience
settings = get_settings()
