# config/settings.py

from pathlib import Path
from pydantic_settings import BaseSettings
from pydantic import Field
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

class Settings(BaseSettings):
    """Process-level configuration for the ground state lab"""

    # Application
    app_env: str = Field(default="development", env="APP_ENV")

    # Output
    groundlab_output_root: str = Field(default="runs", env="GROUNDLAB_OUTPUT_ROOT")

    # Determinism and concurrency
    default_seed: int = Field(default=0, env="DEFAULT_SEED")
    max_workers: int = Field(default=4, env="MAX_WORKERS")

    # Numerical defaults
    circle_samples: int = Field(default=64, env="CIRCLE_SAMPLES")
    stall_fraction: float = Field(default=1e-6, env="STALL_FRACTION")
    slack_constant: float = Field(default=10.0, env="SLACK_CONSTANT")
    rigidity_tau: float = Field(default=0.1, env="RIGIDITY_TAU")

    # Logging
    log_level: str = Field(default="INFO", env="LOG_LEVEL")
    log_file_path: str = Field(default="logs/groundlab.log", env="LOG_FILE_PATH")

    class Config:
        env_file = ".env"
        case_sensitive = False

# Create global settings instance
settings = Settings()
