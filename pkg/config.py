"""
Configuration management for HybridNet
Loads environment variables and provides configuration access.
Supports named model profiles with per-profile JSON configuration.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"


class Config:
    """Runtime configuration from environment variables."""

    # Logging Configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    LOG_FILE = os.getenv("LOG_FILE", "hybridnet.log")  # Empty string disables file logging

    # Run Configuration
    OUT_DIR = os.getenv("HYBRIDNET_OUT_DIR", "runs")
    SEED = int(os.getenv("HYBRIDNET_SEED", "7"))
    JOBS = int(os.getenv("HYBRIDNET_JOBS", "1"))  # Parallel graph construction workers
    PROFILE = os.getenv("HYBRIDNET_PROFILE", "default")  # Model profile directory under configs/
    CONFIG_DIR = os.getenv("HYBRIDNET_CONFIG_DIR", "configs")

    # Training defaults (AdamW, 500 epochs, lr 2e-4)
    EPOCHS = int(os.getenv("HYBRIDNET_EPOCHS", "500"))
    LEARNING_RATE = float(os.getenv("HYBRIDNET_LR", "2e-4"))

    # Graph construction defaults
    CLIQUE_CAP = int(os.getenv("HYBRIDNET_CLIQUE_CAP", "16"))
    TILES_PER_SIDE = int(os.getenv("HYBRIDNET_TILES_PER_SIDE", "32"))
    FEATURE_COARSENING = int(os.getenv("HYBRIDNET_FEATURE_COARSENING", "4"))

    @classmethod
    def validate(cls):
        """Validate that configuration values are usable."""
        errors = []

        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"LOG_LEVEL must be a logging level name, got {cls.LOG_LEVEL!r}")

        if cls.JOBS < 1:
            errors.append("HYBRIDNET_JOBS must be >= 1")

        if cls.EPOCHS < 1:
            errors.append("HYBRIDNET_EPOCHS must be >= 1")

        if cls.LEARNING_RATE <= 0:
            errors.append("HYBRIDNET_LR must be > 0")

        if cls.CLIQUE_CAP < 2:
            errors.append("HYBRIDNET_CLIQUE_CAP must be >= 2")

        if cls.TILES_PER_SIDE < 1:
            errors.append("HYBRIDNET_TILES_PER_SIDE must be >= 1")

        if cls.FEATURE_COARSENING < 1:
            errors.append("HYBRIDNET_FEATURE_COARSENING must be >= 1")

        if errors:
            raise ValueError("Configuration errors:\n" + "\n".join(f"  - {e}" for e in errors))

        return True


def load_model_profile(profile: Optional[str] = None) -> Optional[Dict[str, Any]]:
    """
    Load model hyperparameters for a named profile from JSON.
    Returns a dictionary of HybridNetConfig fields or None if the file is not found.
    """
    profile = profile or Config.PROFILE
    profile_file = Path(Config.CONFIG_DIR) / profile / "model.json"

    if not profile_file.exists():
        logger.warning(f"Model profile not found: {profile_file}. Using default hyperparameters from code.")
        return None

    try:
        with open(profile_file, "r", encoding="utf-8") as f:
            values = json.load(f)
            logger.info(f"Loaded model profile '{profile}' from {profile_file}")
            return values
    except (json.JSONDecodeError, IOError) as e:
        logger.error(f"Error loading model profile from {profile_file}: {e}")
        return None
