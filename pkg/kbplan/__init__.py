"""Household task planning over a scene-derived knowledge base."""

from pathlib import Path

__version__ = "0.1.0"

DATA_DIR = Path(__file__).parent / "data"
SEED_KB = DATA_DIR / "seed.vkb"
OPEN_RULES = DATA_DIR / "open_rules.vkb"
HOLDOUT_DIR = DATA_DIR / "holdout"
SCRIPTS_DIR = DATA_DIR / "scripts"

__all__ = ["DATA_DIR", "HOLDOUT_DIR", "OPEN_RULES", "SCRIPTS_DIR", "SEED_KB", "__version__"]
