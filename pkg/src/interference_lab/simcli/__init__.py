"""Configuration-driven replication harness and CLI."""

from .config import SCENARIOS, load_config, resolve_config  # noqa: F401
from .scenarios import run_scenario  # noqa: F401
