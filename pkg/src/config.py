import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

DEFAULT_SEED = 42
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PROJECT_ROOT = Path(__file__).parent.parent


@dataclass(frozen=True)
class Settings:
    """Process-wide settings read from the environment (and .env)."""
    threads: int
    seed: int
    log_level: str
    output_dir: Path


def _int_setting(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def get_settings() -> Settings:
    """Read settings from the environment."""
    level = os.getenv("RISKMETRIC_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"RISKMETRIC_LOG_LEVEL: unknown level {level!r}")

    output_dir = Path(os.getenv("RISKMETRIC_OUTPUT_DIR", "output"))
    if not output_dir.is_absolute():
        output_dir = PROJECT_ROOT / output_dir

    return Settings(
        threads=_int_setting("RISKMETRIC_THREADS", max(os.cpu_count() or 1, 1), 1),
        seed=_int_setting("RISKMETRIC_SEED", DEFAULT_SEED, 0),
        log_level=level,
        output_dir=output_dir,
    )


def configure_logging(level: str = "WARNING") -> None:
    """Install one stream handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


if __name__ == "__main__":
    print("Reading riskmetric settings...")
    try:
        settings = get_settings()
        print(f"Threads:    {settings.threads}")
        print(f"Seed:       {settings.seed}")
        print(f"Log level:  {settings.log_level}")
        print(f"Output dir: {settings.output_dir}")
    except ConfigError as e:
        print(f"Error: {e}")
        print("\nCheck the RISKMETRIC_* variables in your environment or .env file.")
