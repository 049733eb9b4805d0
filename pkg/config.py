import os
import logging
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent

CACHE_DIR = os.getenv("CARBON_SCHED_CACHE_DIR", str(Path.home() / ".cache" / "carbon-sched"))
CARBON_API_BASE_URL = os.getenv("CARBON_API_BASE_URL", "https://api.carbonintensity.org.uk")
CARBON_API_TIMEOUT = float(os.getenv("CARBON_API_TIMEOUT", "30"))
# The API refuses ranges longer than 14 days
CARBON_API_CHUNK_DAYS = int(os.getenv("CARBON_API_CHUNK_DAYS", "13"))
CARBON_API_WORKERS = int(os.getenv("CARBON_API_WORKERS", "4"))
REGIONS_FILE = os.getenv("CARBON_SCHED_REGIONS_FILE", str(BASE_DIR / "instance" / "regions.json"))
WORKERS = int(os.getenv("CARBON_SCHED_WORKERS", str(os.cpu_count() or 1)))
LOG_LEVEL = os.getenv("CARBON_SCHED_LOG_LEVEL", "INFO")

TOOL_VERSION = "0.3.0"


def configure_logging(verbose: bool = False) -> None:
    """Configure root logging once for CLI use."""
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
