"""Process-level defaults for the HGMN pipeline."""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from a local .env file if present.
load_dotenv()


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in {"1", "true", "yes", "on"}


DATA_DIR = Path(os.getenv("HGMN_DATA_DIR", "data"))
OUTPUT_DIR = Path(os.getenv("HGMN_OUTPUT_DIR", "runs"))
LOG_LEVEL = os.getenv("HGMN_LOG_LEVEL", "INFO").upper()
DEFAULT_SEED = int(os.getenv("HGMN_SEED", "0"))

# Pinning intra-op threads keeps float reductions in a fixed order.
TORCH_THREADS = int(os.getenv("HGMN_TORCH_THREADS", "1"))

# Components above this size use the Chebyshev heat-kernel approximation.
EXACT_SPECTRUM_MAX_NODES = int(os.getenv("HGMN_EXACT_SPECTRUM_MAX_NODES", "2000"))

# Write the token->id sidecar whenever an edge list is remapped.
WRITE_REMAP = _flag("HGMN_WRITE_REMAP", "true")
