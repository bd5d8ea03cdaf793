from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def _bool_env(name: str, default: bool = False) -> bool:
    raw = os.getenv(name, "")
    if not raw:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


ENVIRONMENT = os.getenv("ENVIRONMENT", "development").lower()
CA3D_THREADS = _int_env("CA3D_THREADS", os.cpu_count() or 1)
CA3D_LOG_LEVEL = os.getenv("CA3D_LOG_LEVEL", "INFO").upper()
CA3D_DEBUG_NUMERICS = _bool_env("CA3D_DEBUG_NUMERICS")
CA3D_RUN_SLOW = _bool_env("CA3D_RUN_SLOW")
HOST = os.getenv("HOST", "0.0.0.0")
PORT = _int_env("PORT", 8000)
# raiz dos caminhos aceitos pela API (datasets, checkpoints)
CA3D_DATA_ROOT = Path(os.getenv("CA3D_DATA_ROOT", ".")).resolve()


def env_summary() -> dict:
    return {
        "ENVIRONMENT": ENVIRONMENT,
        "CA3D_THREADS": CA3D_THREADS,
        "CA3D_LOG_LEVEL": CA3D_LOG_LEVEL,
        "CA3D_DEBUG_NUMERICS": CA3D_DEBUG_NUMERICS,
        "CA3D_DATA_ROOT": str(CA3D_DATA_ROOT),
    }
