from __future__ import annotations

import platform
from datetime import datetime

import numpy as np
from fastapi import APIRouter

from .. import settings

router = APIRouter(tags=["health"])

SERVICE_NAME = "CA3D View Translation Service"
VERSION = "0.1.0"


@router.get("/")
async def root():
    return {
        "service": SERVICE_NAME,
        "status": "healthy",
        "version": VERSION,
        "timestamp": datetime.now().isoformat(),
    }


@router.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "environment": settings.env_summary(),
        "runtime": {
            "python_version": platform.python_version(),
            "numpy_version": np.__version__,
            "platform": platform.system(),
        },
        "timestamp": datetime.now().isoformat(),
    }
