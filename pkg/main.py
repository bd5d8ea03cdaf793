from __future__ import annotations

import logging
import os

from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from src import settings
from src.routers import evaluation, health, translation, verification

load_dotenv()

logging.basicConfig(level=settings.CA3D_LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

allowed_origins_raw = os.getenv("ALLOWED_ORIGINS", "")

if allowed_origins_raw:
    allowed_origins = [origin.strip() for origin in allowed_origins_raw.split(",") if origin.strip()]
else:
    allowed_origins = ["*"] if settings.ENVIRONMENT in {"dev", "development", "local"} else []

app = FastAPI(
    title="CA3D View Translation Service",
    description="Tradução CC↔MLO com difusão condicionada por atenção de colunas e volume 3D",
    version=health.VERSION,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=allowed_origins,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["Accept", "Content-Type", "Authorization", "Origin"],
    max_age=3600,
)

app.include_router(health.router)
app.include_router(verification.router)
app.include_router(translation.router)
app.include_router(evaluation.router)


if __name__ == "__main__":  # pragma: no cover - manual execution helper
    import uvicorn

    uvicorn.run(
        "main:app",
        host=settings.HOST,
        port=settings.PORT,
        reload=settings.ENVIRONMENT in {"dev", "development", "local"},
        log_level=settings.CA3D_LOG_LEVEL.lower(),
    )
