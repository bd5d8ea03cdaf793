from __future__ import annotations

import asyncio
import logging

from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from fastapi.responses import Response

from ..errors import CA3DError, UsageError
from ..services.checkpoints import load_checkpoint_cached
from ..services.diffusion import DEFAULT_GUIDANCE_SCALE, DEFAULT_SAMPLING_STEPS
from ..services.imaging import decode_pgm, encode_pgm
from ..services.translation_service import translate_image
from .paths import resolve_data_path

logger = logging.getLogger(__name__)

router = APIRouter(tags=["translation"])

PGM_MEDIA_TYPE = "image/x-portable-graymap"


def http_error(exc: CA3DError) -> HTTPException:
    status = 400 if isinstance(exc, UsageError) else 422
    return HTTPException(status_code=status, detail=str(exc))


@router.post("/translate")
async def translate_endpoint(
    image: UploadFile = File(..., description="Vista de referência em PGM binário (P5)"),
    checkpoint: str = Form(...),
    direction: str = Form("cc2mlo"),
    steps: int = Form(DEFAULT_SAMPLING_STEPS),
    guidance: float = Form(DEFAULT_GUIDANCE_SCALE),
    seed: int = Form(0),
    volume_source: str = Form("reference+target"),
):
    if volume_source not in {"reference+target", "reference"}:
        raise HTTPException(status_code=400, detail=f"unknown volume_source {volume_source!r}")
    checkpoint_path = resolve_data_path(checkpoint, must_exist=True)
    payload = await image.read()
    try:
        reference = decode_pgm(payload)
        model, sched, _ = await asyncio.to_thread(load_checkpoint_cached, str(checkpoint_path))
        translated = await asyncio.to_thread(
            translate_image,
            model,
            sched,
            reference,
            direction,
            steps,
            guidance,
            seed,
            volume_source,
        )
    except CA3DError as exc:
        logger.warning("⚠️ Translation request rejected: %s", exc)
        raise http_error(exc) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail="Checkpoint nao encontrado") from exc
    except OSError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return Response(content=encode_pgm(translated), media_type=PGM_MEDIA_TYPE)
