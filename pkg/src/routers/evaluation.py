from __future__ import annotations

import asyncio
import logging

from fastapi import APIRouter, HTTPException

from ..errors import CA3DError, UsageError
from ..models.requests import DatasetRequest, EvaluateRequest
from ..models.responses import DatasetResponse, EvaluateResponse
from ..services.checkpoints import load_checkpoint_cached
from ..services.dataset import dataset_generate_async, load_split, phantom_spec_for
from ..services.translation_service import evaluate_pairs_async
from .paths import resolve_data_path

logger = logging.getLogger(__name__)

router = APIRouter(tags=["evaluation"])


@router.post("/evaluate", response_model=EvaluateResponse)
async def evaluate_endpoint(request: EvaluateRequest):
    model = sched = None
    data_dir = resolve_data_path(request.data_dir)
    try:
        if request.mode == "model":
            if not request.checkpoint:
                raise HTTPException(status_code=400, detail="checkpoint obrigatorio no modo 'model'")
            checkpoint = resolve_data_path(request.checkpoint, must_exist=True)
            model, sched, _ = await asyncio.to_thread(load_checkpoint_cached, str(checkpoint))
        pairs = await asyncio.to_thread(load_split, data_dir, request.split)
        if not pairs:
            raise HTTPException(status_code=404, detail=f"split {request.split!r} vazio")
        reports = await evaluate_pairs_async(
            pairs,
            model=model,
            sched=sched,
            steps=request.steps,
            guidance=request.guidance,
            seed=request.seed,
            mode=request.mode,
        )
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=f"Arquivo nao encontrado: {exc.filename}") from exc
    except UsageError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except CA3DError as exc:
        logger.error("❌ Evaluation failed: %s", exc)
        return EvaluateResponse(success=False, split=request.split, mode=request.mode, error=str(exc))
    except OSError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc

    return EvaluateResponse(
        success=True,
        split=request.split,
        mode=request.mode,
        reports=reports,
        summary={report.direction: report.summary() for report in reports},
    )


@router.post("/datasets", response_model=DatasetResponse)
async def create_dataset_endpoint(request: DatasetRequest):
    out_dir = resolve_data_path(request.out_dir)
    try:
        summary = await dataset_generate_async(
            out_dir,
            request.count,
            phantom_spec_for(request.size),
            request.seed,
            export_pgm=request.export_pgm,
        )
    except UsageError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except CA3DError as exc:
        logger.error("❌ Dataset generation failed: %s", exc)
        return DatasetResponse(success=False, error=str(exc))
    except OSError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return DatasetResponse(success=True, path=summary.path, count=summary.count, splits=summary.splits)
