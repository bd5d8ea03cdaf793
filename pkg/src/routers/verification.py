from __future__ import annotations

import asyncio

from fastapi import APIRouter, Query

from ..models.responses import VerificationResponse
from ..services.geometry import ProjectionModel
from ..services.verification import run_geometry_checks

router = APIRouter(tags=["verification"], prefix="/verify")


@router.get("/geometry", response_model=VerificationResponse)
async def verify_geometry_endpoint(
    seed: int = Query(default=0),
    theta_offset: float = Query(default=0.0, description="Perturbação do ângulo MLO em radianos (teste dos oráculos)"),
):
    model = ProjectionModel(theta=ProjectionModel().theta + theta_offset)
    checks = await asyncio.to_thread(run_geometry_checks, seed, model)
    failed = sum(1 for check in checks if not check.passed)
    return VerificationResponse(success=failed == 0, passed=len(checks) - failed, failed=failed, checks=checks)
