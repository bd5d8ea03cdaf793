from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel

from .records import CheckResult, MetricReport


class DatasetResponse(BaseModel):
    success: bool
    path: Optional[str] = None
    count: Optional[int] = None
    splits: Optional[Dict[str, int]] = None
    error: Optional[str] = None


class EvaluateResponse(BaseModel):
    success: bool
    split: Optional[str] = None
    mode: Optional[str] = None
    reports: List[MetricReport] = []
    summary: Dict[str, Dict[str, float]] = {}
    error: Optional[str] = None


class VerificationResponse(BaseModel):
    success: bool
    passed: int
    failed: int
    checks: List[CheckResult]
