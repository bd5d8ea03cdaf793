from __future__ import annotations

from pathlib import Path

from fastapi import HTTPException

from .. import settings


def resolve_data_path(raw: str, must_exist: bool = False) -> Path:
    """Resolve ``raw`` sob ``CA3D_DATA_ROOT``; relativos são unidos à raiz.

    400 se o caminho final sair da raiz, 404 se ``must_exist`` e não houver arquivo.
    """
    root = Path(settings.CA3D_DATA_ROOT).resolve()
    path = (root / raw).resolve()
    if not path.is_relative_to(root):
        raise HTTPException(status_code=400, detail=f"Caminho fora da raiz de dados: {raw}")
    if must_exist and not path.is_file():
        raise HTTPException(status_code=404, detail=f"Arquivo nao encontrado: {raw}")
    return path
