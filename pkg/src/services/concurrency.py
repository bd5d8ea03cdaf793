from __future__ import annotations

import asyncio
from typing import Awaitable, Callable, Iterable, List, Optional, TypeVar

from .. import settings

T = TypeVar("T")
R = TypeVar("R")


async def map_bounded(
    fn: Callable[[T], R],
    items: Iterable[T],
    limit: Optional[int] = None,
) -> List[R]:
    """Executa ``fn`` em threads, no máximo ``limit`` (CA3D_THREADS) por vez; preserva a ordem."""
    semaphore = asyncio.Semaphore(max(1, limit or settings.CA3D_THREADS))

    async def run(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return list(await asyncio.gather(*(run(item) for item in items)))


def run_sync(coro: Awaitable[R]) -> R:
    return asyncio.run(coro)
