"""Run-wide settings shared by the library entry points and the CLI."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from .corrections import CorrectorConfig

DEFAULT_SEED = 42


def thread_cap(default: int | None = None) -> int:
    """Worker count from TILE_THREADS, else the CPU count."""
    raw = os.environ.get("TILE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return default or max(1, min(8, os.cpu_count() or 1))


@dataclass
class Config:
    seed: int = DEFAULT_SEED
    working_level: int = 6
    max_tiles: int = 2_000_000
    samples: int = 10_000
    fd_step: float = 1e-6
    boundary_margin: float = 1e-3  # fraction of the tile inradius kept clear when sampling
    threads: int = field(default_factory=thread_cap)
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
