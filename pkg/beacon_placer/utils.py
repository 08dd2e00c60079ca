"""Utilities shared across BeaconPlacer modules"""
from __future__ import annotations

import logging
import os
from typing import Iterable, List

import numpy as np

logger = logging.getLogger(__name__)

MAX_WORKERS_ENV = "BEACONPLACER_MAX_WORKERS"


def max_workers() -> int:
    """Worker-thread cap, honouring ``BEACONPLACER_MAX_WORKERS`` when it is a positive int."""
    default = os.cpu_count() or 1
    raw = os.environ.get(MAX_WORKERS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring {MAX_WORKERS_ENV}={raw!r}: not an integer")
        return default
    if value < 1:
        logger.warning(f"Ignoring {MAX_WORKERS_ENV}={raw!r}: must be >= 1")
        return default
    return value


def substreams(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Split ``rng`` into ``count`` independent generators.

    Offspring / trial ``i`` always receives stream ``i``, so results do not depend on
    the order in which work items are evaluated.
    """
    root = np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))
    return [np.random.default_rng(s) for s in root.spawn(count)]


def as_points(values: Iterable) -> np.ndarray:
    """Coerce a sequence of xyz triples into a float (n, 3) array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (n, 3) coordinates, got shape {arr.shape}")
    return arr


def frozen_array(values: Iterable, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


__all__ = ["MAX_WORKERS_ENV", "max_workers", "substreams", "as_points", "frozen_array"]
