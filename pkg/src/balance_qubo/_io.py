"""Small shared helpers: atomic file output and seed derivation."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename; no partial files on error."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    """Child stream of ``seed`` addressed by an integer key path.

    This is the single splitting rule used everywhere: numpy's
    ``SeedSequence(entropy=seed, spawn_key=keys)``. It depends only on the
    master seed and the key path, never on execution order.
    """
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit integer seed for the child stream at ``keys``."""
    lo, hi = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)
