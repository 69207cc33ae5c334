"""Small shared helpers: seeded RNG streams, hashing, atomic writes."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

# Named RNG stream indices so every consumer of a run seed draws from an
# independent, documented stream. Changing these breaks run reproducibility.
STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_SHUFFLE = 2
STREAM_SPLIT = 3
STREAM_SYNTH = 4


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Deterministic generator for (seed, stream); streams are independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def atomic_write_bytes(path: str | os.PathLike, blob: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
