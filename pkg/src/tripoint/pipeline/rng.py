"""Labelled random streams derived from one seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))])


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label``; adding new labels never shifts existing streams."""
    return np.random.default_rng(derive_seed(seed, label))


def derive_int(seed: int, label: str) -> int:
    return int(derive_seed(seed, label).generate_state(1)[0])
