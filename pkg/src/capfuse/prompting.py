"""Caption-as-prompt source construction and the random-caption ablation."""

from __future__ import annotations

from dataclasses import replace
from typing import List, Sequence, Tuple

import numpy as np

from .text import SEP_TOKEN

_DELIMITER = f" {SEP_TOKEN} "


def build_prompted_source(caption: str, source: str) -> str:
    """Prepend the caption with a [SEP] delimiter; empty captions pass through."""
    if not source:
        raise ValueError("build_prompted_source: source must be non-empty")
    if not caption:
        return source
    return caption + _DELIMITER + source


def split_prompted_source(prompted: str) -> Tuple[str, str]:
    """Inverse of build_prompted_source at the first delimiter occurrence."""
    if _DELIMITER in prompted:
        caption, source = prompted.split(_DELIMITER, 1)
        return caption, source
    return "", prompted


def assign_random_captions(samples: Sequence, seed: int) -> List:
    """Derange the caption column: no sample keeps its own caption.

    Returns new records (all other fields untouched) with captions permuted
    by a seed-determined derangement, drawn by rejection sampling so it is
    uniform over derangements.
    """
    n = len(samples)
    if n < 2:
        raise ValueError(f"assign_random_captions: need at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            break
    return [replace(sample, caption=samples[perm[i]].caption)
            for i, sample in enumerate(samples)]
