"""
Video-level k-fold assignment.

Ids are sorted first so the result does not depend on input order, then
shuffled with a seeded generator and dealt round-robin. Fold sizes therefore
differ by at most one, and frames of one video never land in two folds.
"""

from typing import List, Sequence

import numpy as np

from .schemas import FoldSplit


def kfold_split(video_ids: Sequence[str], k: int, seed: int = 0) -> List[FoldSplit]:
    """One FoldSplit per fold index; all share the same assignment map."""
    ids = list(video_ids)
    if len(set(ids)) != len(ids):
        dupes = sorted({v for v in ids if ids.count(v) > 1})
        raise ValueError(f"duplicate video ids: {dupes}")
    if k < 2:
        raise ValueError(f"k must be >= 2 so every fold has a validation set, got k={k}")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds the number of videos ({len(ids)})")

    ordered = sorted(ids)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    assignments = {ordered[int(p)]: i % k for i, p in enumerate(perm)}
    return [FoldSplit(k=k, fold_index=f, assignments=assignments) for f in range(k)]
