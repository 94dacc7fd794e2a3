"""PEARL driver: sample a model pool, then alternate fusion-based assignment
and least-squares refitting until the energy stops improving."""
from __future__ import annotations

from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import EnergyParams, Labeling, LineModel, TextCandidate, all_outliers
from .energy import inlier_sets, total_energy
from .fusion import assign_models
from .proposals import sample_initial_pool
from .refit import refit_models


def prune_unused(pool: Sequence[LineModel], labeling: Mapping[int, Optional[int]]) -> List[LineModel]:
    used = set(inlier_sets(labeling))
    return [m for m in pool if m.id in used]


def pearl(blobs: Sequence[TextCandidate], params: EnergyParams,
          rng: Optional[np.random.Generator] = None,
          pool: Optional[Sequence[LineModel]] = None) -> Tuple[List[LineModel], Labeling, List[float]]:
    """Fit text lines to ``blobs``.

    Returns the pruned model pool, the labeling and the energy trace (one
    entry after every assignment and every refit). ``pool`` overrides the
    sampled initial pool.

    Every assignment sweep starts from the current labeling (all-outlier at
    first), so the result never costs more than labeling everything outlier.
    """
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    if pool is None:
        pool = sample_initial_pool(blobs, params, rng)
    pool = list(pool)
    if not pool:
        labeling = all_outliers(blobs)
        return [], labeling, [total_energy(blobs, labeling, pool, params)]

    labeling = all_outliers(blobs)
    trace: List[float] = []
    previous = None
    for _ in range(params.max_iterations):
        labeling = assign_models(pool, blobs, params, init=labeling)
        trace.append(total_energy(blobs, labeling, pool, params))
        pool = refit_models(pool, blobs, labeling, params)
        energy = total_energy(blobs, labeling, pool, params)
        trace.append(energy)
        if previous is not None and previous - energy < params.convergence_tol:
            break
        previous = energy
    return prune_unused(pool, labeling), labeling, trace
