"""Rank-weighted survivor selection.

Individuals are ranked ascending by fitness (rank 0 = best); the selection
weight of rank r is 1 / (r + P) where P is the NOMINAL pool size (parents +
one offspring per operator per parent), even when some offspring slots were
skipped. N survivors are drawn without replacement by sequential weighted
sampling with renormalization. Fitness ties break toward the older
generation, then the smaller id.
"""

from __future__ import annotations

import logging

import numpy as np

from .model import Individual

logger = logging.getLogger(__name__)


def rank_weights(pool_size: int, nominal_pool_size: int) -> np.ndarray:
    return 1.0 / (np.arange(pool_size) + nominal_pool_size)


def sequential_weighted_draw(
    weights: np.ndarray, n: int, rng: np.random.Generator
) -> list[int]:
    """Draw n distinct indices without replacement, renormalizing after each
    draw; returns them in draw order. Inverse-CDF sampling on rng.random()."""
    remaining = list(range(len(weights)))
    chosen: list[int] = []
    for _ in range(n):
        w = weights[remaining]
        cdf = np.cumsum(w)
        u = rng.random() * cdf[-1]
        pick = int(np.searchsorted(cdf, u, side="right"))
        pick = min(pick, len(remaining) - 1)
        chosen.append(remaining.pop(pick))
    return chosen


def select_survivors(
    pool: list[Individual],
    n: int,
    rng: np.random.Generator,
    nominal_pool_size: int,
    draw_log: list | None = None,
) -> tuple[list[Individual], list[Individual]]:
    """Returns (survivors, eliminated); invalid individuals must be excluded
    by the caller. Survivors are returned sorted by (fitness, age, id); the
    optional ``draw_log`` receives the survivors in draw order."""
    candidates = [ind for ind in pool if ind.valid]
    if len(candidates) < len(pool):
        raise ValueError("selection pool contains invalid individuals")
    if len(candidates) <= n:
        if len(candidates) < n:
            logger.warning(
                "selection pool smaller than niche size (%d < %d): all survive",
                len(candidates),
                n,
            )
        ordered = sorted(
            candidates, key=lambda i: (i.fitness, i.generation_born, i.id)
        )
        if draw_log is not None:
            draw_log.extend(ordered)
        return ordered, []

    ordered = sorted(candidates, key=lambda i: (i.fitness, i.generation_born, i.id))
    weights = rank_weights(len(ordered), nominal_pool_size)
    chosen = sequential_weighted_draw(weights, n, rng)
    if draw_log is not None:
        draw_log.extend(ordered[i] for i in chosen)
    survivors = sorted(
        (ordered[i] for i in chosen),
        key=lambda i: (i.fitness, i.generation_born, i.id),
    )
    chosen_set = set(chosen)
    eliminated = [ordered[i] for i in range(len(ordered)) if i not in chosen_set]
    return survivors, eliminated


def first_draw_distribution(pool_size: int, nominal_pool_size: int) -> np.ndarray:
    """Closed-form probability that rank r wins the first draw."""
    w = rank_weights(pool_size, nominal_pool_size)
    return w / w.sum()
