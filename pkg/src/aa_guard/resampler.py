"""Repeated A/A splits of a user population.

Each iteration draws one random partition of all users into two groups and
reuses it for every event column. Iteration ``i`` gets its own generator
seeded from ``SeedSequence(master_seed, spawn_key=(i,))``, so iterations can
run in any order, on any number of threads, and still give identical
p-values.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InsufficientDataError
from .ingestion import UserMetricMatrix
from .stats_core import ate_from_moments

MIN_USERS = 4
# Columns with more stored entries than this fraction of users are reduced
# against a dense float mask; sparser ones gather only their support.
_DENSE_FRACTION = 0.25
# Below this share of eligible users, rejection sampling in the size fix-up
# gets slow and we enumerate the candidates instead.
_REJECTION_MIN_SHARE = 0.125


@dataclass(frozen=True)
class ResamplePlan:
    iterations: int = 5000
    master_seed: int = 0
    alpha: float = 0.05
    split_fraction: float = 0.5
    include_zero_users: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise DomainError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.split_fraction < 1.0:
            raise DomainError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")


@dataclass
class PvalueSample:
    event_id: str
    pvalues: np.ndarray
    reject_count_at_alpha: int


def group_size(user_count: int, split_fraction: float) -> int:
    """Size of the first group: split_fraction * users, rounded half up."""
    return int(math.floor(split_fraction * user_count + 0.5))


def iteration_rng(master_seed: int, iteration_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(iteration_index,)))
    )


def _pick(rng: np.random.Generator, mask: np.ndarray, state: bool, r: int) -> np.ndarray:
    """Uniform random r-subset of the positions where ``mask == state``."""
    n = mask.size
    eligible = int(np.count_nonzero(mask)) if state else n - int(np.count_nonzero(mask))
    if eligible < _REJECTION_MIN_SHARE * n:
        pool = np.flatnonzero(mask == state)
        return rng.choice(pool, size=r, replace=False)
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < r:
        draws = rng.integers(0, n, size=2 * (r - len(chosen)) + 16)
        for pos in draws[mask[draws] == state].tolist():
            if pos not in seen:
                seen.add(pos)
                chosen.append(pos)
                if len(chosen) == r:
                    break
    return np.asarray(chosen, dtype=np.int64)


def split_mask(user_count: int, iteration_index: int, plan: ResamplePlan) -> np.ndarray:
    """Boolean membership of the first group for one iteration.

    Every user first joins the group independently (fair coin bits when the
    split is 50/50, uniform draws otherwise); then a uniformly chosen set of
    members is removed, or non-members added, to hit the exact group size.
    Both steps treat users symmetrically, so the result is a uniformly random
    subset of the target size.
    """
    if user_count < MIN_USERS:
        raise InsufficientDataError(f"need at least {MIN_USERS} users, got {user_count}")
    k = group_size(user_count, plan.split_fraction)
    rng = iteration_rng(plan.master_seed, iteration_index)
    if plan.split_fraction == 0.5:
        raw = np.frombuffer(rng.bytes((user_count + 7) // 8), dtype=np.uint8)
        mask = np.unpackbits(raw, count=user_count).astype(bool)
    else:
        mask = rng.random(user_count) < plan.split_fraction
    c = int(np.count_nonzero(mask))
    if c > k:
        mask[_pick(rng, mask, True, c - k)] = False
    elif c < k:
        mask[_pick(rng, mask, False, k - c)] = True
    return mask


def split_population(user_count: int, iteration_index: int, plan: ResamplePlan) -> tuple[np.ndarray, np.ndarray]:
    """Sorted user indices of the two groups for one iteration."""
    mask = split_mask(user_count, iteration_index, plan)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


@dataclass
class _Column:
    """One event column prepared for fast group sums.

    Values are shifted by the column median (differences of means and
    variances are shift-invariant). This keeps mostly-zero columns sparse,
    turns constant columns into exact zeros, and limits cancellation in
    ``E[v^2] - E[v]^2``.
    """

    dense: bool
    idx: np.ndarray | None
    v: np.ndarray
    v2: np.ndarray
    total1: float
    total2: float
    members: np.ndarray | None
    n_members: int


def _prepare(matrix: UserMetricMatrix, j: int, include_zero_users: bool) -> _Column:
    n = matrix.n_users
    if include_zero_users:
        members = None
        values = matrix.column(j)
    else:
        members, stored = matrix.sparse_column(j)
        nz = stored != 0
        members, values = members[nz], stored[nz]
    n_members = n if members is None else members.size
    shift = float(np.median(values)) if values.size else 0.0
    centered = values - shift
    support = np.flatnonzero(centered)
    if members is None and support.size > _DENSE_FRACTION * n:
        v = centered
        idx = None
    else:
        v = centered[support]
        idx = support if members is None else members[support]
    v2 = v * v
    return _Column(
        dense=idx is None, idx=idx, v=v, v2=v2,
        total1=float(np.sum(v)), total2=float(np.sum(v2)),
        members=members, n_members=n_members,
    )


def _iteration_pvalues(columns: list[_Column], mask: np.ndarray, k: int, alpha: float) -> list[float]:
    n_users = mask.size
    fmask = mask.astype(np.float64) if any(c.dense for c in columns) else None
    out = []
    for col in columns:
        if col.dense:
            a1 = float(np.einsum("i,i->", col.v, fmask))
            a2 = float(np.einsum("i,i->", col.v2, fmask))
        else:
            sel = mask[col.idx]
            a1 = float(np.sum(col.v[sel]))
            a2 = float(np.sum(col.v2[sel]))
        if col.members is None:
            na, nb = k, n_users - k
        else:
            na = int(np.count_nonzero(mask[col.members]))
            nb = col.n_members - na
        b1, b2 = col.total1 - a1, col.total2 - a2
        mean_a = a1 / na if na else 0.0
        mean_b = b1 / nb if nb else 0.0
        var_a = a2 / na - mean_a * mean_a if na else 0.0
        var_b = b2 / nb - mean_b * mean_b if nb else 0.0
        est = ate_from_moments(na, mean_a, var_a, nb, mean_b, var_b, alpha)
        out.append(est.p)
    return out


def run_aa_audit(
    matrix: UserMetricMatrix,
    plan: ResamplePlan,
    workers: int = 1,
    progress: Callable[[int], None] | None = None,
) -> dict[str, PvalueSample]:
    """A/A p-values for every event column.

    Group 1 is treated as control and group 2 as treatment. Results are
    written by iteration index, so they do not depend on ``workers``.
    """
    if matrix.n_users < MIN_USERS:
        raise InsufficientDataError(f"need at least {MIN_USERS} users, got {matrix.n_users}")
    if matrix.n_events < 1:
        raise InsufficientDataError("matrix has no event columns")
    columns = [_prepare(matrix, j, plan.include_zero_users) for j in range(matrix.n_events)]
    k = group_size(matrix.n_users, plan.split_fraction)
    pvals = np.empty((matrix.n_events, plan.iterations), dtype=np.float64)

    def run_block(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            mask = split_mask(matrix.n_users, i, plan)
            pvals[:, i] = _iteration_pvalues(columns, mask, k, plan.alpha)
        if progress is not None:
            progress(hi - lo)

    block = max(1, min(256, -(-plan.iterations // max(1, workers * 4))))
    bounds = [(lo, min(lo + block, plan.iterations)) for lo in range(0, plan.iterations, block)]
    if workers <= 1:
        for lo, hi in bounds:
            run_block(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_block, lo, hi) for lo, hi in bounds]:
                fut.result()

    return {
        event: PvalueSample(event, pvals[j].copy(), int(np.count_nonzero(pvals[j] < plan.alpha)))
        for j, event in enumerate(matrix.event_ids)
    }
