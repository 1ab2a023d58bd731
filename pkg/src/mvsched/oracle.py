"""Brute-force reference solvers used for differential testing.

These enumerate the full feasible space (version assignments for the
scheduling problem, subsets for the knapsack) and therefore only accept
small inputs.  They share the objective evaluator and tie-breaking rules
with the production solver so that agreement can be asserted exactly.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .rdmodel import DecoderState, CorrelationModel, DataUnit, FrameId, RateParams, VersionKind
from .scenario import Timeline
from .trellis import (
    CandidateSet,
    SchedulePolicy,
    canonical_ranks,
    full_neighborhood,
    opportunity_objective,
    temporal_neighborhood,
)


class TooLarge(ValueError):
    """Input exceeds the enumeration guard."""


def exhaustive_opportunity(
    tau: int,
    timeline: Timeline,
    candidates: CandidateSet,
    capacity: int,
    state: DecoderState,
    corr: CorrelationModel,
    rates: RateParams,
    lam: float,
    popularity: Sequence[Sequence[float]],
    transitions: Optional[Sequence] = None,
    guard: int = 20,
) -> SchedulePolicy:
    """Globally optimal schedule by enumerating every version assignment.

    Every frame independently gets one of {nothing, key, WZ, P} (restricted
    to versions actually in the candidate set); assignments violating the
    budget or SI constraints are discarded; the rest are evaluated exactly.
    Ties prefer fewer units, then the smallest canonical index set.
    """
    units = candidates.all_units()
    if len(units) > guard:
        raise TooLarge(f"{len(units)} candidate units exceed the guard of {guard}")
    ranks = canonical_ranks(candidates)
    by_frame: dict[FrameId, list[DataUnit]] = {}
    for du in units:
        by_frame.setdefault(du.frame, []).append(du)
    frames = sorted(by_frame, key=lambda f: (f.t, f.m))
    nbhd = {f: full_neighborhood(f, corr) for f in frames}
    nbhd_t = {f: temporal_neighborhood(f, corr) for f in frames}

    best: Optional[tuple[float, int, tuple[int, ...], tuple[DataUnit, ...]]] = None

    def consider(chosen: list[DataUnit]) -> None:
        nonlocal best
        key_frames = {du.frame for du in chosen if du.kind == VersionKind.KEY}
        for du in chosen:
            if du.kind == VersionKind.WZ:
                nb = nbhd[du.frame]
                if not any(state.key_delivered(g) or g in key_frames for g in nb):
                    return
            elif du.kind == VersionKind.P:
                nb = nbhd_t[du.frame]
                if not any(state.key_delivered(g) or g in key_frames for g in nb):
                    return
        hyp = state.extended([(du.frame, du.kind) for du in chosen])
        obj = opportunity_objective(
            tau, timeline, hyp, corr, rates, lam, popularity, transitions
        )
        picked = tuple(sorted(chosen, key=DataUnit.sort_key))
        entry = (obj, len(picked), tuple(ranks[du] for du in picked), picked)
        if best is None or entry[:3] < best[:3]:
            best = entry

    def recurse(i: int, chosen: list[DataUnit], cost: int) -> None:
        if i == len(frames):
            consider(chosen)
            return
        recurse(i + 1, chosen, cost)
        for du in by_frame[frames[i]]:
            if cost + du.cost <= capacity:
                chosen.append(du)
                recurse(i + 1, chosen, cost + du.cost)
                chosen.pop()

    recurse(0, [], 0)
    assert best is not None
    picked = best[3]
    return SchedulePolicy(picked, sum(du.cost for du in picked), best[0])


def exhaustive_knapsack(
    items: Sequence[tuple[float, int]],
    budget: int,
    guard: int = 20,
) -> tuple[tuple[int, ...], float]:
    """Max-reward feasible subset by full enumeration of all 2^n subsets.

    Values are accumulated item-by-item in decreasing index order (the same
    chain the DP recursion produces), so agreement with the DP solver is
    exact, not approximate.  Ties prefer fewer items, then the smallest
    index tuple.
    """
    n = len(items)
    if n > guard:
        raise TooLarge(f"{n} items exceed the guard of {guard}")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if n == 0:
        return (), 0.0
    size = 1 << n
    values = np.zeros(size)
    costs = np.zeros(size, dtype=np.int64)
    counts = np.zeros(size, dtype=np.int64)
    for j in range(n - 1, -1, -1):
        r, c = items[j]
        bit = 1 << j
        # within blocks of 2*bit, the upper half differs from the lower half
        # exactly by item j; sweeping items high-to-low leaves every subset
        # value accumulated in suffix order, mirroring the DP recursion
        v = values.reshape(-1, 2 * bit)
        v[:, bit:] = v[:, :bit] + r
        cc = costs.reshape(-1, 2 * bit)
        cc[:, bit:] = cc[:, :bit] + c
        nn = counts.reshape(-1, 2 * bit)
        nn[:, bit:] = nn[:, :bit] + 1
    feasible = costs <= budget
    best_value = float(values[feasible].max())
    tied = np.flatnonzero(feasible & (values == best_value))
    min_count = int(counts[tied].min())
    tied = [int(mask) for mask in tied if counts[mask] == min_count]
    best_mask = min(
        tied, key=lambda mask: tuple(j for j in range(n) if mask & (1 << j))
    )
    chosen = tuple(j for j in range(n) if best_mask & (1 << j))
    return chosen, best_value
