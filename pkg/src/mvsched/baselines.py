"""Reference scheduling policies the optimal solver is compared against.

Four competitors:

* static selection   -- camera priority order and coding modes fixed once
                        from the period-0 correlation slice, then replayed
                        every period, blind to channel state and decoder
                        state;
* refreshed selection -- same construction but recomputed from each
                        period's own correlation slice (still channel- and
                        decoder-blind);
* key-only dynamic   -- the optimal per-opportunity solver restricted to
                        key versions, smoothness weight forced to zero;
* iterative per-DU   -- coordinate descent over frames, toggling each
                        frame's version to the locally best feasible choice
                        until a sweep makes no change (capped sweeps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .rdmodel import (
    CorrelationModel,
    DataUnit,
    DecoderState,
    FrameId,
    RateParams,
    VersionKind,
    full_neighborhood,
    spatial_neighborhood,
)
from .scenario import Timeline
from .trellis import (
    CandidateSet,
    OpportunityContext,
    SchedulePolicy,
    solve_opportunity,
)


class BaselineKind(Enum):
    STATIC_SELECTION = "static-selection"
    REFRESHED_SELECTION = "refreshed-selection"
    KEY_ONLY_DYNAMIC = "key-only"
    ITERATIVE_PER_DU = "iterative"


def selection_order(
    period: int,
    m_cams: int,
    corr: CorrelationModel,
    rates: RateParams,
) -> list[tuple[int, VersionKind]]:
    """Camera priority list with fixed coding modes for one period's slice.

    Cameras are ranked greedily by coverage deficiency: each step picks the
    camera whose frame is currently worst covered by the keys of already
    selected anchors (ties to the lowest index).  A camera becomes an
    anchor (key mode) when no earlier anchor lies in its spatial
    neighborhood; otherwise its frame is reachable from an anchor and the
    cheaper WZ mode is used.
    """
    d_full = rates.intra_distortion()
    anchors: set[FrameId] = set()
    remaining = set(range(m_cams))
    order: list[tuple[int, VersionKind]] = []
    while remaining:
        deficiency = {}
        for m in remaining:
            f = FrameId(period, m)
            prod = 1.0
            for g, rho in corr.sources(f):
                if g in anchors:
                    prod *= 1.0 - rho
            cov = 1.0 - prod
            deficiency[m] = cov * d_full + (1.0 - cov) * rates.d_max
        pick = max(remaining, key=lambda m: (deficiency[m], -m))
        f = FrameId(period, pick)
        if anchors & spatial_neighborhood(f, corr):
            order.append((pick, VersionKind.WZ))
        else:
            order.append((pick, VersionKind.KEY))
            anchors.add(f)
        remaining.discard(pick)
    return order


@dataclass
class SelectionScheduler:
    """Priority-list replay: schedule down the list until the budget is full.

    ``refresh`` chooses between the period-0 slice (static variant) and the
    current period's slice (refreshed variant).
    """

    refresh: bool
    corr: CorrelationModel
    rates: RateParams
    timeline: Timeline
    _orders: dict[int, list[tuple[int, VersionKind]]] = field(default_factory=dict)

    def order_for(self, period: int) -> list[tuple[int, VersionKind]]:
        slice_t = period if self.refresh else 0
        if slice_t not in self._orders:
            self._orders[slice_t] = selection_order(
                slice_t, self.timeline.cameras, self.corr, self.rates
            )
        return self._orders[slice_t]

    def schedule(
        self,
        tau: int,
        candidates: CandidateSet,
        capacity: int,
        state: DecoderState,
        lam: float,
        popularity: Sequence[Sequence[float]],
        transitions: Optional[Sequence] = None,
    ) -> SchedulePolicy:
        by_key = {(du.frame, du.kind): du for du in candidates.all_units()}
        chosen: list[DataUnit] = []
        chosen_keys: set[FrameId] = set()
        remaining = capacity
        for t in self.timeline.live_periods(tau):
            for cam, kind in self.order_for(t):
                du = by_key.get((FrameId(t, cam), kind))
                if du is None or du.cost > remaining:
                    continue
                if du.kind == VersionKind.WZ:
                    nb = full_neighborhood(du.frame, self.corr)
                    if not any(state.key_delivered(g) or g in chosen_keys for g in nb):
                        continue
                chosen.append(du)
                if du.kind == VersionKind.KEY:
                    chosen_keys.add(du.frame)
                remaining -= du.cost
        chosen.sort(key=DataUnit.sort_key)
        ctx = OpportunityContext(
            tau, self.timeline, state, self.corr, self.rates, lam, popularity, transitions
        )
        keys = [du for du in chosen if du.kind == VersionKind.KEY]
        deps = [du for du in chosen if du.kind != VersionKind.KEY]
        for du in keys:
            ctx.push_key(du.frame)
        obj = ctx.objective_with_deps(deps)
        return SchedulePolicy(tuple(chosen), sum(du.cost for du in chosen), obj)


def key_only_dynamic(
    tau: int,
    timeline: Timeline,
    candidates: CandidateSet,
    capacity: int,
    state: DecoderState,
    corr: CorrelationModel,
    rates: RateParams,
    popularity: Sequence[Sequence[float]],
    max_states: int = 10_000_000,
) -> SchedulePolicy:
    """Optimal solver restricted to key candidates, smoothness-blind."""
    restricted = CandidateSet(candidates.keys, ())
    return solve_opportunity(
        tau, timeline, restricted, capacity, state, corr, rates,
        0.0, popularity, None, max_states=max_states,
    )


def iterative_per_du(
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
    max_sweeps: int = 10,
) -> tuple[SchedulePolicy, bool]:
    """Coordinate-descent schedule refinement, one frame at a time.

    Sweeps frames in canonical order; each visit re-decides that frame's
    version (including sending nothing) to whatever minimizes the
    objective while keeping the rest of the policy fixed and feasible.
    Stops after a sweep without changes or ``max_sweeps``; the flag
    reports convergence.  Feasible by construction, optimal not
    guaranteed.
    """
    ctx = OpportunityContext(tau, timeline, state, corr, rates, lam, popularity, transitions)
    by_frame: dict[FrameId, list[DataUnit]] = {}
    for du in candidates.all_units():
        by_frame.setdefault(du.frame, []).append(du)
    frames = sorted(by_frame, key=lambda f: (f.t, f.m))
    current: dict[FrameId, Optional[DataUnit]] = {f: None for f in frames}

    def total_cost() -> int:
        return sum(du.cost for du in current.values() if du is not None)

    def feasible_with(frame: FrameId, choice: Optional[DataUnit]) -> bool:
        units = {f: (choice if f == frame else du) for f, du in current.items()}
        cost = sum(du.cost for du in units.values() if du is not None)
        if cost > capacity:
            return False
        keys = {f for f, du in units.items() if du is not None and du.kind == VersionKind.KEY}
        for f, du in units.items():
            if du is None or du.kind == VersionKind.KEY:
                continue
            nb = ctx.nbhd[ctx.idx[f]] if du.kind == VersionKind.WZ else ctx.nbhd_t[ctx.idx[f]]
            if not any(state.key_delivered(g) or g in keys for g in nb):
                return False
        return True

    def evaluate(units: dict[FrameId, Optional[DataUnit]]) -> float:
        keys = [du for du in units.values() if du is not None and du.kind == VersionKind.KEY]
        deps = [du for du in units.values() if du is not None and du.kind != VersionKind.KEY]
        for du in keys:
            ctx.push_key(du.frame)
        obj = ctx.objective_with_deps(deps)
        for _ in keys:
            ctx.pop_key()
        return obj

    best_obj = evaluate(current)
    converged = False
    for _ in range(max_sweeps):
        changed = False
        for f in frames:
            options: list[Optional[DataUnit]] = [None] + by_frame[f]
            for choice in options:
                if choice is current[f]:
                    continue
                if not feasible_with(f, choice):
                    continue
                trial = dict(current)
                trial[f] = choice
                obj = evaluate(trial)
                if obj < best_obj:
                    current = trial
                    best_obj = obj
                    changed = True
        if not changed:
            converged = True
            break
    chosen = tuple(sorted((du for du in current.values() if du is not None), key=DataUnit.sort_key))
    policy = SchedulePolicy(chosen, sum(du.cost for du in chosen), best_obj)
    return policy, converged
