"""Per-opportunity optimal packet selection.

At each transmission opportunity the scheduler picks a set of data units
(key / WZ / P versions of live frames) fitting the slot capacity so that
the popularity-weighted distortion of live frames, plus lambda times the
expected quality variation along navigation edges, is minimized.

Key versions are reward-dependent (delivered keys cover each other's
frames), so subsets of keys are enumerated depth-first in canonical order.
Dependent versions are reward-independent once the key set is fixed: every
enumeration node is closed by an exact 0/1 knapsack over the dependent
units that are decodable given the keys already available or chosen.  This
keeps the search exponential only in the number of keys fitting the
budget, with no loss of optimality when lambda is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .rdmodel import (
    KIND_RANK,
    CorrelationModel,
    DataUnit,
    DecoderState,
    FrameId,
    RateParams,
    VersionKind,
    frame_distortion,
    full_neighborhood,
    p_rate,
    temporal_neighborhood,
    wz_rate,
)
from .scenario import Timeline


class SolverGuardExceeded(RuntimeError):
    """Raised when the search would explore more states than allowed."""


class PolicyViolation(RuntimeError):
    """A schedule broke a feasibility constraint (budget / versions / SI)."""


@dataclass(frozen=True)
class CandidateSet:
    """Schedulable units at one opportunity: keys and dependent versions."""

    keys: tuple[DataUnit, ...]
    dependents: tuple[DataUnit, ...]

    def all_units(self) -> tuple[DataUnit, ...]:
        return tuple(sorted(self.keys + self.dependents, key=DataUnit.sort_key))

    def __len__(self) -> int:
        return len(self.keys) + len(self.dependents)


@dataclass(frozen=True)
class SchedulePolicy:
    """Chosen units for one opportunity, with their true objective value."""

    chosen: tuple[DataUnit, ...]
    total_cost: int
    objective_value: float

    def pairs(self) -> tuple[tuple[FrameId, VersionKind], ...]:
        return tuple((du.frame, du.kind) for du in self.chosen)


def live_frames(tau: int, timeline: Timeline) -> list[FrameId]:
    return [
        FrameId(t, m)
        for t in timeline.live_periods(tau)
        for m in range(timeline.cameras)
    ]


def build_candidates(
    tau: int,
    timeline: Timeline,
    state: DecoderState,
    corr: CorrelationModel,
    rates: RateParams,
) -> CandidateSet:
    """All live, undelivered units schedulable at slot tau.

    Dependent versions whose SI could not possibly be satisfied (no key of
    the neighborhood delivered nor itself a key candidate) are dropped.
    """
    keys: list[DataUnit] = []
    dep_raw: list[tuple[DataUnit, set[FrameId]]] = []
    key_frames: set[FrameId] = set()
    for t in timeline.live_periods(tau):
        acq, exp = timeline.t_acq(t), timeline.t_expire(t)
        for m in range(timeline.cameras):
            f = FrameId(t, m)
            if state.has_any(f):
                continue
            keys.append(DataUnit(f, VersionKind.KEY, rates.key_cost, acq, exp))
            key_frames.add(f)
            nb = full_neighborhood(f, corr)
            if nb:
                dep_raw.append((DataUnit(f, VersionKind.WZ, wz_rate(f, corr, rates), acq, exp), nb))
            nbt = temporal_neighborhood(f, corr)
            if nbt:
                dep_raw.append((DataUnit(f, VersionKind.P, p_rate(f, corr, rates), acq, exp), nbt))
    deps = [
        du for du, nb in dep_raw
        if any(state.key_delivered(g) or g in key_frames for g in nb)
    ]
    keys.sort(key=DataUnit.sort_key)
    deps.sort(key=DataUnit.sort_key)
    return CandidateSet(tuple(keys), tuple(deps))


def opportunity_objective(
    tau: int,
    timeline: Timeline,
    state: DecoderState,
    corr: CorrelationModel,
    rates: RateParams,
    lam: float,
    popularity: Sequence[Sequence[float]],
    transitions: Optional[Sequence[Optional[Sequence[Sequence[float]]]]],
) -> float:
    """Objective value of the live slice under a hypothetical decoder state.

    This is the one canonical evaluation; the solver's incremental
    bookkeeping and the brute-force oracle must reproduce it bit-for-bit
    (all sums go through math.fsum, so term order is irrelevant).
    """
    frames = live_frames(tau, timeline)
    m_cams = timeline.cameras
    dist = {f: frame_distortion(f, state, corr, rates) for f in frames}
    terms = [popularity[f.t][f.m] * dist[f] for f in frames]
    if lam != 0.0:
        prev_cache: dict[FrameId, float] = {}

        def d_at(g: FrameId) -> float:
            if g in dist:
                return dist[g]
            if g not in prev_cache:
                prev_cache[g] = frame_distortion(g, state, corr, rates)
            return prev_cache[g]

        for f in frames:
            if f.t < 1:
                continue
            row = transitions[f.t][f.m]
            prev = popularity[f.t - 1]
            sub = [
                row[l] * prev[l] * abs(d_at(FrameId(f.t - 1, l)) - dist[f])
                for l in range(m_cams)
            ]
            terms.append(lam * math.fsum(sub))
    return math.fsum(terms)


def marginal_reward(
    du: DataUnit,
    tau: int,
    timeline: Timeline,
    state: DecoderState,
    chosen: Iterable[DataUnit],
    corr: CorrelationModel,
    rates: RateParams,
    lam: float,
    popularity: Sequence[Sequence[float]],
    transitions: Optional[Sequence] = None,
) -> float:
    """Objective drop from adding du on top of the units chosen so far."""
    base_pairs = [(u.frame, u.kind) for u in chosen]
    without = state.extended(base_pairs)
    within = state.extended(base_pairs + [(du.frame, du.kind)])
    a = opportunity_objective(tau, timeline, without, corr, rates, lam, popularity, transitions)
    b = opportunity_objective(tau, timeline, within, corr, rates, lam, popularity, transitions)
    return a - b


def solve_knapsack(
    items: Sequence[tuple[float, int]],
    budget: int,
) -> tuple[tuple[int, ...], float]:
    """Exact 0/1 knapsack: items are (reward, integer cost >= 1) pairs.

    Returns the chosen index tuple and its total reward.  Among maximum-
    reward subsets the one with fewest items, then the lexicographically
    smallest index tuple, is returned; the suffix tables make the
    reconstruction replay the exact cell arithmetic, so selection is
    deterministic even under floating-point ties.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    n = len(items)
    costs = [c for _, c in items]
    for c in costs:
        if not isinstance(c, int) or c < 1:
            raise ValueError("item costs must be integers >= 1")
    cap = min(int(budget), sum(costs)) if n else 0
    if n == 0 or cap == 0:
        return (), 0.0
    # suffix DP: bv[j][w] best reward using items j.., bn[j][w] min item
    # count among best-reward subsets
    bv = np.zeros((n + 1, cap + 1))
    bn = np.zeros((n + 1, cap + 1), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        r, c = items[j]
        skip_v, skip_n = bv[j + 1], bn[j + 1]
        take_v = np.full(cap + 1, -np.inf)
        take_n = np.zeros(cap + 1, dtype=np.int64)
        if c <= cap:
            take_v[c:] = bv[j + 1][: cap + 1 - c] + r
            take_n[c:] = bn[j + 1][: cap + 1 - c] + 1
        better = take_v > skip_v
        equal = take_v == skip_v
        bv[j] = np.where(better, take_v, skip_v)
        bn[j] = np.where(better, take_n, np.where(equal, np.minimum(take_n, skip_n), skip_n))
    chosen: list[int] = []
    w = cap
    for j in range(n):
        r, c = items[j]
        sv = float(bv[j + 1][w])
        sn = int(bn[j + 1][w])
        if c <= w:
            tv = float(bv[j + 1][w - c] + r)
            tn = int(bn[j + 1][w - c]) + 1
        else:
            tv, tn = -math.inf, 0
        # replay the cell decision; on a full tie taking the lower index
        # yields the lexicographically smallest set
        if tv > sv or (tv == sv and tn <= sn):
            chosen.append(j)
            w -= c
    return tuple(chosen), float(bv[0][cap])


class OpportunityContext:
    """Incremental evaluator of the per-opportunity objective.

    Holds the distortion field of the live slice (plus the predecessor
    period needed by the smoothness terms) and updates only the frames a
    pushed key or applied dependent can touch.  Produces bit-identical
    objective values to ``opportunity_objective`` by recomputing affected
    frames with the same arithmetic and summing with math.fsum.
    """

    def __init__(
        self,
        tau: int,
        timeline: Timeline,
        state: DecoderState,
        corr: CorrelationModel,
        rates: RateParams,
        lam: float,
        popularity: Sequence[Sequence[float]],
        transitions: Optional[Sequence] = None,
    ):
        self.lam = lam
        self.d_full = rates.intra_distortion()
        self.d_max = rates.d_max
        m_cams = timeline.cameras
        self.m_cams = m_cams
        live_periods = list(timeline.live_periods(tau))
        live_set = set(live_periods)
        periods = sorted(set(live_periods) | {t - 1 for t in live_periods if t >= 1})

        self.frames: list[FrameId] = []
        self.idx: dict[FrameId, int] = {}
        self.period_base: dict[int, int] = {}
        for t in periods:
            self.period_base[t] = len(self.frames)
            for m in range(m_cams):
                f = FrameId(t, m)
                self.idx[f] = len(self.frames)
                self.frames.append(f)

        nf = len(self.frames)
        self.live: list[bool] = [f.t in live_set for f in self.frames]
        self.live_idx: list[int] = [i for i in range(nf) if self.live[i]]
        self.pop: list[float] = [
            popularity[f.t][f.m] if self.live[i] else 0.0
            for i, f in enumerate(self.frames)
        ]
        self.sources: list[list[tuple[FrameId, float]]] = [corr.sources(f) for f in self.frames]
        self.nbhd: list[frozenset[FrameId]] = [frozenset(full_neighborhood(f, corr)) for f in self.frames]
        self.nbhd_t: list[frozenset[FrameId]] = [frozenset(temporal_neighborhood(f, corr)) for f in self.frames]
        self.base_keys = state.keys
        self.base_dep: list[Optional[VersionKind]] = [state.dependent_kind(f) for f in self.frames]
        self.wz_base_ok: list[bool] = [
            any(state.key_delivered(g) for g in self.nbhd[i]) for i in range(nf)
        ]
        self.p_base_ok: list[bool] = [
            any(state.key_delivered(g) for g in self.nbhd_t[i]) for i in range(nf)
        ]
        # reverse correlation map: pushing a key for frame g touches rev[g]
        self.rev: dict[FrameId, list[int]] = {}
        for i, src in enumerate(self.sources):
            for g, _ in src:
                self.rev.setdefault(g, []).append(i)

        self.smoothed: list[bool] = [
            self.live[i] and f.t >= 1 and lam != 0.0 for i, f in enumerate(self.frames)
        ]
        self.sm_idx: list[int] = [i for i in range(nf) if self.smoothed[i]]
        self.w_row: list[Optional[Sequence[float]]] = [None] * nf
        self.prev_pop: list[Optional[Sequence[float]]] = [None] * nf
        for i in self.sm_idx:
            f = self.frames[i]
            self.w_row[i] = transitions[f.t][f.m]
            self.prev_pop[i] = popularity[f.t - 1]
        # live frames of period t+1, keyed by t (smoothness forward edges)
        self.forward_of: dict[int, list[int]] = {}
        for i in self.sm_idx:
            self.forward_of.setdefault(self.frames[i].t - 1, []).append(i)

        self.pushed: list[FrameId] = []
        self.pushed_set: set[FrameId] = set()
        self._journals: list[list[tuple[str, int, float]]] = []

        self.dist: list[float] = [self._compute_dist(i, None) for i in range(nf)]
        self.pterm: list[float] = [
            self.pop[i] * self.dist[i] if self.live[i] else 0.0 for i in range(nf)
        ]
        self.smterm: list[float] = [0.0] * nf
        for i in self.sm_idx:
            self.smterm[i] = self._sm_value(i, self.dist[i])

    # -- field recomputation ------------------------------------------------

    def _key_on(self, g: FrameId) -> bool:
        return g in self.base_keys or g in self.pushed_set

    def _compute_dist(self, i: int, dep_map: Optional[dict[FrameId, VersionKind]]) -> float:
        f = self.frames[i]
        if self._key_on(f):
            return self.d_full
        dep = self.base_dep[i]
        if dep is None and dep_map is not None:
            dep = dep_map.get(f)
        if dep == VersionKind.WZ:
            if self.wz_base_ok[i] or any(k in self.nbhd[i] for k in self.pushed_set):
                return self.d_full
        elif dep == VersionKind.P:
            if self.p_base_ok[i] or any(k in self.nbhd_t[i] for k in self.pushed_set):
                return self.d_full
        prod = 1.0
        for g, rho in self.sources[i]:
            if self._key_on(g):
                prod *= 1.0 - rho
        cov = 1.0 - prod
        return cov * self.d_full + (1.0 - cov) * self.d_max

    def _sm_value(self, i: int, d_f: float) -> float:
        row = self.w_row[i]
        prev = self.prev_pop[i]
        base = self.period_base[self.frames[i].t - 1]
        dist = self.dist
        sub = [row[l] * prev[l] * abs(dist[base + l] - d_f) for l in range(self.m_cams)]
        return self.lam * math.fsum(sub)

    def _apply_dist(
        self,
        updates: Iterable[int],
        dep_map: Optional[dict[FrameId, VersionKind]],
        journal: list[tuple[str, int, float]],
    ) -> None:
        touched: list[int] = []
        for i in updates:
            new = self._compute_dist(i, dep_map)
            if new != self.dist[i]:
                journal.append(("d", i, self.dist[i]))
                self.dist[i] = new
                touched.append(i)
        sm_dirty: set[int] = set()
        for i in touched:
            if self.live[i]:
                journal.append(("p", i, self.pterm[i]))
                self.pterm[i] = self.pop[i] * self.dist[i]
            if self.smoothed[i]:
                sm_dirty.add(i)
            sm_dirty.update(self.forward_of.get(self.frames[i].t, ()))
        for i in sm_dirty:
            journal.append(("s", i, self.smterm[i]))
            self.smterm[i] = self._sm_value(i, self.dist[i])

    def _undo(self, journal: list[tuple[str, int, float]]) -> None:
        for kind, i, old in reversed(journal):
            if kind == "d":
                self.dist[i] = old
            elif kind == "p":
                self.pterm[i] = old
            else:
                self.smterm[i] = old

    # -- search interface ----------------------------------------------------

    def push_key(self, g: FrameId) -> None:
        self.pushed.append(g)
        self.pushed_set.add(g)
        journal: list[tuple[str, int, float]] = []
        affected = list(self.rev.get(g, ()))
        if g in self.idx:
            affected.append(self.idx[g])
        self._apply_dist(affected, None, journal)
        self._journals.append(journal)

    def pop_key(self) -> None:
        g = self.pushed.pop()
        self.pushed_set.discard(g)
        self._undo(self._journals.pop())

    def dep_feasible(self, du: DataUnit) -> bool:
        i = self.idx[du.frame]
        if du.kind == VersionKind.WZ:
            return self.wz_base_ok[i] or any(k in self.nbhd[i] for k in self.pushed_set)
        return self.p_base_ok[i] or any(k in self.nbhd_t[i] for k in self.pushed_set)

    def dep_reward(self, du: DataUnit) -> float:
        """Objective drop from delivering du now, other dependents absent."""
        i = self.idx[du.frame]
        d_now = self.dist[i]
        d_new = self.d_full
        delta = self.pop[i] * d_now - self.pop[i] * d_new
        if self.lam != 0.0:
            if self.smoothed[i]:
                delta += self.smterm[i] - self._sm_value(i, d_new)
            t = self.frames[i].t
            m = self.frames[i].m
            for j in self.forward_of.get(t, ()):
                row = self.w_row[j]
                prev = self.prev_pop[j]
                d_j = self.dist[j]
                delta += self.lam * (
                    row[m] * prev[m] * abs(d_now - d_j)
                    - row[m] * prev[m] * abs(d_new - d_j)
                )
        return delta

    def objective(self) -> float:
        terms = [self.pterm[i] for i in self.live_idx]
        if self.lam != 0.0:
            terms.extend(self.smterm[i] for i in self.sm_idx)
        return math.fsum(terms)

    def objective_with_deps(self, deps: Sequence[DataUnit]) -> float:
        if not deps:
            return self.objective()
        dep_map = {du.frame: du.kind for du in deps}
        journal: list[tuple[str, int, float]] = []
        self._apply_dist([self.idx[du.frame] for du in deps], dep_map, journal)
        obj = self.objective()
        self._undo(journal)
        return obj


def canonical_ranks(candidates: CandidateSet) -> dict[DataUnit, int]:
    return {du: i for i, du in enumerate(candidates.all_units())}


def solve_opportunity(
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
    max_states: int = 10_000_000,
    stats: Optional[dict] = None,
) -> SchedulePolicy:
    """Optimal schedule for one opportunity.

    Depth-first enumeration over canonically ordered key subsets fitting
    the budget; every node is additionally closed by a no-more-keys branch
    whose dependent tail is an exact knapsack.  Ties on the objective
    prefer fewer units, then the lexicographically smallest canonical
    index set.  ``stats`` (if given) receives the explored state count.
    """
    ctx = OpportunityContext(tau, timeline, state, corr, rates, lam, popularity, transitions)
    keys = tuple(sorted(candidates.keys, key=DataUnit.sort_key))
    deps = tuple(sorted(candidates.dependents, key=DataUnit.sort_key))
    ranks = canonical_ranks(candidates)
    best: Optional[tuple[float, int, tuple[int, ...], tuple[DataUnit, ...]]] = None
    states = 0

    def close_terminal(chosen_keys: list[DataUnit], remaining: int) -> None:
        nonlocal best, states
        states += 1
        if states > max_states:
            raise SolverGuardExceeded(
                f"exceeded {max_states} explored states; raise max_states to proceed"
            )
        key_frames = {du.frame for du in chosen_keys}
        per_frame: dict[FrameId, DataUnit] = {}
        for du in deps:
            if du.frame in key_frames or not ctx.dep_feasible(du):
                continue
            cur = per_frame.get(du.frame)
            # equal distortion effect per frame: cheaper version dominates
            if cur is None or (du.cost, KIND_RANK[du.kind]) < (cur.cost, KIND_RANK[cur.kind]):
                per_frame[du.frame] = du
        chosen_deps: tuple[DataUnit, ...] = ()
        if per_frame and remaining > 0:
            items = sorted(per_frame.values(), key=DataUnit.sort_key)
            sel, _ = solve_knapsack([(ctx.dep_reward(du), du.cost) for du in items], remaining)
            chosen_deps = tuple(items[i] for i in sel)
        obj = ctx.objective_with_deps(chosen_deps)
        units = tuple(sorted(list(chosen_keys) + list(chosen_deps), key=DataUnit.sort_key))
        entry = (obj, len(units), tuple(ranks[du] for du in units), units)
        if best is None or entry[:3] < best[:3]:
            best = entry

    def dfs(start: int, chosen_keys: list[DataUnit], remaining: int) -> None:
        close_terminal(chosen_keys, remaining)
        for i in range(start, len(keys)):
            du = keys[i]
            if du.cost <= remaining:
                ctx.push_key(du.frame)
                chosen_keys.append(du)
                dfs(i + 1, chosen_keys, remaining - du.cost)
                chosen_keys.pop()
                ctx.pop_key()

    dfs(0, [], int(capacity))
    assert best is not None
    if stats is not None:
        stats["explored_states"] = states
    units = best[3]
    return SchedulePolicy(units, sum(u.cost for u in units), best[0])


def policy_violations(
    policy: SchedulePolicy,
    candidates: CandidateSet,
    capacity: int,
    state: DecoderState,
    corr: CorrelationModel,
) -> list[str]:
    """Check budget, one-version-per-frame and SI-availability constraints."""
    problems: list[str] = []
    valid = set(candidates.all_units())
    cost = 0
    seen: set[FrameId] = set()
    chosen_keys = {du.frame for du in policy.chosen if du.kind == VersionKind.KEY}
    for du in policy.chosen:
        if du not in valid:
            problems.append(f"{du.frame}/{du.kind.value} is not a candidate")
            continue
        if du.frame in seen:
            problems.append(f"multiple versions of {du.frame} scheduled")
        seen.add(du.frame)
        if state.has_any(du.frame):
            problems.append(f"{du.frame} already has a delivered version")
        cost += du.cost
        if du.kind == VersionKind.WZ:
            nb = full_neighborhood(du.frame, corr)
            if not any(state.key_delivered(g) or g in chosen_keys for g in nb):
                problems.append(f"WZ of {du.frame} has no available SI key")
        elif du.kind == VersionKind.P:
            nbt = temporal_neighborhood(du.frame, corr)
            if not any(state.key_delivered(g) or g in chosen_keys for g in nbt):
                problems.append(f"P of {du.frame} has no available SI key")
    if cost > capacity:
        problems.append(f"total cost {cost} exceeds capacity {capacity}")
    if cost != policy.total_cost:
        problems.append(f"declared cost {policy.total_cost} != actual {cost}")
    return problems


def validate_policy(
    policy: SchedulePolicy,
    candidates: CandidateSet,
    capacity: int,
    state: DecoderState,
    corr: CorrelationModel,
) -> None:
    problems = policy_violations(policy, candidates, capacity, state, corr)
    if problems:
        raise PolicyViolation("; ".join(problems))
