"""Streaming-session driver and metric extraction.

Runs one scheduler over the whole acquisition timeline: at every slot the
live candidates are rebuilt, the scheduler picks a feasible set of units
within the realized capacity, deliveries accumulate in the decoder state,
and each frame's distortion is frozen when its deadline passes.  Loops
(channel realizations) are independent and can run in parallel; matched
seeds guarantee every scheduler sees bit-identical channel traces.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .baselines import SelectionScheduler, iterative_per_du, key_only_dynamic
from .rdmodel import (
    DecoderState,
    FrameId,
    VersionKind,
    frame_distortion,
    psnr,
)
from .scenario import ScenarioConfig, most_likely_path, popularity_evolution, realize_channel
from .trellis import SchedulePolicy, build_candidates, solve_opportunity, validate_policy

SCHEDULER_KINDS = ("trellis", "key-only", "static", "refreshed", "iterative")


class World:
    """Immutable per-config tables shared by all loops of a scenario."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.timeline = config.timeline
        self.rates = config.rates
        self.corr = config.correlation.build(config.timeline)
        m, nf = config.timeline.cameras, config.timeline.frames
        self.popularity = popularity_evolution(config.navigation, m, nf)
        self.transitions: list = [None] + [
            config.navigation.transition_matrix(t, m) for t in range(1, nf)
        ]


@dataclass
class SessionResult:
    scheduler: str
    loop_index: int
    lam: float
    distortion: list[list[float]]
    per_t_psnr: list[float]
    mean_psnr: float
    mean_weighted_variance: float
    popularity: list[list[float]]
    delivered: list[list[str]]
    schedule_log: list[dict]
    meta: dict = field(default_factory=dict)


def _make_scheduler(kind: str, world: World):
    lam = world.config.lam
    tl, corr, rates = world.timeline, world.corr, world.rates
    pop, trans = world.popularity, world.transitions

    if kind == "trellis":
        def run(tau, candidates, capacity, state):
            pol = solve_opportunity(
                tau, tl, candidates, capacity, state, corr, rates, lam, pop, trans
            )
            return pol, {}
    elif kind == "key-only":
        def run(tau, candidates, capacity, state):
            pol = key_only_dynamic(tau, tl, candidates, capacity, state, corr, rates, pop)
            return pol, {}
    elif kind in ("static", "refreshed"):
        sel = SelectionScheduler(kind == "refreshed", corr, rates, tl)

        def run(tau, candidates, capacity, state):
            pol = sel.schedule(tau, candidates, capacity, state, lam, pop, trans)
            return pol, {}
    elif kind == "iterative":
        def run(tau, candidates, capacity, state):
            pol, converged = iterative_per_du(
                tau, tl, candidates, capacity, state, corr, rates, lam, pop, trans
            )
            return pol, {"converged": converged}
    else:
        raise ValueError(f"unknown scheduler kind {kind!r} (expected one of {SCHEDULER_KINDS})")
    return run


def weighted_variance_slice(
    t: int,
    distortion: Sequence[Sequence[float]],
    popularity: Sequence[Sequence[float]],
    transitions: Sequence,
) -> float:
    """Navigation-weighted absolute quality variation for step t-1 -> t."""
    if t == 0:
        return 0.0
    w = transitions[t]
    prev = popularity[t - 1]
    m_cams = len(prev)
    return math.fsum(
        w[m][l] * prev[l] * abs(distortion[t - 1][l] - distortion[t][m])
        for m in range(m_cams)
        for l in range(m_cams)
    )


def run_session(world: World, scheduler: str, loop_index: int = 0) -> SessionResult:
    config = world.config
    tl = world.timeline
    nf, m_cams = tl.frames, tl.cameras
    channel = realize_channel(config.channel, tl.horizon, config.channel_seed(loop_index))
    schedule = _make_scheduler(scheduler, world)

    state = DecoderState()
    distortion: list[list[Optional[float]]] = [[None] * m_cams for _ in range(nf)]
    log: list[dict] = []
    unconverged = 0

    for tau in range(1, tl.horizon + 1):
        capacity = channel[tau - 1]
        candidates = build_candidates(tau, tl, state, world.corr, world.rates)
        if len(candidates):
            policy, meta = schedule(tau, candidates, capacity, state)
            validate_policy(policy, candidates, capacity, state, world.corr)
            if meta.get("converged") is False:
                unconverged += 1
            if policy.chosen:
                state = state.extended(policy.pairs())
            log.append(
                {
                    "tau": tau,
                    "capacity": capacity,
                    "cost": policy.total_cost,
                    "objective": policy.objective_value,
                    "units": [
                        (du.frame.t, du.frame.m, du.kind.value, du.cost)
                        for du in policy.chosen
                    ],
                }
            )
        # deadline reached: the decoder renders now, quality is final
        if (tau - config.timeline.deadline) % tl.acq_spacing == 0:
            t = (tau - config.timeline.deadline) // tl.acq_spacing
            if 0 <= t < nf:
                for m in range(m_cams):
                    distortion[t][m] = frame_distortion(
                        FrameId(t, m), state, world.corr, world.rates
                    )

    assert all(d is not None for row in distortion for d in row)
    pop = world.popularity
    # per-period quality: PSNR of the popularity-weighted expected distortion
    per_t = [
        psnr(math.fsum(pop[t][m] * distortion[t][m] for m in range(m_cams)))
        for t in range(nf)
    ]
    mean_psnr = math.fsum(per_t) / nf
    if nf > 1:
        mwv = math.fsum(
            weighted_variance_slice(t, distortion, pop, world.transitions)
            for t in range(1, nf)
        ) / (nf - 1)
    else:
        mwv = 0.0
    delivered = [["" for _ in range(m_cams)] for _ in range(nf)]
    for f in state.keys:
        delivered[f.t][f.m] = VersionKind.KEY.value
    for f, kind in state.dependents.items():
        delivered[f.t][f.m] = kind.value
    meta = {"unconverged_opportunities": unconverged} if scheduler == "iterative" else {}
    return SessionResult(
        scheduler=scheduler,
        loop_index=loop_index,
        lam=config.lam,
        distortion=[list(row) for row in distortion],
        per_t_psnr=per_t,
        mean_psnr=mean_psnr,
        mean_weighted_variance=mwv,
        popularity=pop,
        delivered=delivered,
        schedule_log=log,
        meta=meta,
    )


def _run_batch(config: ScenarioConfig, scheduler: str, loops: Sequence[int]) -> list[SessionResult]:
    world = World(config)
    return [run_session(world, scheduler, i) for i in loops]


def default_workers() -> int:
    env = os.environ.get("MVSCHED_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_loops(
    config: ScenarioConfig,
    scheduler: str,
    loops: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[SessionResult]:
    """All channel realizations of one scenario, merged by loop index."""
    n = config.loops if loops is None else loops
    w = workers if workers is not None else default_workers()
    w = min(w, n)
    indices = list(range(n))
    if w <= 1:
        return _run_batch(config, scheduler, indices)
    chunks = [indices[i::w] for i in range(w)]
    results: list[Optional[SessionResult]] = [None] * n
    with ProcessPoolExecutor(max_workers=w) as pool:
        futures = [pool.submit(_run_batch, config, scheduler, chunk) for chunk in chunks]
        for fut in futures:
            for res in fut.result():
                results[res.loop_index] = res
    assert all(r is not None for r in results)
    return results


def mean_over_loops(results: Sequence[SessionResult]) -> tuple[float, float]:
    """(mean PSNR, mean weighted variance) averaged over loops."""
    n = len(results)
    return (
        math.fsum(r.mean_psnr for r in results) / n,
        math.fsum(r.mean_weighted_variance for r in results) / n,
    )


def sweep_lambda(
    config: ScenarioConfig,
    lambdas: Sequence[float],
    scheduler: str = "trellis",
    loops: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[dict]:
    """Quality-variance tradeoff rows, matched channel seeds across lambdas."""
    rows = []
    for lam in lambdas:
        results = run_loops(config.with_lambda(lam), scheduler, loops, workers)
        mean_q, mean_v = mean_over_loops(results)
        rows.append(
            {
                "lambda": lam,
                "scheduler": scheduler,
                "loops": len(results),
                "mean_psnr_db": mean_q,
                "mean_weighted_variance": mean_v,
            }
        )
    return rows


def mlp_trace(result: SessionResult, config: ScenarioConfig, start_view: int) -> tuple[list[float], float]:
    """Per-step PSNR along the most likely navigation path from a start view."""
    path = most_likely_path(
        config.navigation, config.timeline.cameras, config.timeline.frames, start_view
    )
    trace = [psnr(result.distortion[f.t][f.m]) for f in path]
    return trace, math.fsum(trace) / len(trace)
