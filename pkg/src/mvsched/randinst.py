"""Seeded random scheduling instances for differential verification.

Generates small worlds (few cameras, few periods, random correlation
fields, random decoder states, integer budgets) on which the production
solver can be checked exactly against the exhaustive oracle.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .rdmodel import (
    CorrelationModel,
    DecoderState,
    FrameId,
    RateParams,
    VersionKind,
)
from .scenario import Timeline
from .trellis import CandidateSet, build_candidates


@dataclass
class Instance:
    tau: int
    timeline: Timeline
    corr: CorrelationModel
    rates: RateParams
    state: DecoderState
    capacity: int
    lam: float
    popularity: list[list[float]]
    transitions: list
    candidates: CandidateSet

    def solver_args(self) -> tuple:
        return (
            self.tau,
            self.timeline,
            self.candidates,
            self.capacity,
            self.state,
            self.corr,
            self.rates,
            self.lam,
            self.popularity,
            self.transitions,
        )


def _random_popularity(rng: random.Random, m_cams: int) -> list[float]:
    raw = [rng.uniform(0.05, 1.0) for _ in range(m_cams)]
    total = math.fsum(raw)
    row = [p / total for p in raw]
    # close the float gap so the slice passes the 1e-9 normalization check
    row[-1] = 1.0 - math.fsum(row[:-1])
    return row


def _random_transitions(rng: random.Random, m_cams: int) -> list[list[float]]:
    rows = []
    for _ in range(m_cams):
        raw = [rng.uniform(0.0, 1.0) for _ in range(m_cams)]
        total = math.fsum(raw)
        row = [p / total for p in raw]
        row[-1] = 1.0 - math.fsum(row[:-1])
        rows.append(row)
    return rows


def random_instance(
    seed: int,
    lam: float = 0.0,
    max_units: int = 12,
    max_cameras: int = 5,
) -> Instance:
    """One random instance with at most ``max_units`` candidate units."""
    rng = random.Random(seed)
    for _ in range(200):
        m_cams = rng.randint(2, max_cameras)
        n_frames = rng.randint(2, 4)
        timeline = Timeline(
            frames=n_frames,
            cameras=m_cams,
            acq_spacing=rng.randint(1, 3),
            deadline=rng.randint(1, 3),
        )
        spatial_extent = rng.choice([2, 4])
        temporal_extent = rng.choice([0, 1, 2])
        pairs: dict[tuple[FrameId, FrameId], float] = {}
        half = spatial_extent // 2
        for t in range(n_frames):
            for m in range(m_cams):
                f = FrameId(t, m)
                for l in range(max(0, m - half), min(m_cams, m + half + 1)):
                    if l != m and rng.random() < 0.8:
                        pairs[(f, FrameId(t, l))] = rng.uniform(0.15, 0.95)
                for back in range(1, temporal_extent + 1):
                    if t - back >= 0 and rng.random() < 0.7:
                        pairs[(f, FrameId(t - back, m))] = rng.uniform(0.15, 0.95)
        corr = CorrelationModel(spatial_extent, temporal_extent, 0.1, 0.1, pairs)

        key_cost = rng.randint(5, 12)
        mu_sigma2 = rng.uniform(500.0, 70000.0)
        d_key = rng.uniform(0.02, 0.3) * mu_sigma2
        rate_to_bits = math.log2(mu_sigma2 / d_key) / (2.0 * key_cost)
        rates = RateParams(
            key_cost=key_cost,
            mu_sigma2=mu_sigma2,
            d_max=rng.uniform(1.2, 6.0) * d_key,
            rate_to_bits=rate_to_bits,
        )

        keys = set()
        deps = {}
        for t in range(n_frames):
            for m in range(m_cams):
                f = FrameId(t, m)
                roll = rng.random()
                if roll < 0.2:
                    keys.add(f)
                elif roll < 0.3:
                    deps[f] = rng.choice([VersionKind.WZ, VersionKind.P])
        state = DecoderState(keys, deps.items())

        tau = rng.randint(1, timeline.horizon)
        capacity = rng.randint(0, 5 * key_cost)
        candidates = build_candidates(tau, timeline, state, corr, rates)
        if not 1 <= len(candidates) <= max_units:
            continue
        popularity = [_random_popularity(rng, m_cams) for _ in range(n_frames)]
        transitions = [None] + [_random_transitions(rng, m_cams) for _ in range(n_frames - 1)]
        return Instance(
            tau, timeline, corr, rates, state, capacity, lam,
            popularity, transitions, candidates,
        )
    raise RuntimeError(f"could not generate a valid instance from seed {seed}")
