"""Experiment world generation: timeline, channel, navigation, correlation.

A scenario is a declarative description of one streaming experiment:
camera array and acquisition timeline, the bandwidth process of the
bottleneck channel, the view-switching behavior of the audience, the
synthetic pairwise-correlation field, encoding rates, and the weight
lambda put on navigation smoothness.  Scenarios load from JSON
(``schema: 1``); unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .rdmodel import CorrelationModel, FrameId, RateParams


class BadConfig(ValueError):
    """Raised for malformed scenario files or inconsistent parameters."""


@dataclass(frozen=True)
class Timeline:
    """Acquisition grid and slot bookkeeping.

    Slots are unit-length; slot 1 is the first transmission opportunity
    and the first acquisition instant.  A frame of period t is acquired at
    ``1 + t*acq_spacing`` and can be scheduled during ``deadline``
    consecutive slots (transmission finishing exactly at expiry is
    allowed).
    """

    frames: int
    cameras: int
    acq_spacing: int = 4
    deadline: int = 1

    def __post_init__(self) -> None:
        if self.frames < 1 or self.cameras < 1:
            raise BadConfig("frames and cameras must be positive")
        if self.acq_spacing < 1:
            raise BadConfig("acq_spacing must be >= 1")
        if self.deadline < 1:
            raise BadConfig("deadline must be >= 1")

    def t_acq(self, t: int) -> int:
        return 1 + t * self.acq_spacing

    def t_expire(self, t: int) -> int:
        return self.t_acq(t) + self.deadline

    @property
    def horizon(self) -> int:
        """Last slot at which anything can still be scheduled."""
        return self.t_expire(self.frames - 1) - 1

    def live_periods(self, tau: int) -> range:
        """Periods with at least one schedulable frame at slot tau."""
        if tau < 1:
            return range(0)
        # t_acq(t) <= tau  and  tau <= t_expire(t) - 1
        lo = max(0, -(-(tau - self.deadline) // self.acq_spacing))  # ceil division
        hi = min(self.frames - 1, (tau - 1) // self.acq_spacing)
        return range(lo, hi + 1)


@dataclass(frozen=True)
class ChannelModel:
    """Bottleneck bandwidth process: constant, or a two-state Markov chain."""

    kind: str = "static"  # "static" | "markov"
    capacity: int = 200
    good_capacity: int = 200
    bad_capacity: int = 100
    transition_prob: float = 0.8
    initial_state: str = "good"

    def __post_init__(self) -> None:
        if self.kind not in ("static", "markov"):
            raise BadConfig(f"unknown channel kind {self.kind!r}")
        if self.kind == "static":
            if self.capacity < 0:
                raise BadConfig("capacity must be non-negative")
        else:
            if not self.good_capacity >= self.bad_capacity >= 0:
                raise BadConfig("need good_capacity >= bad_capacity >= 0")
            if not 0.0 <= self.transition_prob <= 1.0:
                raise BadConfig("transition_prob must lie in [0, 1]")
            if self.initial_state not in ("good", "bad"):
                raise BadConfig(f"unknown initial_state {self.initial_state!r}")


def realize_channel(ch: ChannelModel, horizon: int, seed: int) -> list[int]:
    """Per-slot capacities for slots 1..horizon, deterministic in the seed.

    The Markov chain records the current state's capacity, then flips state
    with probability ``transition_prob``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if ch.kind == "static":
        return [ch.capacity] * horizon
    rng = random.Random(seed)
    good = ch.initial_state == "good"
    caps = []
    for _ in range(horizon):
        caps.append(ch.good_capacity if good else ch.bad_capacity)
        if rng.random() < ch.transition_prob:
            good = not good
    return caps


@dataclass(frozen=True)
class NavigationModel:
    """View-switching behavior of the audience.

    kinds:
      static      -- viewers never switch (identity transitions)
      uniform     -- stay/left/right each 1/3
      nonuniform  -- stay with ``stay_prob``, rest split left/right
      directional -- triangle-wave drift: for half of ``period`` the crowd
                     drifts right, then left; ``amplitude`` in (0, 1] biases
                     the non-staying mass toward the drift direction

    Rows are source-indexed (w[src][dst]); off-grid mass at the array
    boundary folds back onto the staying probability, which keeps every
    matrix row-stochastic (and, for the symmetric kinds, doubly
    stochastic).
    """

    kind: str = "static"
    stay_prob: float = 0.6
    period: int = 40
    amplitude: float = 1.0
    drift_stay: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("static", "uniform", "nonuniform", "directional"):
            raise BadConfig(f"unknown navigation kind {self.kind!r}")
        if not 0.0 <= self.stay_prob <= 1.0:
            raise BadConfig("stay_prob must lie in [0, 1]")
        if self.period < 2:
            raise BadConfig("period must be >= 2")
        if not 0.0 < self.amplitude <= 1.0:
            raise BadConfig("amplitude must lie in (0, 1]")
        if self.drift_stay is not None and not 0.0 <= self.drift_stay <= 1.0:
            raise BadConfig("drift_stay must lie in [0, 1]")

    def drift_direction(self, t: int) -> int:
        """Drift sign of the step into period t (directional kind only)."""
        phase = (t - 1) % self.period
        return 1 if phase < self.period // 2 else -1

    def _directional_stay(self, m_cams: int) -> float:
        # explicit staying probability, or one derived so a half-period
        # sweeps the whole camera array exactly once
        if self.drift_stay is not None:
            return self.drift_stay
        speed = 2.0 * (m_cams - 1) / (self.period * self.amplitude)
        return min(0.9, max(0.0, 1.0 - speed))

    def transition_matrix(self, t: int, m_cams: int) -> list[list[float]]:
        """Row-stochastic w for the step from period t-1 into period t."""
        if self.kind == "static":
            return [[1.0 if i == j else 0.0 for j in range(m_cams)] for i in range(m_cams)]
        if self.kind == "uniform":
            stay, move = 1.0 / 3.0, 1.0 / 3.0
        elif self.kind == "nonuniform":
            stay, move = self.stay_prob, (1.0 - self.stay_prob) / 2.0
        else:  # directional
            stay = self._directional_stay(m_cams)
            fwd = (1.0 - stay) * (1.0 + self.amplitude) / 2.0
            bwd = (1.0 - stay) * (1.0 - self.amplitude) / 2.0
            d = self.drift_direction(t)
            rows = []
            for i in range(m_cams):
                row = [0.0] * m_cams
                s = stay
                for j, p in ((i + d, fwd), (i - d, bwd)):
                    if 0 <= j < m_cams:
                        row[j] = p
                    else:
                        s += p
                row[i] = s
                rows.append(row)
            return rows
        rows = []
        for i in range(m_cams):
            row = [0.0] * m_cams
            s = stay
            for j in (i - 1, i + 1):
                if 0 <= j < m_cams:
                    row[j] = move
                else:
                    s += move
            row[i] = s
            rows.append(row)
        return rows


def popularity_evolution(nav: NavigationModel, m_cams: int, n_frames: int) -> list[list[float]]:
    """Per-period view popularity, uniform at t=0 then propagated by w^t."""
    pop = [[1.0 / m_cams] * m_cams]
    for t in range(1, n_frames):
        w = nav.transition_matrix(t, m_cams)
        prev = pop[-1]
        pop.append(
            [math.fsum(prev[l] * w[l][m] for l in range(m_cams)) for m in range(m_cams)]
        )
    return pop


def most_likely_path(
    nav: NavigationModel,
    m_cams: int,
    n_frames: int,
    start_view: int,
    start_t: int = 0,
) -> list[FrameId]:
    """Greedy maximum-probability navigation path; ties go to the lower camera."""
    if not 0 <= start_view < m_cams:
        raise ValueError("start_view out of range")
    path = [FrameId(start_t, start_view)]
    cur = start_view
    for t in range(start_t + 1, n_frames):
        row = nav.transition_matrix(t, m_cams)[cur]
        cur = max(range(m_cams), key=lambda j: (row[j], -j))
        path.append(FrameId(t, cur))
    return path


@dataclass(frozen=True)
class CorrelationBlock:
    """Spatial-correlation override for one stretch of periods.

    ``obstacle`` marks a scene occluder sitting between camera ``obstacle``
    and camera ``obstacle + 1``: spatial pairs looking across that boundary
    share no content and get zero correlation.
    """

    rho0: float
    gamma: float
    obstacle: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho0 <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise BadConfig("block rho0/gamma must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticCorrelation:
    """Parametric pairwise-correlation field.

    Spatial correlation decays geometrically with camera distance:
    rho = rho0 * gamma^(|l-m|-1) within ``spatial_extent/2`` cameras per
    side.  ``blocks`` optionally lists per-block overrides (rho0, gamma,
    optional obstacle position) cycled every ``block_len`` periods to
    emulate scene changes.  Temporal correlation is a constant per camera
    within ``temporal_extent`` periods back.
    """

    spatial_extent: int = 4
    temporal_extent: int = 1
    beta_spatial: float = 0.1
    beta_temporal: float = 0.1
    rho0: float = 0.8
    gamma: float = 0.9
    block_len: int = 20
    blocks: tuple[CorrelationBlock, ...] = ()
    rho_temporal: float = 0.9

    def __post_init__(self) -> None:
        for name, v in (("rho0", self.rho0), ("gamma", self.gamma), ("rho_temporal", self.rho_temporal)):
            if not 0.0 <= v <= 1.0:
                raise BadConfig(f"{name} must lie in [0, 1]")
        if self.block_len < 1:
            raise BadConfig("block_len must be >= 1")

    def block_params(self, t: int) -> CorrelationBlock:
        if not self.blocks:
            return CorrelationBlock(self.rho0, self.gamma)
        return self.blocks[(t // self.block_len) % len(self.blocks)]

    def build(self, timeline: Timeline) -> CorrelationModel:
        pairs: dict[tuple[FrameId, FrameId], float] = {}
        half = self.spatial_extent // 2
        for t in range(timeline.frames):
            block = self.block_params(t)
            for m in range(timeline.cameras):
                f = FrameId(t, m)
                for l in range(max(0, m - half), min(timeline.cameras, m + half + 1)):
                    if l == m:
                        continue
                    if block.obstacle is not None and min(m, l) <= block.obstacle < max(m, l):
                        continue
                    rho = block.rho0 * block.gamma ** (abs(l - m) - 1)
                    if rho > 0.0:
                        pairs[(f, FrameId(t, l))] = rho
                for back in range(1, self.temporal_extent + 1):
                    if t - back >= 0 and self.rho_temporal > 0.0:
                        pairs[(f, FrameId(t - back, m))] = self.rho_temporal
        return CorrelationModel(
            self.spatial_extent, self.temporal_extent, self.beta_spatial, self.beta_temporal, pairs
        )


@dataclass(frozen=True)
class ScenarioConfig:
    timeline: Timeline = field(default_factory=Timeline)
    channel: ChannelModel = field(default_factory=ChannelModel)
    navigation: NavigationModel = field(default_factory=NavigationModel)
    correlation: SyntheticCorrelation = field(default_factory=SyntheticCorrelation)
    rates: RateParams = field(default_factory=RateParams)
    lam: float = 0.0
    seed: int = 1
    loops: int = 100

    def __post_init__(self) -> None:
        if self.lam < 0.0:
            raise BadConfig("lambda must be non-negative")
        if self.loops < 1:
            raise BadConfig("loops must be >= 1")

    def channel_seed(self, loop_index: int) -> int:
        """Deterministic per-loop seed; loop realizations are independent."""
        return (self.seed * 1_000_003 + loop_index * 7_919 + 12_345) & 0x7FFFFFFF

    def with_lambda(self, lam: float) -> "ScenarioConfig":
        return replace(self, lam=lam)


_SCHEMA_VERSION = 1

_SECTION_KEYS = {
    "timeline": {"frames", "cameras", "acq_spacing", "deadline"},
    "channel": {"kind", "capacity", "good_capacity", "bad_capacity", "transition_prob", "initial_state"},
    "navigation": {"kind", "stay_prob", "period", "amplitude", "drift_stay"},
    "correlation": {
        "spatial_extent", "temporal_extent", "beta_spatial", "beta_temporal",
        "rho0", "gamma", "block_len", "blocks", "rho_temporal",
    },
    "rates": {"key_cost", "mu_sigma2", "d_max", "rate_to_bits"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"schema", "lambda", "seed", "loops"}


def _check_keys(name: str, data: dict, allowed: set[str]) -> None:
    if not isinstance(data, dict):
        raise BadConfig(f"section {name!r} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise BadConfig(f"unknown key(s) in {name}: {', '.join(sorted(unknown))}")


def scenario_from_dict(data: dict) -> ScenarioConfig:
    _check_keys("scenario", data, _TOP_KEYS)
    if data.get("schema") != _SCHEMA_VERSION:
        raise BadConfig(f"missing or unsupported schema version (expected {_SCHEMA_VERSION})")
    sections = {}
    for name, keys in _SECTION_KEYS.items():
        sub = data.get(name, {})
        _check_keys(name, sub, keys)
        sections[name] = sub
    corr = dict(sections["correlation"])
    if "blocks" in corr:
        blocks = []
        for b in corr["blocks"]:
            _check_keys("correlation.blocks[]", b, {"rho0", "gamma", "obstacle"})
            blocks.append(CorrelationBlock(**b))
        corr["blocks"] = tuple(blocks)
    try:
        return ScenarioConfig(
            timeline=Timeline(**sections["timeline"]),
            channel=ChannelModel(**sections["channel"]),
            navigation=NavigationModel(**sections["navigation"]),
            correlation=SyntheticCorrelation(**corr),
            rates=RateParams(**sections["rates"]),
            lam=float(data.get("lambda", 0.0)),
            seed=int(data.get("seed", 1)),
            loops=int(data.get("loops", 100)),
        )
    except (TypeError, ValueError) as exc:
        raise BadConfig(str(exc)) from exc


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise BadConfig(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfig(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "schema": _SCHEMA_VERSION,
        "timeline": {
            "frames": cfg.timeline.frames,
            "cameras": cfg.timeline.cameras,
            "acq_spacing": cfg.timeline.acq_spacing,
            "deadline": cfg.timeline.deadline,
        },
        "channel": {
            "kind": cfg.channel.kind,
            "capacity": cfg.channel.capacity,
            "good_capacity": cfg.channel.good_capacity,
            "bad_capacity": cfg.channel.bad_capacity,
            "transition_prob": cfg.channel.transition_prob,
            "initial_state": cfg.channel.initial_state,
        },
        "navigation": {
            "kind": cfg.navigation.kind,
            "stay_prob": cfg.navigation.stay_prob,
            "period": cfg.navigation.period,
            "amplitude": cfg.navigation.amplitude,
            "drift_stay": cfg.navigation.drift_stay,
        },
        "correlation": {
            "spatial_extent": cfg.correlation.spatial_extent,
            "temporal_extent": cfg.correlation.temporal_extent,
            "beta_spatial": cfg.correlation.beta_spatial,
            "beta_temporal": cfg.correlation.beta_temporal,
            "rho0": cfg.correlation.rho0,
            "gamma": cfg.correlation.gamma,
            "block_len": cfg.correlation.block_len,
            "blocks": [
                {"rho0": b.rho0, "gamma": b.gamma, "obstacle": b.obstacle}
                for b in cfg.correlation.blocks
            ],
            "rho_temporal": cfg.correlation.rho_temporal,
        },
        "rates": {
            "key_cost": cfg.rates.key_cost,
            "mu_sigma2": cfg.rates.mu_sigma2,
            "d_max": cfg.rates.d_max,
            "rate_to_bits": cfg.rates.rate_to_bits,
        },
        "lambda": cfg.lam,
        "seed": cfg.seed,
        "loops": cfg.loops,
    }
