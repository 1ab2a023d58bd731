"""Correlation structure, side-information neighborhoods and distortion model.

A multiview capture is a grid of frames indexed by (period t, camera m).
Every frame exists in up to three encoded versions: a standalone key
version, a WZ version decodable from any sufficiently-correlated key frame
in space or time, and a P version restricted to same-camera temporal keys.
Pairwise correlation rho(f|g) is the fraction of frame f reconstructible
from frame g; it drives both the encoding cost of dependent versions and
the quality of view synthesis for frames that were never delivered.

Everything in this module is a pure function of immutable value objects,
so it is safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence


class FrameId(NamedTuple):
    """One acquired image: period index t, camera index m."""

    t: int
    m: int


class VersionKind(Enum):
    KEY = "key"
    WZ = "wz"
    P = "p"


# canonical ordering of versions of one frame (used for tie-breaking)
KIND_RANK = {VersionKind.KEY: 0, VersionKind.WZ: 1, VersionKind.P: 2}


class EmptyNeighborhood(ValueError):
    """Raised when a dependent version is priced but has no SI candidates."""


class BadPopularity(ValueError):
    """Raised when a popularity slice is malformed (negative / not summing to 1)."""


@dataclass(frozen=True)
class RateParams:
    """Encoding-cost and distortion parameters.

    Costs are integer transmission units; ``rate_to_bits`` maps one unit to
    the exponent of the high-rate intra distortion curve
    d(R) = mu_sigma2 * 2^(-2 * R * rate_to_bits).  ``d_max`` is the
    inpainting floor for image regions nothing can cover.
    """

    key_cost: int = 100
    mu_sigma2: float = 65025.0
    d_max: float = 2000.0
    rate_to_bits: float = 0.05

    def __post_init__(self) -> None:
        if self.key_cost <= 0:
            raise ValueError("key_cost must be a positive integer")
        if self.mu_sigma2 <= 0:
            raise ValueError("mu_sigma2 must be positive")
        if self.d_max < self.intra_distortion():
            raise ValueError("d_max must be at least the intra distortion d(key_cost)")

    def intra_distortion(self) -> float:
        """Distortion of any frame decoded from a full-rate version."""
        return self.mu_sigma2 * 2.0 ** (-2.0 * self.key_cost * self.rate_to_bits)


class CorrelationModel:
    """Directed pairwise correlation levels between frames.

    ``pairs[(f, g)] = rho(f|g)`` is the portion of f recoverable from g.
    Spatial entries link distinct cameras of the same period within
    ``spatial_extent/2`` on either side; temporal entries link a frame to
    earlier frames of the same camera within ``temporal_extent`` periods.
    Self-correlation is implicit (1.0) and never stored.
    """

    def __init__(
        self,
        spatial_extent: int,
        temporal_extent: int,
        beta_spatial: float,
        beta_temporal: float,
        pairs: dict[tuple[FrameId, FrameId], float],
    ):
        if spatial_extent < 0 or spatial_extent % 2 != 0:
            raise ValueError("spatial_extent must be an even non-negative integer")
        if temporal_extent < 0:
            raise ValueError("temporal_extent must be non-negative")
        for beta in (beta_spatial, beta_temporal):
            if not 0.0 <= beta <= 1.0:
                raise ValueError("beta thresholds must lie in [0, 1]")
        self.spatial_extent = spatial_extent
        self.temporal_extent = temporal_extent
        self.beta_spatial = beta_spatial
        self.beta_temporal = beta_temporal
        self._by_target: dict[FrameId, list[tuple[FrameId, float]]] = {}
        for (f, g), rho in pairs.items():
            self._check_pair(f, g, rho)
            if rho > 0.0:
                self._by_target.setdefault(f, []).append((g, rho))
        # deterministic iteration order for coverage products
        for lst in self._by_target.values():
            lst.sort(key=lambda e: (e[0].t, e[0].m))

    def _check_pair(self, f: FrameId, g: FrameId, rho: float) -> None:
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho({f}|{g}) = {rho} outside [0, 1]")
        if f == g:
            raise ValueError("self-correlation must not be stored")
        if f.t == g.t:
            if abs(f.m - g.m) > self.spatial_extent // 2:
                raise ValueError(f"spatial pair {f}|{g} outside extent")
        elif f.m == g.m:
            if not (0 < f.t - g.t <= self.temporal_extent):
                raise ValueError(f"temporal pair {f}|{g} outside extent (source must precede target)")
        else:
            raise ValueError(f"pair {f}|{g} is neither same-period nor same-camera")

    def rho(self, f: FrameId, g: FrameId) -> float:
        for src, r in self._by_target.get(f, ()):
            if src == g:
                return r
        return 0.0

    def sources(self, f: FrameId) -> list[tuple[FrameId, float]]:
        """All frames with non-null correlation toward f, with their rho."""
        return self._by_target.get(f, [])


@dataclass(frozen=True)
class DataUnit:
    """One schedulable packet: a specific encoded version of a frame."""

    frame: FrameId
    kind: VersionKind
    cost: int
    t_acq: int
    t_expire: int

    def sort_key(self) -> tuple[int, int, int]:
        return (self.frame.t, self.frame.m, KIND_RANK[self.kind])


class DecoderState:
    """The set of versions already available at the decoder.

    At most one version of a frame is ever delivered (scheduling rule), so
    keys and dependents are disjoint per frame.  Treated as immutable;
    ``with_key`` / ``with_dependent`` return extended copies.
    """

    __slots__ = ("keys", "dependents")

    def __init__(
        self,
        keys: Iterable[FrameId] = (),
        dependents: Iterable[tuple[FrameId, VersionKind]] = (),
    ):
        self.keys: frozenset[FrameId] = frozenset(keys)
        deps = dict(dependents)
        for f, kind in deps.items():
            if kind == VersionKind.KEY:
                raise ValueError("dependents must be WZ or P versions")
            if f in self.keys:
                raise ValueError(f"frame {f} has both key and dependent versions delivered")
        self.dependents: dict[FrameId, VersionKind] = deps

    def key_delivered(self, f: FrameId) -> bool:
        return f in self.keys

    def dependent_kind(self, f: FrameId) -> Optional[VersionKind]:
        return self.dependents.get(f)

    def has_any(self, f: FrameId) -> bool:
        return f in self.keys or f in self.dependents

    def with_key(self, f: FrameId) -> "DecoderState":
        return DecoderState(self.keys | {f}, self.dependents.items())

    def with_dependent(self, f: FrameId, kind: VersionKind) -> "DecoderState":
        deps = dict(self.dependents)
        deps[f] = kind
        return DecoderState(self.keys, deps.items())

    def extended(self, units: Iterable[tuple[FrameId, VersionKind]]) -> "DecoderState":
        keys = set(self.keys)
        deps = dict(self.dependents)
        for f, kind in units:
            if kind == VersionKind.KEY:
                keys.add(f)
            else:
                deps[f] = kind
        return DecoderState(keys, deps.items())


def spatial_neighborhood(f: FrameId, cm: CorrelationModel) -> set[FrameId]:
    """Same-period frames usable as SI for the WZ version of f."""
    half = cm.spatial_extent // 2
    out = set()
    for g, rho in cm.sources(f):
        if g.t == f.t and g.m != f.m and abs(g.m - f.m) <= half and rho > cm.beta_spatial:
            out.add(g)
    return out


def temporal_neighborhood(f: FrameId, cm: CorrelationModel) -> set[FrameId]:
    """Earlier same-camera frames usable as SI for the P (and WZ) version of f."""
    out = set()
    for g, rho in cm.sources(f):
        if g.m == f.m and f.t - cm.temporal_extent <= g.t < f.t and rho > cm.beta_temporal:
            out.add(g)
    return out


def full_neighborhood(f: FrameId, cm: CorrelationModel) -> set[FrameId]:
    return spatial_neighborhood(f, cm) | temporal_neighborhood(f, cm)


def _dependent_cost(f: FrameId, neighborhood: set[FrameId], cm: CorrelationModel, rp: RateParams) -> int:
    if not neighborhood:
        raise EmptyNeighborhood(f"frame {f} has no SI candidates")
    # worst-case SI: the least correlated neighbor dictates the rate
    worst = max((1.0 - cm.rho(f, g)) * rp.key_cost for g in neighborhood)
    return max(1, math.ceil(worst))


def wz_rate(f: FrameId, cm: CorrelationModel, rp: RateParams) -> int:
    """Cost of the WZ version (SI anywhere in the spatio-temporal neighborhood)."""
    return _dependent_cost(f, full_neighborhood(f, cm), cm, rp)


def p_rate(f: FrameId, cm: CorrelationModel, rp: RateParams) -> int:
    """Cost of the P version (SI restricted to temporal neighbors)."""
    return _dependent_cost(f, temporal_neighborhood(f, cm), cm, rp)


def recoverable_fraction(f: FrameId, state: DecoderState, cm: CorrelationModel) -> float:
    """Coverage of f by delivered key frames.

    Independent-occlusion combination: each correlated delivered key leaves
    a (1 - rho) uncovered remainder; remainders multiply.
    """
    prod = 1.0
    for g, rho in cm.sources(f):
        if state.key_delivered(g):
            prod *= 1.0 - rho
    return 1.0 - prod


def frame_distortion(f: FrameId, state: DecoderState, cm: CorrelationModel, rp: RateParams) -> float:
    """Decoder-side distortion of frame f given the delivered set.

    Full quality d(key_cost) if the key was delivered, or a dependent
    version was delivered together with at least one key of its SI
    neighborhood.  Otherwise the frame is synthesized from whatever
    correlated keys exist, with the uncovered remainder at the inpainting
    floor.
    """
    d_full = rp.intra_distortion()
    if state.key_delivered(f):
        return d_full
    dep = state.dependent_kind(f)
    if dep == VersionKind.WZ:
        if any(state.key_delivered(g) for g in full_neighborhood(f, cm)):
            return d_full
    elif dep == VersionKind.P:
        if any(state.key_delivered(g) for g in temporal_neighborhood(f, cm)):
            return d_full
    cov = recoverable_fraction(f, state, cm)
    return cov * d_full + (1.0 - cov) * rp.d_max


def _check_popularity_slice(row: Sequence[float]) -> None:
    if any(p < 0.0 for p in row):
        raise BadPopularity("negative popularity weight")
    if abs(math.fsum(row) - 1.0) > 1e-9:
        raise BadPopularity(f"popularity slice sums to {math.fsum(row)!r}, expected 1")


def expected_distortion(
    t: int,
    state: DecoderState,
    popularity: Sequence[Sequence[float]],
    cm: CorrelationModel,
    rp: RateParams,
) -> float:
    """Popularity-weighted distortion of the period-t slice."""
    row = popularity[t]
    _check_popularity_slice(row)
    return math.fsum(
        row[m] * frame_distortion(FrameId(t, m), state, cm, rp) for m in range(len(row))
    )


def smoothness_penalty(
    t: int,
    state: DecoderState,
    popularity: Sequence[Sequence[float]],
    transitions: Sequence[Sequence[float]],
    cm: CorrelationModel,
    rp: RateParams,
) -> float:
    """Expected absolute quality variation across the t-1 -> t navigation step.

    Index convention follows the published form: the weight on the
    (previous view l, current view m) pair is transitions[m][l].
    """
    if t == 0:
        return 0.0
    prev = popularity[t - 1]
    m_cams = len(prev)
    d_prev = [frame_distortion(FrameId(t - 1, l), state, cm, rp) for l in range(m_cams)]
    d_cur = [frame_distortion(FrameId(t, m), state, cm, rp) for m in range(m_cams)]
    return math.fsum(
        transitions[m][l] * prev[l] * abs(d_prev[l] - d_cur[m])
        for m in range(m_cams)
        for l in range(m_cams)
    )


def psnr(distortion: float) -> float:
    """Map a squared-intensity distortion to dB (peak 255)."""
    return 10.0 * math.log10(255.0 * 255.0 / distortion)
