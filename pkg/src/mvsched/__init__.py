"""Packet-scheduling simulator for multiview camera streaming.

Cameras observing the same scene push encoded frames through a shared
bottleneck channel; a per-opportunity scheduler decides which encoded
versions to send so that interactive viewers, who navigate between views,
see the best and smoothest possible reconstruction.
"""

from .rdmodel import (
    BadPopularity,
    CorrelationModel,
    DataUnit,
    DecoderState,
    EmptyNeighborhood,
    FrameId,
    RateParams,
    VersionKind,
    expected_distortion,
    frame_distortion,
    psnr,
    recoverable_fraction,
    smoothness_penalty,
    spatial_neighborhood,
    temporal_neighborhood,
    wz_rate,
)
from .scenario import (
    BadConfig,
    ChannelModel,
    NavigationModel,
    ScenarioConfig,
    SyntheticCorrelation,
    Timeline,
    load_scenario,
    most_likely_path,
    popularity_evolution,
    realize_channel,
)
from .trellis import (
    CandidateSet,
    PolicyViolation,
    SchedulePolicy,
    SolverGuardExceeded,
    build_candidates,
    marginal_reward,
    opportunity_objective,
    solve_knapsack,
    solve_opportunity,
    validate_policy,
)
from .engine import SCHEDULER_KINDS, SessionResult, World, mlp_trace, run_loops, run_session, sweep_lambda

__version__ = "0.1.0"
