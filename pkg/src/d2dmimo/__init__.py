"""Downlink cellular simulator with D2D compress-and-forward virtual MIMO.

Standby users within D2D range of an active user quantize their overheard
downlink signal and forward it over orthogonal mmWave links, turning every
single-antenna user into the center of a virtual receive array. The package
provides the topology/channel generators, the closed-form D2D time
allocation, MMSE/zero-forcing beamforming, the iterative resource-allocation
algorithm, four benchmark schemes, and Monte-Carlo CDF reporting.
"""

from .allocation import (
    AllocationResult,
    RelayObservation,
    compute_beta,
    compute_link_weight,
    rates_to_quantization,
    rates_to_time,
    reference_allocation,
    solve_allocation,
)
from .beamforming import (
    NoiseCovariance,
    TransmitBeamformers,
    effective_channel,
    init_transmit_beamformers,
    interference_covariance,
    mmse_receiver,
    zf_transmit,
)
from .channel import (
    ChannelSet,
    LinkBudget,
    assemble_equivalent_channel,
    build_channel_set,
    cellular_pathloss_db,
    check_reuse_margin,
    d2d_capacity,
    d2d_pathloss_db,
    draw_cellular_channel,
    draw_d2d_gain,
)
from .errors import BeamformingError, ClusteringError, ConfigurationError
from .rate import (
    achievable_rate,
    direct_sinr_rate,
    multihop_rate,
    relay_sinr_rate,
    scheduled_rate,
    time_shared_rate,
)
from .sim import (
    MonteCarloReport,
    SystemConfig,
    TrialResult,
    generate_schedule_sets,
    monte_carlo,
    nearest_rank_percentile,
    run_algorithm1,
    run_benchmark,
    run_trial,
)
from .topology import (
    Cluster,
    HexLayout,
    UserDrop,
    build_wraparound_layout,
    drop_users,
    form_clusters,
    wrap_distance,
)

__version__ = "0.1.0"
