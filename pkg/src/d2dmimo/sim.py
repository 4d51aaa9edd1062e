"""Monte-Carlo orchestration of the resource-allocation algorithm and benchmarks.

One trial = one topology draw + one channel draw + one random schedule. Per
scheduling slot the engine alternates, until the network sum rate settles:

  1. per scheduled user: relay powers -> optimal (or equal-split) compression
     rates -> quantization diagonal Q,
  2. MMSE receive beamformer update against a frozen snapshot of all transmit
     beamformers (Jacobi-style, order-free),
  3. per BS: zero-forcing transmit beamformers from the effective channels.

Benchmarks reuse the same engine: no-cooperation forces every relay out,
ideal cooperation pins Q = 0, equal split replaces the allocator, and the
multi-hop scheme reads decode-and-forward rates off the no-cooperation
beamformers. Per-trial random streams are derived from the master seed by
index, so results are independent of execution order and worker count.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .allocation import (
    compute_link_weight,
    rates_to_quantization,
    solve_allocation_batch,
)
from .beamforming import (
    NoiseCovariance,
    TransmitBeamformers,
    init_transmit_beamformers,
    interference_covariance,
    mmse_receiver,
    effective_channel,
    zf_transmit,
)
from .channel import ChannelSet, LinkBudget, build_channel_set, dbm_to_mw
from .errors import BeamformingError, ClusteringError, ConfigurationError
from .rate import (
    achievable_rate,
    direct_sinr_rate,
    multihop_rate,
    relay_sinr_rate,
    scheduled_rate,
    time_shared_rate,
)
from .topology import build_wraparound_layout, drop_users, form_clusters

SCHEMES = ("proposed", "bench1", "bench2", "adjusted-bench2", "bench3", "bench4")

_REDRAW_ATTEMPTS = 4


@dataclass(frozen=True)
class SystemConfig:
    """Every scalar knob of the simulator (defaults: standard parameter table)."""

    num_cells: int = 19  # N
    users_per_cell: int = 20  # K
    scheduled_per_slot: int = 4  # S
    bs_antennas: int = 4  # L
    receive_antennas: int = 10  # M (M-1 relay nodes per user)
    p_b_dbm: float = 43.0
    p_d_dbm: float = 20.0
    b_c_hz: float = 20e6
    b_d_hz: float = 200e6
    t_c_s: float = 1.25e-3
    t_d_ratio: float = 0.15  # t_d / t_c
    cell_radius_m: float = 400.0
    inter_cell_distance_m: float = 800.0
    d_max_m: float = 100.0
    relay_pool_factor: int = 10  # candidate pool per cell = factor * K
    trials: int = 100
    seed: int = 0
    scheme: str = "proposed"
    convergence_tol: float = 1e-4
    max_iterations: int = 50
    reuse_geometry_factor: float = 4.0
    freeze_topology: bool = False
    workers: int = 1
    budget: LinkBudget = field(default_factory=LinkBudget)

    @property
    def t_d_s(self) -> float:
        return self.t_d_ratio * self.t_c_s

    @property
    def p_b_mw(self) -> float:
        return float(dbm_to_mw(self.p_b_dbm))

    @property
    def sigma2_mw(self) -> float:
        """Thermal noise power over the cellular bandwidth (same at all devices)."""
        return float(dbm_to_mw(self.budget.noise_psd_dbm_hz) * self.b_c_hz)

    @property
    def relay_pool_per_cell(self) -> int:
        return self.relay_pool_factor * self.users_per_cell

    def validate(self) -> None:
        if self.num_cells not in (1, 7, 19):
            raise ConfigurationError(f"num_cells must be 1, 7 or 19 (got {self.num_cells})")
        if self.users_per_cell < 1:
            raise ConfigurationError("users_per_cell must be >= 1")
        if not 1 <= self.scheduled_per_slot <= self.bs_antennas:
            raise ConfigurationError(
                f"scheduled_per_slot must satisfy 1 <= S <= bs_antennas "
                f"(S={self.scheduled_per_slot}, L={self.bs_antennas})"
            )
        if self.users_per_cell % self.scheduled_per_slot != 0:
            raise ConfigurationError(
                f"users_per_cell mod scheduled_per_slot must be 0 "
                f"(K={self.users_per_cell}, S={self.scheduled_per_slot})"
            )
        if self.receive_antennas < 1:
            raise ConfigurationError("receive_antennas must be >= 1")
        if self.relay_pool_per_cell < self.users_per_cell * (self.receive_antennas - 1):
            raise ConfigurationError(
                "relay pool too small: relay_pool_factor * K must be >= K * (M - 1)"
            )
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.t_c_s <= 0 or self.t_d_ratio < 0:
            raise ConfigurationError("t_c_s must be positive and t_d_ratio nonnegative")
        if self.b_c_hz <= 0 or self.b_d_hz <= 0:
            raise ConfigurationError("bandwidths must be positive")
        if self.d_max_m <= 0:
            raise ConfigurationError("d_max_m must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.max_iterations < 1 or self.convergence_tol <= 0:
            raise ConfigurationError("invalid convergence settings")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        self.budget.validate()


@dataclass
class TrialResult:
    """Per-user outcome of one channel realization.

    ``ideal_*`` fields hold the lossless-cooperation counterfactual: the rate
    the same final beamformers would achieve with all quantization noise
    removed (an exact per-user upper bound on the cooperative rate).
    """

    scheme: str
    scheduled_rate_bps: np.ndarray  # (N, K)
    achievable_se: np.ndarray  # (N, K) bit/s/Hz before scheduling/time scaling
    ideal_se: np.ndarray  # (N, K) Q = 0 counterfactual, same scaling stage
    ideal_scheduled_rate_bps: np.ndarray  # (N, K)
    iterations: list[int]
    converged: bool
    channel_checksum: str = ""
    redraws: int = 0
    state: dict | None = None


@dataclass
class MonteCarloReport:
    """Aggregated long-term user rates over all trials."""

    scheme: str
    trials: int
    user_mean_rate_bps: np.ndarray  # (N, K)
    cdf_sample_mbps: np.ndarray  # sorted (N*K,)
    percentiles: dict[int, float]  # Mbps at nearest rank
    trial_rates_bps: np.ndarray  # (T, N, K)
    ideal_trial_rates_bps: np.ndarray  # (T, N, K)
    iterations_mean: float
    converged_fraction: float
    redraws: int
    checksums: list[str]


def nearest_rank_percentile(sample: np.ndarray, p: float) -> float:
    """Nearest-rank percentile (no interpolation) of a 1-D sample."""
    if not 0 < p < 100:
        raise ValueError("percentile must lie in (0, 100)")
    s = np.sort(np.asarray(sample).ravel())
    if s.size == 0:
        raise ValueError("empty sample")
    rank = int(np.ceil(p / 100.0 * s.size))
    return float(s[max(rank, 1) - 1])


def generate_schedule_sets(K: int, S: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random partition of {0..K-1} into K/S slots of S users."""
    if K % S != 0:
        raise ConfigurationError(f"K must be divisible by S (K={K}, S={S})")
    return rng.permutation(K).reshape(K // S, S)


def _run_pipeline(
    config: SystemConfig,
    channels: ChannelSet,
    sets: np.ndarray,
    rng: np.random.Generator,
    mode: str,
    capture: bool = False,
) -> TrialResult:
    N, K = config.num_cells, config.users_per_cell
    S, L, M = config.scheduled_per_slot, config.bs_antennas, channels.num_rx
    sigma2 = config.sigma2_mw
    p_b = config.p_b_mw
    with_allocation = mode in ("proposed", "bench3") and M > 1
    t_d_rate = config.t_d_s if mode in ("proposed", "bench3") else 0.0

    ach_se = np.zeros((N, K))
    ideal_se = np.zeros((N, K))
    sched_bps = np.zeros((N, K))
    ideal_sched_bps = np.zeros((N, K))
    iterations: list[int] = []
    all_converged = True
    state: dict = (
        {"tx": [], "u": {}, "q": {}, "obs": {}, "sum_history": []} if capture else None
    )

    for slot in range(K // S):
        sched = sets[:, slot, :]  # (N, S)
        v = np.stack([init_transmit_beamformers(L, S, p_b, rng) for _ in range(N)])

        users = [(b, s, int(sched[b, s])) for b in range(N) for s in range(S)]
        h_user = {(b, k): channels.cellular[:, b, k] for b, _, k in users}
        if mode in ("bench1", "bench4"):
            q_init = np.full(M - 1, np.inf)
        else:
            q_init = np.zeros(M - 1)
        q_user = {(b, k): q_init.copy() for b, _, k in users}
        w_user = {}
        if with_allocation:
            for b, _, k in users:
                w_user[(b, k)] = np.array(
                    [
                        compute_link_weight(
                            config.t_c_s,
                            config.b_c_hz,
                            config.t_d_s,
                            config.b_d_hz,
                            channels.d2d_capacity[b, k, m],
                        )
                        for m in range(M - 1)
                    ]
                )

        tx = TransmitBeamformers(v=v, scheduled=sched)
        u_user = {}
        for b, s, k in users:
            noise = NoiseCovariance(q_user[(b, k)], sigma2)
            rows = noise.included_rows()
            J = interference_covariance(b, k, channels, tx, noise)
            u_user[(b, k)] = mmse_receiver(h_user[(b, k)][b][rows], v[b, :, s], J)

        prev_sum = None
        best_sum = -np.inf
        best = None
        converged = False
        obs_user = {}
        slot_ach = {}
        slot_ideal = {}
        history: list[float] = []
        h_rel_stack = (
            np.stack([h_user[(b, k)][:, : M - 1, :] for b, _, k in users])
            if with_allocation
            else None
        )
        w_all = (
            np.stack([w_user[(b, k)] for b, _, k in users]) if with_allocation else None
        )

        for it in range(config.max_iterations):
            v_snap = v.copy()
            tx_snap = TransmitBeamformers(v=v_snap, scheduled=sched)
            if with_allocation:
                # Relay powers and allocation for all scheduled users at once.
                z = np.einsum("unml,nls->unms", h_rel_stack, v_snap)
                beta_all = np.sum(np.abs(z) ** 2, axis=(1, 3)) + sigma2
                weights_all = np.zeros((len(users), M - 1))
                for ui, (b, s, k) in enumerate(users):
                    rows_prev = NoiseCovariance(q_user[(b, k)], sigma2).included_rows()
                    weights_all[ui, rows_prev[:-1]] = np.abs(u_user[(b, k)][:-1]) ** 2
                if mode == "proposed":
                    _, q_all, _ = solve_allocation_batch(beta_all, w_all, weights_all)
                else:  # equal D2D time split
                    with np.errstate(divide="ignore"):
                        r_eq = np.where(np.isfinite(w_all), 1.0 / ((M - 1) * w_all), 0.0)
                    q_all = rates_to_quantization(r_eq, beta_all)
                for ui, (b, s, k) in enumerate(users):
                    q_user[(b, k)] = q_all[ui]
                    obs_user[(b, k)] = (beta_all[ui], weights_all[ui], w_all[ui])
            sum_rate = 0.0
            for b, s, k in users:
                H = h_user[(b, k)]
                noise = NoiseCovariance(q_user[(b, k)], sigma2)
                rows = noise.included_rows()
                H_red = H[b][rows]
                v_own = v_snap[b, :, s]
                if with_allocation:
                    # One full-row covariance serves both the actual rate
                    # (sliced rows plus quantization diagonal) and the
                    # lossless-cooperation counterfactual bound.
                    J0 = interference_covariance(
                        b, k, channels, tx_snap, NoiseCovariance(np.zeros(M - 1), sigma2)
                    )
                    J = J0[np.ix_(rows, rows)] + np.diag(
                        np.append(noise.q[rows[:-1]], 0.0)
                    )
                    slot_ideal[(b, k)] = achievable_rate(v_snap[b, :, s], H[b], J0)
                else:
                    J = interference_covariance(b, k, channels, tx_snap, noise)
                u_user[(b, k)] = mmse_receiver(H_red, v_own, J)
                r_tilde = achievable_rate(v_own, H_red, J)
                slot_ach[(b, k)] = r_tilde
                if not with_allocation:
                    slot_ideal[(b, k)] = r_tilde
                sum_rate += r_tilde
            for b in range(N):
                h_eff = np.stack(
                    [
                        effective_channel(
                            u_user[(b, int(sched[b, s]))],
                            h_user[(b, int(sched[b, s]))][b][
                                NoiseCovariance(q_user[(b, int(sched[b, s]))], sigma2)
                                .included_rows()
                            ],
                        )
                        for s in range(S)
                    ]
                )
                v[b] = zf_transmit(h_eff, p_b)
            history.append(sum_rate)
            if sum_rate > best_sum:
                best_sum = sum_rate
                best = (dict(slot_ach), dict(slot_ideal))
            if prev_sum is not None and abs(sum_rate - prev_sum) <= (
                config.convergence_tol * max(prev_sum, 1e-300)
            ):
                converged = True
                iterations.append(it + 1)
                break
            prev_sum = sum_rate
        if capture:
            state["sum_history"].append(history)
        if not converged:
            iterations.append(config.max_iterations)
            all_converged = False
            slot_ach, slot_ideal = best

        if mode == "bench4":
            tx_final = TransmitBeamformers(v=v, scheduled=sched)
            for b, s, k in users:
                c_dir = direct_sinr_rate(b, k, channels, tx_final, sigma2)
                c_rel = [
                    relay_sinr_rate(m, b, k, channels, tx_final, sigma2)
                    for m in range(M - 1)
                ]
                se = multihop_rate(c_dir, c_rel)
                slot_ach[(b, k)] = se
                slot_ideal[(b, k)] = se
            if capture:
                state["tx"].append(tx_final)
        elif capture:
            state["tx"].append(TransmitBeamformers(v=v, scheduled=sched))

        for b, _, k in users:
            ach_se[b, k] = slot_ach[(b, k)]
            ideal_se[b, k] = slot_ideal[(b, k)]
            if mode == "bench4":
                se_time = slot_ach[(b, k)]  # no D2D time overhead by assumption
                ideal_time = se_time
            else:
                se_time = time_shared_rate(slot_ach[(b, k)], config.t_c_s, t_d_rate)
                ideal_time = time_shared_rate(slot_ideal[(b, k)], config.t_c_s, t_d_rate)
            sched_bps[b, k] = scheduled_rate(se_time, S, K) * config.b_c_hz
            ideal_sched_bps[b, k] = scheduled_rate(ideal_time, S, K) * config.b_c_hz
            if capture:
                state["u"][(b, k)] = u_user[(b, k)].copy()
                state["q"][(b, k)] = q_user[(b, k)].copy()
                if (b, k) in obs_user:
                    state["obs"][(b, k)] = obs_user[(b, k)]

    return TrialResult(
        scheme=mode,
        scheduled_rate_bps=sched_bps,
        achievable_se=ach_se,
        ideal_se=ideal_se,
        ideal_scheduled_rate_bps=ideal_sched_bps,
        iterations=iterations,
        converged=all_converged,
        state=state,
    )


def run_algorithm1(
    config: SystemConfig,
    channels: ChannelSet,
    sets: np.ndarray,
    rng: np.random.Generator,
    capture: bool = False,
) -> TrialResult:
    """Run the proposed joint beamforming + D2D allocation on one trial."""
    return _run_pipeline(config, channels, sets, rng, "proposed", capture)


def run_benchmark(
    scheme: int,
    config: SystemConfig,
    channels: ChannelSet,
    sets: np.ndarray,
    rng: np.random.Generator,
    capture: bool = False,
) -> TrialResult:
    """Run benchmark scheme 1 (no cooperation), 2 (ideal), 3 (equal split)
    or 4 (multi-hop) on one trial."""
    if scheme not in (1, 2, 3, 4):
        raise ConfigurationError(f"benchmark scheme must be 1..4 (got {scheme})")
    return _run_pipeline(config, channels, sets, rng, f"bench{scheme}", capture)


def _trial_streams(config: SystemConfig, trial: int, attempt: int):
    """Independent per-trial generators, re-derivable from the master seed."""
    topo_key = (0, 0) if config.freeze_topology else (trial, attempt)
    make = lambda key: np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=key)
    )
    return (
        make((*topo_key, 0)),  # topology
        make((trial, attempt, 1)),  # channels
        make((trial, attempt, 2)),  # scheduling
        make((trial, attempt, 3)),  # beamformer init
    )


def run_trial(config: SystemConfig, trial: int, capture: bool = False) -> TrialResult:
    """One full trial: topology, channels, schedule, scheme engine.

    Clustering or beamforming failures redraw the trial (fresh sub-streams)
    up to 3 times; the redraw count is recorded on the result.
    """
    layout = build_wraparound_layout(
        config.num_cells, config.cell_radius_m, config.inter_cell_distance_m
    )
    mode = "bench2" if config.scheme == "adjusted-bench2" else config.scheme
    last_err = None
    for attempt in range(_REDRAW_ATTEMPTS):
        rng_topo, rng_chan, rng_sched, rng_init = _trial_streams(config, trial, attempt)
        try:
            drop = drop_users(layout, config.users_per_cell, config.relay_pool_per_cell, rng_topo)
            clusters = form_clusters(
                drop, layout, config.d_max_m, config.receive_antennas - 1, rng_topo
            )
            channels = build_channel_set(
                layout,
                clusters,
                config.budget,
                config.bs_antennas,
                config.p_d_dbm,
                config.b_d_hz,
                rng_chan,
            )
            sets = np.stack(
                [
                    generate_schedule_sets(
                        config.users_per_cell, config.scheduled_per_slot, rng_sched
                    )
                    for _ in range(config.num_cells)
                ]
            )
            result = _run_pipeline(config, channels, sets, rng_init, mode, capture)
        except (ClusteringError, BeamformingError) as err:
            last_err = err
            continue
        if config.scheme == "adjusted-bench2":
            factor = config.t_c_s / (config.t_c_s + config.t_d_s)
            result.scheduled_rate_bps = result.scheduled_rate_bps * factor
            result.ideal_scheduled_rate_bps = result.ideal_scheduled_rate_bps * factor
            result.scheme = "adjusted-bench2"
        result.channel_checksum = channels.checksum()
        result.redraws = attempt
        return result
    raise RuntimeError(
        f"trial {trial} failed after {_REDRAW_ATTEMPTS} attempts: {last_err}"
    )


def _trial_worker(args) -> TrialResult:
    config, trial = args
    return run_trial(config, trial)


def monte_carlo(config: SystemConfig) -> MonteCarloReport:
    """Average per-user rates over independent trials and build the CDF.

    Deterministic for a fixed seed regardless of worker count: every trial
    derives its random streams from (seed, trial index) alone, and results
    are merged in trial order.
    """
    config.validate()
    T = config.trials
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_trial_worker, [(config, t) for t in range(T)]))
    else:
        results = [run_trial(config, t) for t in range(T)]

    rates = np.stack([r.scheduled_rate_bps for r in results])
    ideal = np.stack([r.ideal_scheduled_rate_bps for r in results])
    user_mean = rates.mean(axis=0)
    sample = np.sort(user_mean.ravel()) / 1e6
    iters = np.concatenate([np.asarray(r.iterations, dtype=float) for r in results])
    return MonteCarloReport(
        scheme=config.scheme,
        trials=T,
        user_mean_rate_bps=user_mean,
        cdf_sample_mbps=sample,
        percentiles={p: nearest_rank_percentile(sample, p) for p in (10, 50)},
        trial_rates_bps=rates,
        ideal_trial_rates_bps=ideal,
        iterations_mean=float(iters.mean()),
        converged_fraction=float(np.mean([r.converged for r in results])),
        redraws=int(sum(r.redraws for r in results)),
        checksums=[r.channel_checksum for r in results],
    )
