"""Stochastic channel generation and link budgets.

Cellular (microwave) links combine distance path loss, i.i.d. log-normal
shadowing, and unit-power Rayleigh small-scale fading. D2D (mmWave) links are
line-of-sight with Nakagami-m power fading. All powers are in mW, all antenna
gains in dB, all rates base-2.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .topology import Cluster, HexLayout, wrap_distance

LN2 = np.log(2.0)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (np.asarray(x_db) / 10.0)


def dbm_to_mw(x_dbm: float) -> float:
    return 10.0 ** (np.asarray(x_dbm) / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    """Scalar propagation parameters for both radio interfaces."""

    cellular_pl_intercept_db: float = 128.1
    cellular_pl_slope_db: float = 37.6  # per decade, distance in km
    d2d_pl_intercept_db: float = 69.7
    d2d_pl_slope_db: float = 24.0  # per decade, distance in m
    shadowing_sigma_db: float = 8.0
    bs_antenna_gain_dbi: float = 15.0
    d2d_antenna_gain_dbi: float = 27.0
    nakagami_shape: float = 4.0
    noise_psd_dbm_hz: float = -169.0

    def validate(self) -> None:
        from .errors import ConfigurationError

        if self.cellular_pl_slope_db <= 0 or self.d2d_pl_slope_db <= 0:
            raise ConfigurationError("path-loss slopes must be positive")
        if self.shadowing_sigma_db < 0:
            raise ConfigurationError("shadowing_sigma_db must be >= 0")
        if self.nakagami_shape < 0.5:
            raise ConfigurationError("nakagami_shape must be >= 0.5")


@dataclass(frozen=True)
class ChannelSet:
    """All per-trial channel state.

    ``cellular[i, b, k]`` is the M x L matrix from BS ``i`` to the cluster of
    user ``(b, k)``: rows ``0..M-2`` are the relay channels in cluster order
    and row ``M-1`` is the direct channel. ``d2d_capacity[b, k, m]`` is the
    spectral efficiency (bit/s/Hz) of the D2D link from relay ``m`` to its
    user, and ``d2d_gain`` the corresponding linear power gain.
    """

    cellular: np.ndarray  # (N, N, K, M, L) complex
    d2d_capacity: np.ndarray  # (N, K, M-1)
    d2d_gain: np.ndarray  # (N, K, M-1)

    @property
    def num_rx(self) -> int:
        return self.cellular.shape[3]

    def checksum(self) -> str:
        """Stable digest of the drawn channels (common-random-number audits)."""
        h = hashlib.sha256()
        for arr in (self.cellular, self.d2d_capacity, self.d2d_gain):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def cellular_pathloss_db(
    d_km: float, intercept_db: float = 128.1, slope_db: float = 37.6
) -> float:
    """Macro-cell path loss in dB at distance ``d_km`` kilometers."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("cellular path loss requires distance > 0")
    out = intercept_db + slope_db * np.log10(d)
    return float(out) if out.ndim == 0 else out


def d2d_pathloss_db(d_m: float, intercept_db: float = 69.7, slope_db: float = 24.0) -> float:
    """Line-of-sight mmWave path loss in dB; distances below 1 m clamp to 1 m."""
    d = np.maximum(np.asarray(d_m, dtype=float), 1.0)
    out = intercept_db + slope_db * np.log10(d)
    return float(out) if out.ndim == 0 else out


def draw_cellular_channel(
    pl_db: float,
    gains_db: float,
    shadowing_sigma_db: float,
    L: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """One cellular link: length-L Rayleigh vector scaled by the link budget.

    The large-scale power gain is ``-pl_db + gains_db + X`` dB with
    ``X ~ Normal(0, sigma^2)`` drawn once per link.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    shadow = rng.normal(0.0, shadowing_sigma_db)
    amp = np.sqrt(db_to_linear(-pl_db + gains_db + shadow) / 2.0)
    return amp * (rng.standard_normal(L) + 1j * rng.standard_normal(L))


def draw_d2d_gain(
    pl_db: float, gain_db: float, shape: float, rng: np.random.Generator
) -> float:
    """Linear power gain of one D2D link with unit-mean Nakagami-m fading."""
    if shape < 0.5:
        raise ValueError("Nakagami shape must be >= 0.5")
    omega = db_to_linear(-pl_db + gain_db)
    return float(omega * rng.gamma(shape, 1.0 / shape))


def d2d_capacity(
    p_d_dbm: float, gain: float, b_d_hz: float, noise_psd_dbm_hz: float
) -> float:
    """Shannon spectral efficiency (bit/s/Hz) of a D2D link."""
    if b_d_hz <= 0:
        raise ValueError("b_d_hz must be positive")
    snr = dbm_to_mw(p_d_dbm) * gain / (dbm_to_mw(noise_psd_dbm_hz) * b_d_hz)
    return float(np.log2(1.0 + snr))


def assemble_equivalent_channel(direct: np.ndarray, relays: list) -> np.ndarray:
    """Stack relay rows (cluster order) over the direct row into an M x L matrix."""
    direct = np.asarray(direct)
    rows = [np.asarray(r) for r in relays] + [direct]
    L = direct.shape[-1]
    for r in rows:
        if r.shape != (L,):
            raise ValueError(f"all channel vectors must have shape ({L},), got {r.shape}")
    return np.vstack(rows)


def check_reuse_margin(
    cell_radius_m: float,
    p_d_dbm: float,
    budget: LinkBudget,
    b_d_hz: float,
    reuse_geometry_factor: float = 4.0,
    interference_gain_db: float = 15.0,
) -> tuple[float, bool]:
    """Cross-cluster D2D interference check for the 9-color frequency reuse.

    The closest co-channel cluster sits at ``reuse_geometry_factor`` times the
    cell radius. ``interference_gain_db`` is the effective antenna gain on the
    interfering path; the default models partial sidelobe alignment of the
    directional D2D antennas (full mainlobe alignment would be 27 dBi, perfect
    misalignment 0 dBi). Returns the interference-to-noise power ratio and a
    flag that is True when the ratio stays within 5% of the noise floor.
    """
    if cell_radius_m <= 0:
        raise ValueError("cell_radius_m must be positive")
    d_min = reuse_geometry_factor * cell_radius_m
    pl = d2d_pathloss_db(d_min, budget.d2d_pl_intercept_db, budget.d2d_pl_slope_db)
    rx_dbm = p_d_dbm + interference_gain_db - pl
    noise_mw = dbm_to_mw(budget.noise_psd_dbm_hz) * b_d_hz
    ratio = float(dbm_to_mw(rx_dbm) / noise_mw)
    return ratio, ratio <= 0.05


def build_channel_set(
    layout: HexLayout,
    clusters: list[Cluster],
    budget: LinkBudget,
    L: int,
    p_d_dbm: float,
    b_d_hz: float,
    rng: np.random.Generator,
) -> ChannelSet:
    """Draw every cellular and D2D channel for one trial.

    Draw order is fixed (cluster-major, then BS, then member; D2D links last
    per cluster) so a seeded generator reproduces the set bit-exactly.
    """
    N = layout.num_cells
    K = len(clusters) // N
    M = len(clusters[0].relay_ids) + 1
    cellular = np.empty((N, N, K, M, L), dtype=complex)
    cap = np.empty((N, K, M - 1))
    gain = np.empty((N, K, M - 1))

    for cl in clusters:
        members = (
            np.vstack([cl.relay_positions, cl.owner_position])
            if M > 1
            else cl.owner_position[None, :]
        )
        for i in range(N):
            d_km = wrap_distance(layout.cell_centers[i], members, layout) / 1000.0
            pl = cellular_pathloss_db(
                np.atleast_1d(d_km),
                budget.cellular_pl_intercept_db,
                budget.cellular_pl_slope_db,
            )
            for m in range(M):
                cellular[i, cl.cell, cl.user, m] = draw_cellular_channel(
                    pl[m],
                    budget.bs_antenna_gain_dbi,
                    budget.shadowing_sigma_db,
                    L,
                    rng,
                )
        for m in range(M - 1):
            d_m = wrap_distance(cl.owner_position, cl.relay_positions[m], layout)
            pl_d2d = d2d_pathloss_db(
                d_m, budget.d2d_pl_intercept_db, budget.d2d_pl_slope_db
            )
            g = draw_d2d_gain(
                pl_d2d, budget.d2d_antenna_gain_dbi, budget.nakagami_shape, rng
            )
            gain[cl.cell, cl.user, m] = g
            cap[cl.cell, cl.user, m] = d2d_capacity(
                p_d_dbm, g, b_d_hz, budget.noise_psd_dbm_hz
            )

    return ChannelSet(cellular=cellular, d2d_capacity=cap, d2d_gain=gain)
