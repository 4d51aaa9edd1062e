"""Per-user rate computations for the cooperative scheme and the benchmarks."""

import numpy as np

from .beamforming import TransmitBeamformers
from .channel import ChannelSet


def achievable_rate(v: np.ndarray, H: np.ndarray, J: np.ndarray) -> float:
    """MMSE-combining spectral efficiency log2(1 + v* H* J^-1 H v)."""
    hv = H @ v
    sinr = float(np.real(hv.conj() @ np.linalg.solve(J, hv)))
    return float(np.log2(1.0 + max(sinr, 0.0)))


def time_shared_rate(r_tilde: float, t_c: float, t_d: float) -> float:
    """Discount for the D2D forwarding phase: r * t_c / (t_d + t_c)."""
    if t_c <= 0 or t_d < 0:
        raise ValueError("t_c must be positive and t_d nonnegative")
    return r_tilde * t_c / (t_d + t_c)


def scheduled_rate(r: float, S: int, K: int) -> float:
    """Long-term rate under round-robin scheduling of S out of K users."""
    if not 1 <= S <= K:
        raise ValueError("need 1 <= S <= K")
    return r * S / K


def _row_sinr_rate(
    h_rows: np.ndarray, cell: int, user: int, tx: TransmitBeamformers, sigma2: float
) -> float:
    """SINR rate on a single receive antenna with channel row ``h_rows[i]`` per BS i."""
    z = np.einsum("nl,nls->ns", h_rows, tx.v)
    own_col = int(np.flatnonzero(tx.scheduled[cell] == user)[0])
    signal = np.abs(z[cell, own_col]) ** 2
    interference = np.sum(np.abs(z) ** 2) - signal
    return float(np.log2(1.0 + signal / (interference + sigma2)))


def direct_sinr_rate(
    cell: int, user: int, channels: ChannelSet, tx: TransmitBeamformers, sigma2: float
) -> float:
    """Single-antenna rate on the direct BS-to-user channel, treating all other
    beams (intra-cell and every other cell) as interference."""
    h = channels.cellular[:, cell, user, -1]
    return _row_sinr_rate(h, cell, user, tx, sigma2)


def relay_sinr_rate(
    m: int,
    cell: int,
    user: int,
    channels: ChannelSet,
    tx: TransmitBeamformers,
    sigma2: float,
) -> float:
    """Same as :func:`direct_sinr_rate` but evaluated at relay ``m``'s antenna."""
    h = channels.cellular[:, cell, user, m]
    return _row_sinr_rate(h, cell, user, tx, sigma2)


def multihop_rate(c_direct: float, c_relays: list[float]) -> float:
    """Decode-and-forward benchmark: best single link within the cluster."""
    return max([c_direct, *c_relays])
