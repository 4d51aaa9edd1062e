"""Receive (MMSE) and transmit (zero-forcing) beamformer computation.

Conventions match the signal model: a beam v produces h^T v at an antenna
with channel row h, receive combining applies u^* to the stacked observation,
and the effective downlink channel of a combining user is (u^* H)^T.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .errors import BeamformingError, ConfigurationError

_MAX_COND = 1e12


@dataclass
class TransmitBeamformers:
    """Per-BS L x S beamformer matrices plus the users the columns serve."""

    v: np.ndarray  # (N, L, S) complex
    scheduled: np.ndarray  # (N, S) int, user index served by each column


@dataclass
class NoiseCovariance:
    """Diagonal quantization noise at the relays plus thermal noise.

    ``q[m] = np.inf`` marks relay ``m`` as excluded: its row must be removed
    from the equivalent model instead of carrying infinite variance.
    """

    q: np.ndarray  # (M-1,)
    sigma2: float

    def included_rows(self) -> np.ndarray:
        """Row indices kept in the M-row equivalent model (direct row last)."""
        keep = np.flatnonzero(np.isfinite(self.q))
        return np.append(keep, len(self.q))


def interference_covariance(
    cell: int,
    user: int,
    channels: ChannelSet,
    tx: TransmitBeamformers,
    noise: NoiseCovariance,
) -> np.ndarray:
    """Interference-plus-noise covariance J for one scheduled user.

    Sums every active beam except the user's own (intra-cell j != k plus all
    other-cell beams), adds thermal noise and the quantization diagonal.
    Rows of excluded relays are removed coherently.
    """
    rows = noise.included_rows()
    H = channels.cellular[:, cell, user][:, rows, :]  # (N, Mr, L)
    t_all = np.einsum("nml,nls->nms", H, tx.v)  # h^T v for every beam
    J = np.einsum("nms,nps->mp", t_all, t_all.conj())
    own_col = int(np.flatnonzero(tx.scheduled[cell] == user)[0])
    t_own = t_all[cell, :, own_col]
    J -= np.outer(t_own, t_own.conj())
    Mr = len(rows)
    J += noise.sigma2 * np.eye(Mr)
    diag = np.append(noise.q[rows[:-1]], 0.0)
    J += np.diag(diag)
    if not np.all(np.isfinite(J)):
        raise np.linalg.LinAlgError("non-finite interference covariance")
    return J


def mmse_receiver(h_serving: np.ndarray, v_own: np.ndarray, J: np.ndarray) -> np.ndarray:
    """MMSE receive beamformer u = J^-1 H v."""
    return np.linalg.solve(J, h_serving @ v_own)


def effective_channel(u: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Equivalent downlink channel seen through the combiner: (u^* H)^T."""
    return u.conj() @ H


def zf_transmit(h_eff: np.ndarray, p_b: float) -> np.ndarray:
    """Zero-forcing transmit beamformers from stacked effective channels.

    ``h_eff`` is S x L (one row per scheduled user). The pseudo-inverse
    nulls intra-cell interference; every column is then scaled to power
    P_B / S so the BS budget is met with equality.
    """
    h_eff = np.asarray(h_eff)
    S, L = h_eff.shape
    if S > L:
        raise BeamformingError(f"cannot zero-force {S} users with {L} antennas")
    # Row scaling only rescales pseudo-inverse columns, which the power
    # normalization removes; normalizing rows first keeps the conditioning
    # check about direction geometry, not path-loss spread.
    row_norms = np.linalg.norm(h_eff, axis=1)
    if np.any(row_norms == 0.0):
        raise BeamformingError("zero effective channel row")
    h_unit = h_eff / row_norms[:, None]
    gram = h_unit @ h_unit.conj().T
    if np.linalg.cond(gram) > _MAX_COND:
        raise BeamformingError("rank-deficient effective channel matrix")
    v = h_unit.conj().T @ np.linalg.inv(gram)
    norms = np.linalg.norm(v, axis=0)
    return v * (np.sqrt(p_b / S) / norms)


def init_transmit_beamformers(
    L: int, S: int, p_b: float, rng: np.random.Generator
) -> np.ndarray:
    """Random mutually orthogonal columns, each with squared norm P_B / S."""
    if S > L:
        raise ConfigurationError(f"scheduled users per slot ({S}) must not exceed antennas ({L})")
    q, _ = np.linalg.qr(rng.standard_normal((L, S)))
    return (np.sqrt(p_b / S) * q).astype(complex)
